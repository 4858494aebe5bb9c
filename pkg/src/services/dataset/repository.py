"""
Dataset file storage ("RLDS" container).
"""
from pathlib import Path

import numpy as np

from src.shared import container
from src.shared.exceptions import ArtifactFormatError
from src.shared.logging import get_logger
from src.services.clustering.schemas import ClusterModel
from .schemas import Dataset, ScalerParams

logger = get_logger(__name__)

MAGIC = b"RLDS"
VERSION = 1


def dumps(dataset: Dataset) -> bytes:
    header = {
        "sequence_length": dataset.sequence_length,
        "scaler": dataset.scaler.model_dump(mode="json"),
        "cluster_model": dataset.cluster_model.model_dump(mode="json"),
        "dims": list(dataset.features.shape),
    }
    arrays = [
        dataset.features.astype(np.float32),
        dataset.targets.astype(np.float32),
        dataset.origin_times.astype(np.int64),
    ]
    return container.pack(MAGIC, VERSION, header, arrays)


def loads(data: bytes) -> Dataset:
    _, header, arrays = container.unpack(data, MAGIC, VERSION)
    if len(arrays) != 3:
        raise ArtifactFormatError("dataset container must hold 3 arrays")
    features, targets, origin_times = arrays
    try:
        return Dataset(
            features=features,
            targets=targets,
            origin_times=origin_times,
            sequence_length=header["sequence_length"],
            scaler=ScalerParams.model_validate(header["scaler"]),
            cluster_model=ClusterModel.model_validate(header["cluster_model"]),
        )
    except (KeyError, ValueError) as e:
        raise ArtifactFormatError(f"invalid dataset: {e}")


def save(dataset: Dataset, path: Path) -> None:
    """Write a dataset file."""
    container.write_file(path, dumps(dataset))
    logger.info("Dataset saved", path=str(path), samples=len(dataset))


def load(path: Path) -> Dataset:
    """Read a dataset file written by save()."""
    dataset = loads(container.read_file(path))
    logger.info("Dataset loaded", path=str(path), samples=len(dataset))
    return dataset
