"""
Checkpoint storage ("RLCK" container) and training/evaluation CSV exports.
"""
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from src.shared import container
from src.shared.exceptions import ArtifactFormatError
from src.shared.logging import get_logger
from src.shared.schemas import NUM_FEATURES
from src.services.clustering.schemas import ClusterModel
from src.services.dataset.schemas import ScalerParams
from src.services.locality.schemas import FeatureParams
from .schemas import Checkpoint, EpochRecord, LstmLayerParams, ModelParams, TrainConfig

logger = get_logger(__name__)

MAGIC = b"RLCK"
VERSION = 1


def dumps(checkpoint: Checkpoint) -> bytes:
    params = checkpoint.params
    header = {
        "width": params.width,
        "layers": len(params.layers),
        "seq_len": params.seq_len,
        "scaler": checkpoint.scaler.model_dump(mode="json"),
        "cluster_model": checkpoint.cluster_model.model_dump(mode="json"),
        "feature_params": checkpoint.feature_params.model_dump(mode="json"),
        "config": checkpoint.config.model_dump(mode="json"),
        "history": [record.model_dump(mode="json") for record in checkpoint.history],
        "best_epoch": checkpoint.best_epoch,
    }
    arrays = [np.asarray(a, dtype=np.float64) for a in params.arrays()]
    return container.pack(MAGIC, VERSION, header, arrays)


def loads(data: bytes) -> Checkpoint:
    _, header, arrays = container.unpack(data, MAGIC, VERSION)
    try:
        width = int(header["width"])
        layers = int(header["layers"])
        seq_len = int(header["seq_len"])
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactFormatError(f"checkpoint header is incomplete: {e}")
    if len(arrays) != 2 * layers + 2:
        raise ArtifactFormatError(
            f"checkpoint holds {len(arrays)} arrays, expected {2 * layers + 2}"
        )

    try:
        lstm_layers = [
            LstmLayerParams(
                weights=arrays[2 * index],
                bias=arrays[2 * index + 1],
                in_dim=NUM_FEATURES if index == 0 else width,
                width=width,
            )
            for index in range(layers)
        ]
        params = ModelParams(
            layers=lstm_layers,
            dense_w=arrays[-2],
            dense_b=arrays[-1],
            width=width,
            seq_len=seq_len,
        )
        return Checkpoint(
            params=params,
            scaler=ScalerParams.model_validate(header["scaler"]),
            cluster_model=ClusterModel.model_validate(header["cluster_model"]),
            feature_params=FeatureParams.model_validate(header["feature_params"]),
            config=TrainConfig.model_validate(header["config"]),
            history=[EpochRecord.model_validate(r) for r in header["history"]],
            best_epoch=header["best_epoch"],
        )
    except (KeyError, ValueError) as e:
        raise ArtifactFormatError(f"invalid checkpoint: {e}")


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    """Write a checkpoint file."""
    container.write_file(path, dumps(checkpoint))
    logger.info("Checkpoint saved", path=str(path), best_epoch=checkpoint.best_epoch)


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file written by save_checkpoint()."""
    checkpoint = loads(container.read_file(path))
    logger.info("Checkpoint loaded", path=str(path), width=checkpoint.params.width)
    return checkpoint


def write_history_csv(history: List[EpochRecord], path: Path) -> None:
    """Per-epoch losses as epoch,train_mse,val_mse."""
    frame = pd.DataFrame(
        [record.model_dump() for record in history],
        columns=["epoch", "train_mse", "val_mse"],
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def write_predictions_csv(frame: pd.DataFrame, path: Path) -> None:
    """Per-sample predictions as produced by evaluate()."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
