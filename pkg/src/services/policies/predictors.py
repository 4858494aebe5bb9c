"""
Forward reuse distance predictors for prediction-driven eviction.
"""
from typing import List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.shared.exceptions import PredictorError
from src.shared.logging import get_logger
from src.shared.schemas import INF, NUM_FEATURES
from src.services.trace_io.schemas import Trace
from src.services.locality.service import forward_rd
from src.services.dataset.service import build_feature_matrix, scale_features
from src.services.rnn.schemas import Checkpoint
from src.services.rnn.service import predict_batch, predict_frd

logger = get_logger(__name__)


class OracleForwardRdPredictor:
    """True forward reuse distances of a known trace."""

    sequence_length: Optional[int] = None

    def __init__(self, trace: Trace):
        self._frd = forward_rd(trace)

    def predict(self, index: int, window: Optional[np.ndarray]) -> float:
        return self._frd[index]


class ConstantPredictor:
    """The same forward reuse distance for every access."""

    sequence_length: Optional[int] = None

    def __init__(self, value: float = INF):
        self.value = value

    def predict(self, index: int, window: Optional[np.ndarray]) -> float:
        return self.value


class LstmPredictor:
    """Per-access inference on the online feature window."""

    def __init__(self, checkpoint: Checkpoint):
        self.checkpoint = checkpoint
        self.sequence_length: Optional[int] = checkpoint.params.seq_len

    def predict(self, index: int, window: Optional[np.ndarray]) -> float:
        if window is None:
            raise PredictorError("LSTM predictor needs a feature window", index=index)
        return predict_frd(self.checkpoint, window)


class PrecomputedPredictor:
    """Replays predictions computed ahead of time, by access index."""

    sequence_length: Optional[int] = None

    def __init__(self, predictions: Sequence[float]):
        self.predictions: List[float] = list(predictions)

    def predict(self, index: int, window: Optional[np.ndarray]) -> float:
        if index >= len(self.predictions):
            raise PredictorError(
                f"no prediction for access {index} ({len(self.predictions)} available)",
                index=index,
            )
        return self.predictions[index]

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, trace: Trace) -> "PrecomputedPredictor":
        """
        Batch inference over every access of a trace, with the same
        zero-padded windows LstmPredictor sees online.
        """
        length = checkpoint.params.seq_len
        features = build_feature_matrix(
            trace,
            checkpoint.feature_params.k_avg,
            checkpoint.feature_params.k_freq,
            checkpoint.cluster_model,
        )
        scaled = scale_features(features, checkpoint.scaler)
        padded = np.vstack([np.zeros((length - 1, NUM_FEATURES)), scaled])
        windows = sliding_window_view(padded, length, axis=0).transpose(0, 2, 1)
        predictions = predict_batch(checkpoint, windows)
        logger.info("Predictions precomputed", accesses=len(predictions))
        return cls(predictions)
