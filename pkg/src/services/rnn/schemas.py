"""
RNN Pydantic schemas.
"""
from typing import List, Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from src.shared.schemas import ArraySchema, FrozenSchema, NUM_FEATURES
from src.services.clustering.schemas import ClusterModel
from src.services.dataset.schemas import ScalerParams
from src.services.locality.schemas import FeatureParams

# Row blocks of the stacked gate matrices
GATES = ("i", "f", "o", "c")


class LstmLayerParams(ArraySchema):
    """
    One LSTM layer. The four gate matrices over [x_t, h_{t-1}] are stacked
    row-wise in the order input, forget, output, candidate.
    """
    weights: np.ndarray = Field(..., description="(4*width, in_dim + width)")
    bias: np.ndarray = Field(..., description="(4*width,)")
    in_dim: int = Field(..., ge=1)
    width: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_shapes(self) -> "LstmLayerParams":
        expected = (4 * self.width, self.in_dim + self.width)
        if self.weights.shape != expected:
            raise ValueError(f"weights shape {self.weights.shape}, expected {expected}")
        if self.bias.shape != (4 * self.width,):
            raise ValueError(f"bias shape {self.bias.shape}, expected {(4 * self.width,)}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("LSTM parameters must be finite")
        return self

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """(W, b) of one gate; views into the stacked arrays."""
        k = GATES.index(name)
        rows = slice(k * self.width, (k + 1) * self.width)
        return self.weights[rows], self.bias[rows]


class ModelParams(ArraySchema):
    """Stacked LSTM layers and a dense head producing one value."""
    layers: List[LstmLayerParams] = Field(..., min_length=1)
    dense_w: np.ndarray = Field(..., description="(1, width)")
    dense_b: np.ndarray = Field(..., description="(1,)")
    width: int = Field(..., ge=1)
    seq_len: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_layers(self) -> "ModelParams":
        for index, layer in enumerate(self.layers):
            expected = NUM_FEATURES if index == 0 else self.width
            if layer.in_dim != expected or layer.width != self.width:
                raise ValueError(f"layer {index} has in_dim {layer.in_dim}, expected {expected}")
        if self.dense_w.shape != (1, self.width) or self.dense_b.shape != (1,):
            raise ValueError("dense head must be (1, width) and (1,)")
        return self

    def arrays(self) -> List[np.ndarray]:
        """Every trainable array in a fixed order (updated in place)."""
        out: List[np.ndarray] = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        out.extend([self.dense_w, self.dense_b])
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            layers=[
                LstmLayerParams(
                    weights=layer.weights.copy(),
                    bias=layer.bias.copy(),
                    in_dim=layer.in_dim,
                    width=layer.width,
                )
                for layer in self.layers
            ],
            dense_w=self.dense_w.copy(),
            dense_b=self.dense_b.copy(),
            width=self.width,
            seq_len=self.seq_len,
        )


class TrainConfig(FrozenSchema):
    """Hyperparameters of one training run."""
    epochs: int = Field(default=1000, ge=1)
    learning_rate: float = Field(default=0.001, ge=0.0)
    batch_size: int = Field(default=32, ge=1)
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0)
    seed: int = Field(default=42, ge=0)
    patience: int = Field(default=20, ge=1)
    lstm_width: int = Field(default=256, ge=1)
    lstm_layers: int = Field(default=2, ge=1)
    clip_norm: float = Field(default=5.0, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)


class EpochRecord(FrozenSchema):
    epoch: int = Field(..., ge=1)
    train_mse: float
    val_mse: float


class Checkpoint(ArraySchema):
    """Everything needed to predict forward reuse distances on a new trace."""
    params: ModelParams
    scaler: ScalerParams
    cluster_model: ClusterModel
    feature_params: FeatureParams = Field(default_factory=FeatureParams)
    config: TrainConfig
    history: List[EpochRecord] = Field(default_factory=list)
    best_epoch: int = Field(default=0, ge=0)

    @property
    def best_val_mse(self) -> Optional[float]:
        if not self.history or self.best_epoch == 0:
            return None
        return self.history[self.best_epoch - 1].val_mse


class EvaluationReport(FrozenSchema):
    """Prediction quality on a dataset split."""
    samples: int = Field(..., ge=0)
    mse: float = Field(..., ge=0.0, description="MSE on scaled targets")
    accuracy: float = Field(..., ge=0.0, le=1.0, description="Exact decoded forward-RD matches")
    inf_recall: Optional[float] = Field(default=None, description="Share of INF truths predicted INF")

    @field_validator("mse")
    @classmethod
    def check_mse(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("mse must be finite")
        return value
