"""
Run configuration shared by every command.

Settings come from (highest priority first) command-line flags, ``RL_*``
environment variables, a flat ``key=value`` config file, and defaults.
"""
from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple, Type

from pydantic import (
    Field,
    ValidationError as PydanticValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import (
    BaseSettings,
    DotEnvSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from .exceptions import NotFoundError, ValidationError
from .schemas import PolicyName, TraceFormat


class RunConfig(BaseSettings):
    """Settings for one pipeline run."""

    model_config = SettingsConfigDict(
        env_prefix="RL_",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        use_enum_values=True,
    )

    # Trace input
    trace_path: Optional[Path] = Field(default=None, description="Trace file")
    trace_format: TraceFormat = Field(default=TraceFormat.PLAIN, description="Trace file format")
    block_size: int = Field(default=4096, gt=0, description="Block size in bytes")
    expand_multiblock: bool = Field(
        default=False, description="Expand multi-block MSR requests into consecutive blocks"
    )

    # Features
    k_avg: int = Field(default=100, ge=1, description="Window for average reuse distance")
    k_freq: int = Field(default=50, ge=1, description="Window for access frequency")
    sequence_length: int = Field(default=8, ge=1, description="Feature vectors per sample")
    k_min: int = Field(default=2, ge=1, description="Smallest cluster count tried")
    k_max: int = Field(default=16, ge=1, description="Largest cluster count tried")

    # Dataset split
    train_ratio: float = Field(default=0.8, gt=0.0, lt=1.0, description="Train pool fraction")
    train_take: int = Field(default=0, ge=0, description="Training samples used (0 = whole pool)")
    val_take: int = Field(default=0, ge=0, description="Validation samples used (0 = whole pool)")

    # Model and training
    lstm_width: int = Field(default=256, ge=1, description="LSTM width")
    lstm_layers: int = Field(default=2, ge=1, description="Number of LSTM layers")
    epochs: int = Field(default=1000, ge=1, description="Maximum training epochs")
    learning_rate: float = Field(default=0.001, ge=0.0, description="Adam learning rate")
    batch_size: int = Field(default=32, ge=1, description="Mini-batch size")
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0, description="Inter-layer dropout")
    patience: int = Field(default=20, ge=1, description="Early-stop patience in epochs")
    clip_norm: float = Field(default=5.0, gt=0.0, description="Gradient norm clip")

    # Simulation
    policies: str = Field(
        default="lru,lfu,2q,arc,opt,popt", description="Comma-separated policy list"
    )
    cache_sizes: str = Field(
        default="", description="Comma-separated cache sizes in blocks (empty = automatic)"
    )
    mrc_points: int = Field(default=8, ge=1, description="Points of the automatic size sweep")
    predictor: Literal["lstm", "oracle"] = Field(
        default="lstm", description="Forward reuse distance source for popt"
    )

    # Output
    out_dir: Path = Field(default=Path("out"), description="Output directory")
    svg: bool = Field(default=True, description="Emit SVG charts")
    seed: int = Field(default=42, ge=0, description="Seed for every random choice")
    debug: bool = Field(default=False, description="Debug logging and per-access assertions")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        """Read the config file without the environment prefix."""
        config_file = DotEnvSettingsSource(
            settings_cls,
            env_file=getattr(dotenv_settings, "env_file", None),
            case_sensitive=False,
            env_prefix="",
        )
        return init_settings, env_settings, config_file

    @field_validator("policies")
    @classmethod
    def check_policies(cls, value: str) -> str:
        names = [item.strip().lower() for item in value.split(",") if item.strip()]
        valid = {policy.value for policy in PolicyName}
        unknown = [name for name in names if name not in valid]
        if unknown:
            raise ValueError(f"unknown policies: {', '.join(unknown)}")
        return ",".join(names)

    @field_validator("cache_sizes")
    @classmethod
    def check_cache_sizes(cls, value: str) -> str:
        items = [item.strip() for item in value.split(",") if item.strip()]
        if not all(item.isdigit() and int(item) >= 1 for item in items):
            raise ValueError("cache sizes must be positive integers")
        return ",".join(items)

    @model_validator(mode="after")
    def check_ranges(self) -> "RunConfig":
        if self.k_min > self.k_max:
            raise ValueError("k_min must not exceed k_max")
        return self

    @property
    def policy_list(self) -> List[PolicyName]:
        """Parsed policy names, in the configured order."""
        return [PolicyName(name) for name in self.policies.split(",") if name]

    @property
    def cache_size_list(self) -> List[int]:
        """Parsed cache sizes in blocks, ascending and unique."""
        return sorted({int(item) for item in self.cache_sizes.split(",") if item})

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / "dataset.rlds"

    @property
    def checkpoint_path(self) -> Path:
        return self.out_dir / "model.rlck"


def load_config(config_path: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """Build a RunConfig from an optional config file and flag overrides."""
    if config_path is not None and not Path(config_path).is_file():
        raise NotFoundError(f"Config file not found: {config_path}")

    flags = {key: value for key, value in overrides.items() if value is not None}
    try:
        return RunConfig(_env_file=config_path, **flags)
    except PydanticValidationError as e:
        raise ValidationError(
            "Invalid configuration",
            details={"errors": [err["msg"] for err in e.errors()]},
        ) from e
