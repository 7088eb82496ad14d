"""
Run configuration: flat ``key = value`` files validated by pydantic.

Blank lines and ``#`` comments are ignored, keys may appear once, and unknown
keys are rejected. ``CLICKMODELS_OUTPUT_DIR`` supplies the output directory
when neither the command line nor the file names one.
"""
import math
import os
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .base import DEFAULT_MIN_LOG_PROB, ModelKind
from .errors import ConfigurationError
from .parameters import Compression
from .training import TrainConfig

RESOLVED_NAME = "config.resolved.conf"
DEFAULT_OUTPUT_DIR = "runs"
SHAREABLE = ("attraction", "examination", "satisfaction", "continuation")
# feature mode setting and the feature columns it reads, per role
FEATURE_SETTINGS = (
    ("feature_mode", "attraction_features"),
    ("examination_feature_mode", "examination_features"),
    ("satisfaction_feature_mode", "satisfaction_features"),
)


class FeatureMode(str, Enum):
    """Whether a parameter is looked up by id or rank, or computed from features."""
    IDS = "ids"
    FEATURES = "features"


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class RunConfig(BaseModel):
    """Every setting a command can read."""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    # model
    model: ModelKind = ModelKind.PBM
    positions: int = Field(10, ge=1)
    table_size: Optional[int] = Field(None, ge=1)
    satisfaction_size: Optional[int] = Field(None, ge=1)
    compression: Compression = Compression.NONE
    compression_ratio: float = Field(10.0, gt=0)
    remainder_size: int = Field(1000, ge=1)
    hash_seed: int = Field(0, ge=0, lt=2**64)
    baseline: bool = False
    feature_mode: FeatureMode = FeatureMode.IDS
    examination_feature_mode: FeatureMode = FeatureMode.IDS
    satisfaction_feature_mode: FeatureMode = FeatureMode.IDS
    feature_dim: int = Field(0, ge=0)
    attraction_features: List[int] = Field(default_factory=list)
    examination_features: List[int] = Field(default_factory=list)
    satisfaction_features: List[int] = Field(default_factory=list)
    min_log_prob: float = Field(DEFAULT_MIN_LOG_PROB, le=0)
    init_prob: float = Field(0.1, gt=0, lt=1)

    # mixture
    mixture_members: List[ModelKind] = Field(default_factory=list)
    mixture_temperature: float = Field(1.0, gt=0)
    mixture_shared: List[str] = Field(default_factory=list)

    # training
    learning_rate: float = Field(0.003, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    epochs: int = Field(100, ge=1)
    batch_size: int = Field(256, ge=1)
    patience: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    adam_beta1: float = Field(0.9, gt=0, lt=1)
    adam_beta2: float = Field(0.999, gt=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)

    # data
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    params_path: Optional[str] = None
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    max_positions: int = Field(25, ge=1)
    output_dir: Optional[str] = None

    # evaluation, EM, simulation and gradient checks
    metric_k: int = Field(10, ge=1)
    em_max_iters: int = Field(200, ge=1)
    em_tol: float = Field(1e-8, gt=0)
    n_sessions: int = Field(1000, ge=1)
    n_queries: int = Field(100, ge=1)
    randomize: bool = False
    gradcheck_batch_size: int = Field(4, ge=1)
    gradcheck_batches: int = Field(3, ge=1)

    @field_validator("mixture_members", "mixture_shared", "attraction_features",
                     "examination_features", "satisfaction_features", mode="before")
    @classmethod
    def _comma_list(cls, value):
        return _split_list(value)

    @field_validator("split", mode="before")
    @classmethod
    def _fractions(cls, value):
        return tuple(_split_list(value))

    @field_validator("split")
    @classmethod
    def _fractions_sum_to_one(cls, value):
        if any(f < 0 for f in value) or not math.isclose(sum(value), 1.0, abs_tol=1e-9):
            raise ValueError("split must be three non-negative fractions summing to 1")
        return value

    @field_validator("mixture_shared")
    @classmethod
    def _known_shared(cls, value):
        unknown = [name for name in value if name not in SHAREABLE]
        if unknown:
            raise ValueError(f"cannot share {', '.join(unknown)}; choose from {SHAREABLE}")
        return value

    @model_validator(mode="after")
    def _cross_field(self):
        if self.model == ModelKind.MIXTURE:
            if not self.mixture_members:
                raise ValueError("model MIXTURE needs mixture_members")
            if ModelKind.MIXTURE in self.mixture_members:
                raise ValueError("mixtures cannot be nested")
        for mode_name, columns_name in FEATURE_SETTINGS:
            columns = getattr(self, columns_name)
            if getattr(self, mode_name) != FeatureMode.FEATURES:
                if columns:
                    raise ValueError(f"{columns_name} needs {mode_name} = features")
                continue
            if self.feature_dim < 1:
                raise ValueError(f"{mode_name} features needs feature_dim >= 1")
            if any(c < 0 or c >= self.feature_dim for c in columns):
                raise ValueError(f"{columns_name} must index into feature_dim={self.feature_dim}")
        kinds = self.mixture_members if self.model == ModelKind.MIXTURE else [self.model]
        if ModelKind.UBM in kinds and self.examination_feature_mode == FeatureMode.FEATURES:
            raise ValueError("UBM examination depends on the last click and cannot use features")
        return self

    @property
    def uses_features(self) -> bool:
        """True when any parameter is computed from feature vectors."""
        return any(getattr(self, mode_name) == FeatureMode.FEATURES
                   for mode_name, _ in FEATURE_SETTINGS)

    def train_config(self) -> TrainConfig:
        """Optimizer settings."""
        return TrainConfig(**{name: getattr(self, name) for name in TrainConfig.model_fields})

    def resolve_output_dir(self, override: Optional[str] = None) -> Path:
        """Output directory: command line, then config, then environment."""
        load_dotenv()
        chosen = override or self.output_dir or os.getenv("CLICKMODELS_OUTPUT_DIR")
        return Path(chosen or DEFAULT_OUTPUT_DIR)


def parse_config_text(text: str) -> Dict[str, str]:
    """
    Parse flat ``key = value`` lines.

    Raises:
        ConfigurationError: On lines without ``=``, empty keys or duplicate keys
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {number}: empty key")
        if key in values:
            raise ConfigurationError(f"line {number}: duplicate key {key}")
        values[key] = value
    return values


def load_run_config(path=None, **overrides) -> RunConfig:
    """
    Read a config file and apply overrides (``None`` overrides are ignored).

    Raises:
        ConfigurationError: If the file cannot be read or parsed
        pydantic.ValidationError: If a value is invalid or a key is unknown
    """
    values: Dict[str, object] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as error:
            raise ConfigurationError(f"cannot read config {path}: {error}") from error
        values.update(parse_config_text(text))
    values.update({key: value for key, value in overrides.items() if value is not None})
    return RunConfig(**values)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(item) for item in value)
    return str(value)


def format_config(config: RunConfig) -> str:
    """Render every set field as ``key = value`` lines."""
    lines = []
    for name in RunConfig.model_fields:
        value = getattr(config, name)
        if value is None:
            continue
        lines.append(f"{name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def write_resolved(config: RunConfig, directory) -> Path:
    """Write ``config.resolved.conf`` into ``directory``."""
    path = Path(directory) / RESOLVED_NAME
    path.write_text(format_config(config), encoding="utf-8")
    return path
