import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PrivateAttr, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from protosed.core.errors import ConfigError

DEFAULT_CACHE_DIR = ".protosed_cache"
# resampling changes how audio is read, not the features it yields
HASH_EXCLUDED = {"resample"}


class Settings(BaseSettings):
    """Process-level settings read from the environment / .env"""

    model_config = SettingsConfigDict(
        env_prefix="PROTOSED_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Feature cache location (PROTOSED_CACHE_DIR)
    CACHE_DIR: Optional[str] = None

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"
    LOG_TO_FILE: bool = False


settings = Settings()


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class FeatureConfig(_Section):
    sample_rate: int = Field(22050, gt=0)
    window_len: int = Field(1024, gt=0)
    hop: int = Field(256, gt=0)
    n_mels: int = Field(128, gt=0)
    fmin: float = Field(0.0, ge=0)
    fmax: Optional[float] = None
    pcen_s: float = Field(0.025, gt=0, le=1)
    pcen_alpha: float = Field(0.98, ge=0)
    pcen_delta: float = Field(2.0, ge=0)
    pcen_r: float = Field(0.5, gt=0)
    pcen_eps: float = Field(1e-6, gt=0)
    log_floor: float = Field(1e-10, gt=0)
    min_duration: float = Field(0.2, gt=0)
    resample: bool = False

    @model_validator(mode="after")
    def _check_window(self) -> "FeatureConfig":
        if self.hop > self.window_len:
            raise ValueError("hop must not exceed window_len")
        if self.min_duration * self.sample_rate < self.window_len:
            raise ValueError("min_duration must cover at least one STFT window")
        return self

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    @property
    def frame_dur(self) -> float:
        return self.hop / self.sample_rate


class ModelConfig(_Section):
    base_channels: int = Field(64, gt=0)
    reduction_rate: int = Field(4, gt=0)
    embedding_dim: int = Field(256, gt=0)
    leaky_slope: float = Field(0.01, ge=0)
    se_placement: Annotated[List[int], BeforeValidator(_split_list)] = [2, 3]
    attention: bool = True
    se_branches: Literal["both", "channel", "spatial"] = "both"
    bn_momentum: float = Field(0.1, gt=0, le=1)
    bn_eps: float = Field(1e-5, gt=0)

    @model_validator(mode="after")
    def _check_shape(self) -> "ModelConfig":
        if self.base_channels % self.reduction_rate:
            raise ValueError(
                f"reduction_rate {self.reduction_rate} must divide base_channels {self.base_channels}"
            )
        if len(self.se_placement) != 2 or len(set(self.se_placement)) != 2:
            raise ValueError("se_placement needs exactly 2 distinct BL indices")
        if any(index not in (1, 2, 3) for index in self.se_placement):
            raise ValueError("se_placement entries must be BL indices 1..3")
        return self


class TrainerConfig(_Section):
    lr: float = Field(0.001, ge=0)
    lr_decay: float = Field(0.65, gt=0)
    lr_step: int = Field(10, gt=0)
    n_way: int = Field(5, gt=0)
    k_shot: int = Field(5, gt=0)
    q_queries: int = Field(5, gt=0)
    episodes_per_epoch: int = Field(100, gt=0)
    max_epochs: int = Field(100, gt=0)
    patience: int = Field(10, gt=0)
    crop_dur: float = Field(0.4, gt=0)
    val_n_way: int = Field(3, gt=0)
    val_k_shot: int = Field(5, gt=0)
    val_q_queries: int = Field(5, gt=0)
    val_episodes: int = Field(20, gt=0)
    val_seed: int = 1234
    distance: Literal["euclidean", "squared"] = "euclidean"
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)


class DetectorConfig(_Section):
    n_shots: int = Field(5, gt=0)
    n_negatives: int = Field(5, gt=0)
    alpha: float = 0.5
    beta: float = 2.0
    threshold: float = 0.5
    alpha_grid: Annotated[List[float], BeforeValidator(_split_list)] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    threshold_grid: Annotated[List[float], BeforeValidator(_split_list)] = [round(0.05 * i, 2) for i in range(20)]
    min_window: float = Field(0.2, gt=0)
    merge_gap_frames: int = Field(0, ge=0)
    batch_size: int = Field(64, gt=0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "DetectorConfig":
        for alpha in [self.alpha, *self.alpha_grid]:
            if not 0 < alpha < self.beta:
                raise ValueError(f"alpha {alpha} must satisfy 0 < alpha < beta={self.beta}")
        for h in [self.threshold, *self.threshold_grid]:
            if not 0 <= h < 1:
                raise ValueError(f"threshold {h} must lie in [0, 1)")
        return self


class EvaluatorConfig(_Section):
    dtc: float = Field(0.5, gt=0, le=1)
    gtc: float = Field(0.5, gt=0, le=1)
    e_max: float = Field(100.0, gt=0)
    alpha_st: float = Field(0.0, ge=0)


class DataConfig(_Section):
    train_root: Optional[str] = None
    val_root: Optional[str] = None
    cache_dir: Optional[str] = None
    allow_partial: bool = False
    workers: int = Field(4, gt=0)


SECTIONS = ("feature", "model", "trainer", "detector", "evaluator", "data")


class RunConfig(BaseModel):
    """Every hyperparameter of a run, with per-key provenance"""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    feature: FeatureConfig = Field(default_factory=FeatureConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    evaluator: EvaluatorConfig = Field(default_factory=EvaluatorConfig)
    data: DataConfig = Field(default_factory=DataConfig)

    _provenance: Dict[str, str] = PrivateAttr(default_factory=dict)

    @property
    def provenance(self) -> Dict[str, str]:
        return dict(self._provenance)

    def to_flat(self) -> Dict[str, str]:
        """Flatten to `section.key` -> text, the on-disk representation"""
        flat = {"seed": str(self.seed)}
        for section in SECTIONS:
            for key, value in getattr(self, section).model_dump().items():
                flat[f"{section}.{key}"] = _format_value(value)
        return flat

    def to_text(self) -> str:
        return "".join(f"{key} = {value}\n" for key, value in self.to_flat().items())

    @classmethod
    def from_flat(cls, flat: Dict[str, str]) -> "RunConfig":
        return resolve_config([("file", flat)])


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, list):
        return ",".join(_format_value(item) for item in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse flat `key = value` lines; `#` starts a comment"""
    entries: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{number}: empty key")
        entries[key] = value
    return entries


def parse_overrides(overrides: List[str]) -> Dict[str, str]:
    entries: Dict[str, str] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        entries[key] = value
    return entries


def resolve_config(layers: List[tuple[str, Dict[str, str]]]) -> RunConfig:
    """
    Merge flat layers onto the defaults, later layers winning.

    Args:
        layers: (provenance label, flat entries) in increasing priority

    Returns:
        Validated RunConfig with provenance recorded for every key
    """
    nested: Dict[str, Any] = {}
    provenance = {key: "default" for key in RunConfig().to_flat()}

    for label, entries in layers:
        for key, value in entries.items():
            if key not in provenance:
                raise ConfigError(f"unknown config key: {key}")
            if key == "seed":
                nested["seed"] = value
            else:
                section, name = key.split(".", 1)
                nested.setdefault(section, {})[name] = None if value == "" else value
            provenance[key] = label

    try:
        config = RunConfig.model_validate(nested)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from e

    config._provenance = provenance
    return config


def load_run_config(
    path: Optional[str] = None,
    overrides: Optional[List[str]] = None,
    flags: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Resolve defaults < config file < --set overrides < dedicated flags"""
    layers: List[tuple[str, Dict[str, str]]] = []
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"config file not found: {path}")
        layers.append(("file", parse_config_text(config_path.read_text(encoding="utf-8"), path)))
    if overrides:
        layers.append(("flag", parse_overrides(overrides)))
    if flags:
        layers.append(("flag", {key: _format_value(value) for key, value in flags.items() if value is not None}))
    return resolve_config(layers)


def feature_hash(config: RunConfig | FeatureConfig) -> str:
    """Short stable hash of the feature settings, keys caches and checkpoints"""
    feature = config.feature if isinstance(config, RunConfig) else config
    canonical = json.dumps(feature.model_dump(exclude=HASH_EXCLUDED), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def resolve_cache_dir(config: RunConfig, flag: Optional[str] = None) -> Path:
    """--cache-dir flag > data.cache_dir > PROTOSED_CACHE_DIR > default"""
    for candidate in (flag, config.data.cache_dir, Settings().CACHE_DIR):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_CACHE_DIR)
