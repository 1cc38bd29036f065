"""Configuration management for vcformer."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Tuple, Union, get_args, get_origin, get_type_hints

from dotenv import load_dotenv

from .errors import ConfigurationError

load_dotenv()


class Config:
    """Process-level settings read from the environment."""

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("LOG_FILE", "vcformer.log")
    LOG_MAX_BYTES = int(os.getenv("LOG_MAX_BYTES", "10485760"))  # 10MB
    LOG_BACKUP_COUNT = int(os.getenv("LOG_BACKUP_COUNT", "5"))

    # Run registry (empty disables it)
    RUNS_DATABASE_URL = os.getenv("RUNS_DATABASE_URL", "sqlite:///vcformer_runs.db")

    # Internal parallelism; 1 means deterministic single-threaded mode
    DEFAULT_THREADS = int(os.getenv("DEFAULT_THREADS", "1"))


config = Config()


# --- Run configuration ---

DEFAULT_RATIOS = (0.6, 0.2, 0.2)
ETT_RATIOS = (0.7, 0.1, 0.2)
VCA_MODES = ('vca', 'attention', 'none')
KTD_MODES = ('ktd', 'ffn', 'none')


def dataset_ratios(dataset_name: str = '') -> Tuple[float, float, float]:
    """Default train/val/test ratios for a dataset family."""
    return ETT_RATIOS if dataset_name.upper().startswith('ETT') else DEFAULT_RATIOS


@dataclass
class ModelConfig:
    """Shapes and options of the forecaster (look-back t, horizon h, n variates, ...)."""

    t: int = 96
    h: int = 96
    n: int = 8
    d: int = 128
    m: int = 256
    s: int = 32
    layers: int = 2
    dtype: str = 'float32'
    seed: int = 0
    activation: str = 'gelu'
    ridge_eps: float = 1e-5
    vca_mode: str = 'vca'
    ktd_mode: str = 'ktd'

    def validate(self) -> None:
        for key in ('t', 'h', 'n', 'd', 'm', 's'):
            if getattr(self, key) <= 0:
                raise ConfigurationError(f"model.{key} must be positive, got {getattr(self, key)}")
        if self.layers < 0:
            raise ConfigurationError(f"model.layers must be >= 0, got {self.layers}")
        if self.dtype not in ('float32', 'float64'):
            raise ConfigurationError(f"model.dtype must be float32 or float64, got {self.dtype!r}")
        if self.activation not in ('gelu', 'relu', 'tanh'):
            raise ConfigurationError(f"unknown model.activation {self.activation!r}")
        if self.ridge_eps < 0:
            raise ConfigurationError(f"model.ridge_eps must be >= 0, got {self.ridge_eps}")
        if self.vca_mode not in VCA_MODES:
            raise ConfigurationError(f"model.vca_mode must be one of {VCA_MODES}, got {self.vca_mode!r}")
        if self.ktd_mode not in KTD_MODES:
            raise ConfigurationError(f"model.ktd_mode must be one of {KTD_MODES}, got {self.ktd_mode!r}")
        if self.ktd_mode == 'ktd':
            if self.d % self.s != 0:
                raise ConfigurationError(f"model.s={self.s} does not divide model.d={self.d}")
            if self.d // self.s < 2:
                raise ConfigurationError(
                    f"model.d / model.s = {self.d // self.s}; need at least two segments"
                )


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.9
    batch_size: int = 16
    max_epochs: int = 10
    patience: int = 5
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_batch_size: int = 64
    threads: int = 1
    prefetch: bool = False

    def validate(self) -> None:
        if self.lr < 0:
            raise ConfigurationError(f"train.lr must be >= 0, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError(f"train.lr_decay must be in (0, 1], got {self.lr_decay}")
        for key in ('batch_size', 'max_epochs', 'patience', 'eval_batch_size', 'threads'):
            if getattr(self, key) <= 0:
                raise ConfigurationError(f"train.{key} must be positive, got {getattr(self, key)}")
        if self.clip_norm <= 0:
            raise ConfigurationError(f"train.clip_norm must be positive, got {self.clip_norm}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("train.beta1 and train.beta2 must be in [0, 1)")


@dataclass
class DataConfig:
    """Input file and split settings. ``ratios=None`` picks the dataset family default."""

    csv_path: Optional[str] = None
    has_timestamp: bool = True
    ratios: Optional[Tuple[float, float, float]] = None
    stride: int = 1
    shuffle: bool = True
    dataset_name: str = ''

    @property
    def split_ratios(self) -> Tuple[float, float, float]:
        return tuple(self.ratios) if self.ratios is not None else dataset_ratios(self.dataset_name)

    def validate(self) -> None:
        ratios = self.split_ratios
        if len(ratios) != 3 or any(r < 0 for r in ratios):
            raise ConfigurationError(f"data.ratios must be three non-negative numbers, got {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigurationError(f"data.ratios must sum to 1, got {sum(ratios)}")
        if self.stride <= 0:
            raise ConfigurationError(f"data.stride must be positive, got {self.stride}")


SECTIONS = {'model': ModelConfig, 'train': TrainConfig, 'data': DataConfig}


def _parse_value(raw, annotation, key: str):
    """Coerce a string (or JSON value) to a field's declared type."""
    origin = get_origin(annotation)
    args = get_args(annotation)
    if origin is Union:
        inner = [a for a in args if a is not type(None)][0]
        if raw is None or (isinstance(raw, str) and raw.strip().lower() in ('', 'none', 'null')):
            return None
        return _parse_value(raw, inner, key)
    try:
        if origin is tuple:
            items = raw
            if isinstance(raw, str):
                text = raw.strip()
                items = json.loads(text) if text.startswith('[') else text.split(',')
            return tuple(_parse_value(v, args[0], key) for v in items)
        if annotation is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ('true', '1', 'yes', 'on'):
                return True
            if text in ('false', '0', 'no', 'off'):
                return False
            raise ValueError(raw)
        if annotation is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if annotation is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"cannot parse {raw!r} for {key}")


def _build_section(cls, values: Mapping[str, Any], section: str):
    if not isinstance(values, Mapping):
        raise ConfigurationError(f"{section} must be an object")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"unknown config key {section}.{unknown[0]}")
    kwargs = {k: _parse_value(v, hints[k], f"{section}.{k}") for k, v in values.items()}
    return cls(**kwargs)


@dataclass
class RunConfig:
    """Everything one run needs; the top-level seed is the single source of randomness."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0

    def __post_init__(self):
        self.model.seed = self.seed

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> 'RunConfig':
        """Strict construction; unknown keys at any level raise ConfigurationError."""
        unknown = sorted(set(values) - set(SECTIONS) - {'seed'})
        if unknown:
            raise ConfigurationError(f"unknown config key {unknown[0]}")
        sections = {name: _build_section(cls_, values.get(name, {}), name) for name, cls_ in SECTIONS.items()}
        seed = _parse_value(values.get('seed', 0), int, 'seed')
        return cls(seed=seed, **sections)

    @classmethod
    def from_json(cls, text: str) -> 'RunConfig':
        try:
            values = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config is not valid JSON: {e}")
        if not isinstance(values, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(values)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        if out['data']['ratios'] is not None:
            out['data']['ratios'] = list(out['data']['ratios'])
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'RunConfig':
        """
        Apply dotted overrides such as ``{'model.d': '64'}``.

        Args:
            overrides: Dotted key -> raw value (strings are parsed to the field type)

        Returns:
            New RunConfig; the original is left untouched
        """
        values = self.to_dict()
        for key, raw in overrides.items():
            if key == 'model.seed':
                key = 'seed'
            if key == 'seed':
                values['seed'] = raw
                continue
            section, _, name = key.partition('.')
            if section not in SECTIONS or not name:
                raise ConfigurationError(f"unknown config key {key}")
            values[section][name] = raw
        return RunConfig.from_dict(values)

    def validate(self) -> 'RunConfig':
        self.model.validate()
        self.train.validate()
        self.data.validate()
        return self

    def config_hash(self) -> str:
        """Stable digest of everything except the seed; groups repeated runs."""
        values = self.to_dict()
        values.pop('seed')
        values['model'].pop('seed')
        return hashlib.sha256(json.dumps(values, sort_keys=True).encode('utf-8')).hexdigest()[:12]


def field_names() -> Dict[str, type]:
    """Every dotted config key with its declared type, for building CLI flags."""
    names = {'seed': int}
    for section, cls in SECTIONS.items():
        hints = get_type_hints(cls)
        for f in fields(cls):
            names[f"{section}.{f.name}"] = hints[f.name]
    return names
