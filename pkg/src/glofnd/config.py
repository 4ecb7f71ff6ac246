"""Run configuration: a flat key=value surface shared by files and CLI flags.

Unknown keys are hard errors so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

MODALITIES = ("unimodal", "bimodal")
METHODS = ("none", "glofnd", "fnc")
FALLBACKS = ("keep_all", "skip_anchor")
LAMBDA_MODES = ("sgd", "adam")
W_OPTIMIZERS = ("adam", "momentum")
ORACLE_SOURCES = ("encoder", "random_unit", "checkpoint")


@dataclass
class RunConfig:
    # experiment
    modality: str = "unimodal"
    method: str = "glofnd"
    seed: int = 0
    output_dir: str = "runs/run"
    # dataset
    n_classes: int = 10
    per_class: int = 100
    d_in: int = 16
    d_in_text: int = 16
    spread: float = 0.2
    noise_sigma: float = 0.1
    # encoder
    d_hid: int = 32
    d_emb: int = 8
    # loss
    tau: float = 0.1
    gamma: float = 0.9
    alpha: float = 0.01
    fallback_on_empty: str = "keep_all"
    # threshold optimizer
    lambda_mode: str = "adam"
    lambda_lr: float = 0.05
    lambda_beta1: float = 0.9
    lambda_beta2: float = 0.98
    track_lambda_during_warmup: bool = False
    # encoder optimizer
    w_optimizer: str = "adam"
    w_lr: float = 1e-3
    w_beta1: float = 0.9
    w_beta2: float = 0.999
    w_momentum: float = 0.9
    cosine_decay: bool = False
    # schedule
    epochs: int = 20
    batch_size: int = 64
    warmup_epoch: int = 5
    # oracle-check / eval extras
    oracle_source: str = "encoder"
    oracle_tolerance: float = 0.02
    checkpoint_dir: str = ""
    # outputs
    plots: bool = False

    def validate(self) -> "RunConfig":
        def expect(cond, msg):
            if not cond:
                raise ConfigError(msg)

        expect(self.modality in MODALITIES,
               f"modality must be one of {MODALITIES}, got {self.modality!r}")
        expect(self.method in METHODS,
               f"method must be one of {METHODS}, got {self.method!r}")
        expect(self.fallback_on_empty in FALLBACKS,
               f"fallback_on_empty must be one of {FALLBACKS}")
        expect(self.lambda_mode in LAMBDA_MODES,
               f"lambda_mode must be one of {LAMBDA_MODES}")
        expect(self.w_optimizer in W_OPTIMIZERS,
               f"w_optimizer must be one of {W_OPTIMIZERS}")
        expect(self.oracle_source in ORACLE_SOURCES,
               f"oracle_source must be one of {ORACLE_SOURCES}")
        expect(self.batch_size >= 2, "batch_size must be at least 2")
        expect(self.epochs >= 1, "epochs must be at least 1")
        expect(0 <= self.warmup_epoch <= self.epochs,
               "warmup_epoch must lie in [0, epochs]")
        expect(self.n_classes >= 1 and self.per_class >= 1,
               "dataset counts must be positive")
        expect(self.d_in >= 1 and self.d_in_text >= 1
               and self.d_hid >= 1 and self.d_emb >= 1,
               "dimensions must be positive")
        expect(self.spread >= 0, "spread must be nonnegative")
        expect(self.noise_sigma >= 0, "noise_sigma must be nonnegative")
        expect(self.tau > 0, "tau must be positive")
        expect(0 <= self.gamma <= 1, "gamma must be in [0, 1]")
        expect(0 <= self.alpha <= 1, "alpha must be in [0, 1]")
        expect(self.lambda_lr > 0 and self.w_lr > 0,
               "learning rates must be positive")
        expect(self.batch_size <= self.n_classes * self.per_class,
               "batch_size cannot exceed the dataset size")
        expect(self.oracle_tolerance >= 0, "oracle_tolerance must be >= 0")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return raw


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; '#' starts a comment, blanks ignored."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def build_config(file_values: dict | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Merge config-file values with overrides (overrides win) and validate."""
    merged: dict = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = (_parse_value(key, value)
                           if isinstance(value, str) else value)
    return RunConfig(**merged).validate()
