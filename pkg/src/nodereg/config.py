"""Experiment configuration: nested dataclasses loaded from JSON with unknown-key rejection."""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .graph import SbmConfig, SnmSbmConfig
from .losses import NodeRegConfig

VARIANTS = ("ce", "ce+ros", "ce+reweight", "ce+nodereg", "ce+l_bound", "ce+center", "ce+scl")
SELECTIONS = ("auto", "macro_f1", "accuracy", "last")


class ConfigError(ValueError):
    """Configuration failed validation."""


@dataclass
class DatasetConfig:
    kind: str = "sbm"
    path: typing.Optional[str] = None
    sbm: SbmConfig = field(default_factory=SbmConfig)

    def validate(self):
        if self.kind not in ("sbm", "file"):
            raise ConfigError("dataset.kind must be 'sbm' or 'file'")
        if self.kind == "file" and not self.path:
            raise ConfigError("dataset.path is required when dataset.kind is 'file'")


@dataclass
class ModelConfig:
    hidden_dim: int = 16
    bias: bool = True
    normalization: str = "symmetric"

    def validate(self):
        if self.hidden_dim < 1:
            raise ConfigError("model.hidden_dim must be >= 1")
        if self.normalization not in ("symmetric", "row"):
            raise ConfigError("model.normalization must be 'symmetric' or 'row'")


@dataclass
class OptimConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4

    def validate(self):
        if not self.lr > 0 or self.weight_decay < 0:
            raise ConfigError("optim.lr must be > 0 and optim.weight_decay >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("optim betas must lie in [0, 1)")


@dataclass
class LossConfig:
    variant: str = "ce+nodereg"
    variants: list = field(default_factory=lambda: list(VARIANTS))
    nodereg: NodeRegConfig = field(default_factory=NodeRegConfig)
    l_bound_weight: float = 1.0
    center_weight: float = 1.0
    center_alpha: float = 0.5
    scl_weight: float = 1.0
    scl_tau: float = 0.5

    def validate(self):
        for v in [self.variant, *self.variants]:
            if v not in VARIANTS:
                raise ConfigError(f"unknown loss variant {v!r}; choose from {', '.join(VARIANTS)}")
        if not self.variants:
            raise ConfigError("loss.variants must be non-empty")
        if not 0 < self.center_alpha <= 1 or not self.scl_tau > 0:
            raise ConfigError("loss.center_alpha must lie in (0, 1] and loss.scl_tau be > 0")


@dataclass
class ImbalanceConfig:
    majority_per_class: int = 20
    ratios: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7])
    minority_class_ids: list = field(default_factory=lambda: [3, 4])
    val_per_class: int = 30
    test_per_class: int = 100

    def validate(self):
        if not self.ratios or any(not 0 < r <= 1 for r in self.ratios):
            raise ConfigError("imbalance.ratios must be a non-empty subset of (0, 1]")


@dataclass
class ShiftConfig:
    strength: float = 2.0
    noise: float = 0.1
    fractions: list = field(default_factory=lambda: [0.5, 0.25, 0.25])

    def validate(self):
        if self.strength < 0 or self.noise < 0:
            raise ConfigError("shift.strength and shift.noise must be >= 0")
        if len(self.fractions) != 3 or min(self.fractions) < 0 or sum(self.fractions) > 1 + 1e-12:
            raise ConfigError("shift.fractions must be three non-negative numbers summing to <= 1")


@dataclass
class SnrConfig:
    snr_grid: list = field(default_factory=lambda: [0.01, 0.02, 0.05])
    control_snrs: list = field(default_factory=lambda: [0.0, 5.0])
    n_grid: list = field(default_factory=lambda: [500])
    p: float = 0.02
    s: float = 0.002
    sigma_p: float = 1.0
    d: int = 200
    q: float = 2.0
    hidden_dim: int = 16
    epochs: int = 100
    test_points: int = 2000
    null_structure: bool = True

    def validate(self):
        if not self.snr_grid or not self.n_grid:
            raise ConfigError("snr.snr_grid and snr.n_grid must be non-empty")
        if any(v < 0 for v in [*self.snr_grid, *self.control_snrs]):
            raise ConfigError("SNR values must be >= 0")
        if self.test_points < 2000:
            raise ConfigError("snr.test_points must be >= 2000")
        if not self.sigma_p > 0 or self.d < 1 or self.q <= 0 or self.epochs < 1:
            raise ConfigError("snr.sigma_p > 0, snr.d >= 1, snr.q > 0, snr.epochs >= 1 required")


@dataclass
class GammaConfig:
    imbalance_grid: list = field(default_factory=lambda: [1e-5, 1e-4, 1e-3, 1e-2, 1e-1])
    ood_grid: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1, 1e0, 1e1])
    scenarios: list = field(default_factory=lambda: ["imbalance", "ood"])
    imbalance_ratio: float = 0.1

    def validate(self):
        if not self.imbalance_grid or not self.ood_grid:
            raise ConfigError("gamma grids must be non-empty")
        if any(not g > 0 for g in [*self.imbalance_grid, *self.ood_grid]):
            raise ConfigError("gamma values must be > 0")
        if any(s not in ("imbalance", "ood") for s in self.scenarios):
            raise ConfigError("gamma.scenarios entries must be 'imbalance' or 'ood'")


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    imbalance: ImbalanceConfig = field(default_factory=ImbalanceConfig)
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    snr: SnrConfig = field(default_factory=SnrConfig)
    gamma: GammaConfig = field(default_factory=GammaConfig)
    epochs: int = 200
    patience: int = 0
    selection: str = "auto"
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def validate(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0 (0 disables early stopping)")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"selection must be one of {', '.join(SELECTIONS)}")


@dataclass
class GenConfig:
    """What ``gen`` writes: one generated graph, optionally with split masks."""

    generator: str = "sbm"
    sbm: SbmConfig = field(default_factory=SbmConfig)
    snm_sbm: typing.Optional[SnmSbmConfig] = None
    split: str = "none"
    imbalance_ratio: float = 0.1
    imbalance: ImbalanceConfig = field(default_factory=ImbalanceConfig)
    fractions: list = field(default_factory=lambda: [0.5, 0.25, 0.25])
    split_seed: int = 0

    def validate(self):
        if self.generator not in ("sbm", "snm_sbm"):
            raise ConfigError("generator must be 'sbm' or 'snm_sbm'")
        if self.generator == "snm_sbm" and self.snm_sbm is None:
            raise ConfigError("snm_sbm parameters are required when generator is 'snm_sbm'")
        if self.split not in ("none", "imbalance", "fraction"):
            raise ConfigError("split must be 'none', 'imbalance' or 'fraction'")
        if not 0 < self.imbalance_ratio <= 1:
            raise ConfigError("imbalance_ratio must lie in (0, 1]")


# --- strict (de)serialization ------------------------------------------------

def _coerce(value, hint, where):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], where)
    if dataclasses.is_dataclass(hint):
        return from_dict(hint, value, where)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if hint is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float, str)):
                raise ConfigError(f"{where}[{i}]: expected a number or string, got {item!r}")
        return list(value)
    return value


def from_dict(cls, data, where="config"):
    """Build dataclass ``cls`` from a JSON object, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s): {', '.join(unknown)}")
    kwargs = {k: _coerce(data[k], hints[k], f"{where}.{k}") for k in names if k in data}
    try:
        obj = cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if hasattr(obj, "validate"):
        try:
            obj.validate()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return obj


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def unwrap_manifest(doc):
    """A run manifest may stand in for a config: use its resolved ``config`` block."""
    if isinstance(doc, dict) and {"command", "config", "versions"} <= set(doc):
        return doc["config"]
    return doc


def load_config(path, cls=ExperimentConfig):
    return from_dict(cls, unwrap_manifest(read_json(path)))
