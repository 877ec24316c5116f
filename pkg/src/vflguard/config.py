"""Run configuration: a YAML tree mapped onto nested dataclasses.

Unknown keys are rejected so typos in sweep configs fail loudly.  Every
field has a default; a resolved copy (all defaults filled in) is written
next to each run's outputs.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .defenses import DefenseConfig


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticConfig:
    n_samples: int = 20000
    n_passive: int = 16
    n_active: int = 0
    informative_dims: int = 4
    latent_dims: int = 4
    latent_strength: float = 1.0
    coef: Optional[List[float]] = None
    coef_scale: float = 2.0
    intercept: float = 0.0
    noise_std: float = 1.0
    seed: Optional[int] = None  # None: use the run seed


@dataclass
class CsvConfig:
    path: Optional[str] = None
    label: str = "label"
    ownership: Dict[str, str] = field(default_factory=dict)
    split_column: Optional[str] = None


@dataclass
class DataConfig:
    source: str = "synthetic"
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    csv: CsvConfig = field(default_factory=CsvConfig)
    splits: List[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])
    standardize: bool = True


@dataclass
class ModelConfig:
    d_emb: int = 16
    extractor_hidden: List[int] = field(default_factory=lambda: [128])
    predictor_hidden: List[int] = field(default_factory=lambda: [32])
    reconstructor_hidden: List[int] = field(default_factory=lambda: [128])
    active_features: bool = False


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    clip_norm: Optional[float] = 1.0


@dataclass
class DefenseSection:
    alpha_r: float = 0.0
    alpha_n: float = 0.0
    alpha_d: float = 0.0
    lam: float = 1.0
    noise_kind: str = "gaussian"
    noise_params: Dict[str, float] = field(default_factory=dict)
    use_log_dcor: bool = True
    baseline_noise_std: float = 0.0
    share_reconstructor: bool = True

    def build(self) -> DefenseConfig:
        return DefenseConfig(**dataclasses.asdict(self))


@dataclass
class TrainingConfig:
    n_batches: int = 5000
    batch_size: int = 64
    eval_every: int = 500
    transport: str = "inprocess"  # or "socket"


@dataclass
class AttackConfig:
    epochs: int = 5
    hidden: Optional[List[int]] = None  # None: same as the defense reconstructor
    batch_size: Optional[int] = None  # None: training batch size
    learning_rate: float = 0.05
    momentum: float = 0.9
    clip_norm: Optional[float] = 1.0


@dataclass
class DcorStudyConfig:
    batch_sizes: List[int] = field(default_factory=lambda: [16, 64, 256, 1024])
    trials: int = 20
    noise_dim: Optional[int] = None  # None: same width as X


@dataclass
class SweepConfig:
    grid: Dict[str, List[Any]] = field(default_factory=dict)
    seeds: Optional[List[int]] = None


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    defense: DefenseSection = field(default_factory=DefenseSection)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    dcor_study: DcorStudyConfig = field(default_factory=DcorStudyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_dict(self) -> dict:
        raw = dataclasses.asdict(self)
        # "lambda" is the documented key but a Python keyword
        raw["defense"] = {("lambda" if k == "lam" else k): v for k, v in raw["defense"].items()}
        return raw

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def replace(self, **dotted) -> "RunConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"defense.alpha_n": 0.01})``."""
        raw = self.to_dict()
        for key, value in dotted.items():
            set_dotted(raw, key, value)
        return from_dict(raw)

    def validate(self) -> "RunConfig":
        d = self.data
        if d.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {d.source!r}")
        if d.source == "csv":
            if not d.csv.path:
                raise ConfigError("data.csv.path is required for a csv source")
            if not Path(d.csv.path).exists():
                raise ConfigError(f"data.csv.path does not exist: {d.csv.path}")
            if not d.csv.ownership:
                raise ConfigError("data.csv.ownership must map feature columns to parties")
        if len(d.splits) != 3 or abs(sum(d.splits) - 1.0) > 1e-9 or min(d.splits) < 0:
            raise ConfigError(f"data.splits must be three fractions summing to 1, got {d.splits}")
        if self.model.d_emb < 1:
            raise ConfigError("model.d_emb must be >= 1")
        o = self.optimizer
        if o.learning_rate <= 0 or not 0 <= o.momentum < 1 or (o.clip_norm is not None and o.clip_norm <= 0):
            raise ConfigError("optimizer needs learning_rate > 0, momentum in [0, 1), clip_norm > 0 or null")
        t = self.training
        if t.n_batches < 0 or t.batch_size < 2 or t.eval_every < 1:
            raise ConfigError("training needs n_batches >= 0, batch_size >= 2, eval_every >= 1")
        if t.transport not in ("inprocess", "socket"):
            raise ConfigError(f"training.transport must be 'inprocess' or 'socket', got {t.transport!r}")
        if self.attack.epochs < 0:
            raise ConfigError("attack.epochs must be >= 0")
        if self.dcor_study.trials < 1 or any(n < 2 for n in self.dcor_study.batch_sizes):
            raise ConfigError("dcor_study needs trials >= 1 and batch sizes >= 2")
        if self.seed is None or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        try:
            self.defense.build()
        except ValueError as exc:
            raise ConfigError(f"defense: {exc}") from None
        return self


def _coerce(tp, value, where: str):
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return _build(tp, value, where)
    return value


def _build(cls, raw: dict, where: str = ""):
    if cls is DefenseSection and "lambda" in raw:
        if "lam" in raw:
            raise ConfigError("defense: give either 'lambda' or 'lam', not both")
        raw = {("lam" if k == "lambda" else k): v for k, v in raw.items()}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"unknown config key {(where + '.' if where else '') + unknown[0]!r}")
    kwargs = {}
    for name, value in raw.items():
        sub = where + "." + name if where else name
        tp = _SECTIONS.get((cls, name))
        kwargs[name] = _coerce(tp, value, sub) if tp else value
    return cls(**kwargs)


_SECTIONS = {
    (RunConfig, "data"): DataConfig,
    (RunConfig, "model"): ModelConfig,
    (RunConfig, "optimizer"): OptimizerConfig,
    (RunConfig, "defense"): DefenseSection,
    (RunConfig, "training"): TrainingConfig,
    (RunConfig, "attack"): AttackConfig,
    (RunConfig, "dcor_study"): DcorStudyConfig,
    (RunConfig, "sweep"): SweepConfig,
    (DataConfig, "synthetic"): SyntheticConfig,
    (DataConfig, "csv"): CsvConfig,
}


def from_dict(raw: Optional[dict]) -> RunConfig:
    try:
        cfg = _build(RunConfig, copy.deepcopy(raw or {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(raw)


def set_dotted(raw: dict, key: str, value) -> None:
    parts = key.split(".")
    node = raw
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config section in key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value
