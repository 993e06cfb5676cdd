"""Experiment configuration: a single JSON document, unknown keys rejected."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from .cos import CosConfig
from .hedge_net import TrainingConfig
from .market_model import MarketParams, RealWorldParams

MONEYNESS_LABELS = {1.0: "ATM", 1.1: "ITM", 0.9: "OTM"}


class ConfigError(ValueError):
    pass


@dataclass
class MarketBlock:
    s0: float = 1.0
    r: float = 0.06
    sigma: float = 0.2


@dataclass
class SpecBlock:
    side: str = "put"
    maturity: float = 1.0
    n_exercise: int = 4
    moneyness: list = field(default_factory=lambda: [1.0, 1.1, 0.9])


@dataclass
class PathsBlock:
    n_train: int = 50_000
    n_validation: int = 5_000
    n_converge: int = 50_000
    seed: int = 2024


@dataclass
class ConvergenceBlock:
    max_epochs: int = 30
    tol: float = 1e-3


@dataclass
class FineGridBlock:
    times: list | None = None


@dataclass
class OutputBlock:
    dir: str = "runs"


def _default_scenarios():
    return {"1": {"mu": 0.07, "sigma_real": 0.1}, "2": {"mu": 0.10, "sigma_real": 0.3},
            "3": {"mu": 0.15, "sigma_real": 0.5}, "4": {"mu": 0.01, "sigma_real": 0.5}}


@dataclass
class ExperimentConfig:
    market: MarketBlock = field(default_factory=MarketBlock)
    spec: SpecBlock = field(default_factory=SpecBlock)
    paths: PathsBlock = field(default_factory=PathsBlock)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    cos: CosConfig = field(default_factory=CosConfig)
    convergence: ConvergenceBlock = field(default_factory=ConvergenceBlock)
    scenarios: dict = field(default_factory=_default_scenarios)
    fine_grid: FineGridBlock = field(default_factory=FineGridBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def validate(self):
        MarketParams(self.market.s0, self.market.r, self.market.sigma)
        if self.paths.n_validation < 100:
            raise ConfigError("paths.n_validation must be at least 100")
        if self.paths.n_train < 1 or self.paths.n_converge < 1:
            raise ConfigError("path counts must be positive")
        if not self.spec.moneyness or any(m <= 0 for m in self.spec.moneyness):
            raise ConfigError("spec.moneyness must be a non-empty list of positive ratios")
        if self.spec.n_exercise < 1 or self.spec.maturity <= 0:
            raise ConfigError("spec needs n_exercise >= 1 and maturity > 0")
        if self.spec.side not in ("put", "call"):
            raise ConfigError("spec.side must be 'put' or 'call'")
        for label, sc in self.scenarios.items():
            self.real_world(label)
        return self

    def market_params(self) -> MarketParams:
        return MarketParams(self.market.s0, self.market.r, self.market.sigma)

    def real_world(self, label) -> RealWorldParams:
        sc = self.scenarios[str(label)]
        unknown = set(sc) - {"mu", "sigma_real"}
        if unknown or {"mu", "sigma_real"} - set(sc):
            raise ConfigError(f"scenario {label} needs exactly mu and sigma_real")
        return RealWorldParams(float(sc["mu"]), float(sc["sigma_real"]))

    def to_dict(self):
        return asdict(self)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


_BLOCKS = {"market": MarketBlock, "spec": SpecBlock, "paths": PathsBlock, "training": TrainingConfig,
           "cos": CosConfig, "convergence": ConvergenceBlock, "fine_grid": FineGridBlock,
           "output": OutputBlock}


def from_dict(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(_BLOCKS) - {"scenarios"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    kwargs = {name: _build(cls, data[name], name) for name, cls in _BLOCKS.items() if name in data}
    if "scenarios" in data:
        if not isinstance(data["scenarios"], dict):
            raise ConfigError("scenarios must be an object")
        kwargs["scenarios"] = {str(k): copy.deepcopy(v) for k, v in data["scenarios"].items()}
    cfg = ExperimentConfig(**kwargs)
    try:
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def moneyness_label(m: float) -> str:
    return MONEYNESS_LABELS.get(round(float(m), 6), f"M{float(m):g}")
