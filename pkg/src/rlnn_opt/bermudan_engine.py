"""Backward-induction Bermudan pricing with static-hedge layers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .hedge_net import HedgeLayer, TrainingBatch, TrainingConfig, fit_layer, network_value
from .market_model import MarketParams, PathGrid, black_scholes, cp_sign, simulate_gbm, stream_seeds

ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class BermudanSpec:
    strike: float
    side: str
    exercise_times: tuple

    def __post_init__(self):
        times = np.asarray(self.exercise_times, dtype=float)
        if not self.strike > 0:
            raise ValueError("strike must be positive")
        cp_sign(self.side)
        if times.size < 1 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise ValueError("exercise times must be positive and strictly increasing")
        object.__setattr__(self, "exercise_times", tuple(float(t) for t in times))

    @classmethod
    def regular(cls, strike, side="put", maturity=1.0, n_exercise=4):
        return cls(strike, side, tuple(maturity * np.arange(1, n_exercise + 1) / n_exercise))

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.exercise_times)

    @property
    def maturity(self) -> float:
        return self.exercise_times[-1]

    @property
    def n_exercise(self) -> int:
        return len(self.exercise_times)

    def intrinsic(self, spots):
        """Signed intrinsic value h: ``S - K`` for calls, ``K - S`` for puts."""
        return cp_sign(self.side) * (np.asarray(spots, dtype=float) - self.strike)

    def payoff(self, spots):
        return np.maximum(self.intrinsic(spots), 0.0)


@dataclass(frozen=True)
class ValueSurface:
    """Per-path option and continuation values at every exercise date.

    The continuation column at maturity is zero by convention.
    """

    times: np.ndarray
    values: np.ndarray
    continuation: np.ndarray
    t0_price: float


@dataclass
class RlnnModel:
    market: MarketParams
    spec: BermudanSpec
    layers: list
    traces: list = field(default_factory=list)
    t0_price: float = float("nan")


def continuation_value(layer: HedgeLayer, spot, r, sigma, tau):
    """Black-Scholes value of the hedge portfolio ``tau`` years before it expires."""
    if np.any(np.asarray(tau) <= 0):
        raise ValueError("tau must be positive")
    spot = np.asarray(spot, dtype=float)
    prices = black_scholes(spot[..., None], layer.strikes, r, sigma, tau, layer.cp)
    return prices @ layer.weights


def fit_rlnn(market: MarketParams, spec: BermudanSpec, n_paths: int,
             config: TrainingConfig = TrainingConfig(), seed: int = 0,
             paths: PathGrid | None = None) -> RlnnModel:
    """Fit one hedge layer per exercise date on training paths (backward in time)."""
    if paths is None:
        paths = simulate_gbm(market, spec.times, n_paths, stream_seeds(seed)[0])
    spots = paths.select(spec.times)
    times = spec.times
    layer_seeds = stream_seeds(seed + 1, spec.n_exercise)
    layers = [None] * spec.n_exercise
    traces = [None] * spec.n_exercise
    target = spec.payoff(spots[:, -1])
    for i in range(spec.n_exercise - 1, -1, -1):
        layer, trace = fit_layer(TrainingBatch(spots[:, i], target), market.s0, config,
                                 seed=layer_seeds[i], exercise_time=times[i])
        layers[i], traces[i] = layer, trace
        if i > 0:
            q = continuation_value(layer, spots[:, i - 1], market.r, market.sigma, times[i] - times[i - 1])
            target = np.maximum(spec.intrinsic(spots[:, i - 1]), q)
    q0 = continuation_value(layers[0], market.s0, market.r, market.sigma, times[0])
    t0 = max(float(spec.intrinsic(market.s0)), float(q0))
    return RlnnModel(market, spec, layers, traces, t0)


def value_surface(model: RlnnModel, paths: PathGrid) -> ValueSurface:
    """Evaluate a fitted model on (typically fresh validation) paths."""
    spec, market = model.spec, model.market
    spots = paths.select(spec.times)
    times = spec.times
    values = np.empty_like(spots)
    cont = np.zeros_like(spots)
    values[:, -1] = spec.payoff(spots[:, -1])
    for i in range(spec.n_exercise - 1):
        cont[:, i] = continuation_value(model.layers[i + 1], spots[:, i], market.r, market.sigma,
                                        times[i + 1] - times[i])
        values[:, i] = np.maximum(spec.intrinsic(spots[:, i]), cont[:, i])
    return ValueSurface(times, values, cont, model.t0_price)


def price_rlnn(market: MarketParams, spec: BermudanSpec, n_paths: int,
               config: TrainingConfig = TrainingConfig(), seed: int = 0,
               validation: PathGrid | None = None, n_validation: int | None = None):
    """Fit on training paths and value on an independent validation set.

    Returns ``(surface, layers, traces)``.
    """
    model = fit_rlnn(market, spec, n_paths, config, seed)
    if validation is None:
        validation = simulate_gbm(market, spec.times, n_validation or n_paths, stream_seeds(seed)[1])
    return value_surface(model, validation), model.layers, model.traces


def value_at(layers, market: MarketParams, spec: BermudanSpec, t: float, spots):
    """Hedge-portfolio value at an arbitrary time ``t`` in ``(0, T]``.

    For ``t`` in ``(t_{m-1}, t_m]`` the portfolio of layer ``m`` is valued with
    Black-Scholes over the remaining ``t_m - t``; at ``t_m`` itself this is the
    portfolio payoff.
    """
    times = spec.times
    if not 0 < t <= times[-1] + 1e-12:
        raise ValueError(f"t={t} outside (0, {times[-1]}]")
    m = int(np.searchsorted(times, t - 1e-12, side="left"))
    tau = times[m] - t
    if tau <= 1e-12:
        return network_value(np.asarray(spots, dtype=float), layers[m])
    return continuation_value(layers[m], spots, market.r, market.sigma, tau)


def save_model(model: RlnnModel, path, surface: ValueSurface | None = None):
    doc = {
        "format": "rlnn_opt.model",
        "version": ARTIFACT_VERSION,
        "market": {"s0": model.market.s0, "r": model.market.r, "sigma": model.market.sigma},
        "spec": {"strike": model.spec.strike, "side": model.spec.side,
                 "exercise_times": list(model.spec.exercise_times)},
        "t0_price": model.t0_price,
        "layers": [{"exercise_time": float(l.exercise_time), "strikes": l.strikes.tolist(),
                    "weights": l.weights.tolist(), "cp": l.cp.astype(int).tolist()}
                   for l in model.layers],
    }
    if surface is not None:
        doc["surface"] = {"times": surface.times.tolist(), "values": surface.values.tolist(),
                          "continuation": surface.continuation.tolist(),
                          "t0_price": surface.t0_price}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, surface_or_None)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "rlnn_opt.model" or doc.get("version") != ARTIFACT_VERSION:
        raise ValueError(f"unsupported artifact {doc.get('format')} v{doc.get('version')}")
    market = MarketParams(**doc["market"])
    spec = BermudanSpec(doc["spec"]["strike"], doc["spec"]["side"], tuple(doc["spec"]["exercise_times"]))
    layers = [HedgeLayer(np.array(l["strikes"]), np.array(l["weights"]), np.array(l["cp"]),
                         l["exercise_time"]) for l in doc["layers"]]
    model = RlnnModel(market, spec, layers, [], doc["t0_price"])
    surface = None
    if "surface" in doc:
        s = doc["surface"]
        surface = ValueSurface(np.array(s["times"]), np.array(s["values"]),
                               np.array(s["continuation"]), s["t0_price"])
    return model, surface
