"""Stopping times, exposure cubes and EE / PFE profiles."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bermudan_engine import BermudanSpec, RlnnModel, value_at, value_surface
from .cos import CosConfig, CosPricer
from .lsm import LsmResult, apply_lsm, interp_option_value
from .market_model import RISK_NEUTRAL, MarketParams, PathGrid, RealWorldParams, simulate_gbm

PFE_LEVEL = 0.99
QUANTILE_METHOD = "nearest-rank ceiling: order statistic ceil(q*N)"

SCENARIOS = {
    1: RealWorldParams(mu=0.07, sigma_real=0.1),
    2: RealWorldParams(mu=0.10, sigma_real=0.3),
    3: RealWorldParams(mu=0.15, sigma_real=0.5),
    4: RealWorldParams(mu=0.01, sigma_real=0.5),
}


@dataclass(frozen=True)
class ExposureCube:
    times: np.ndarray
    values: np.ndarray
    measure: str = RISK_NEUTRAL
    model: str = ""


@dataclass(frozen=True)
class ExposureProfile:
    times: np.ndarray
    ee: np.ndarray
    pfe: np.ndarray
    n_alive: np.ndarray
    measure: str = RISK_NEUTRAL
    model: str = ""
    scenario: str = ""
    quantile_method: str = QUANTILE_METHOD

    def rows(self):
        for t, ee, pfe, n in zip(self.times, self.ee, self.pfe, self.n_alive):
            yield {"t": float(t), "model": self.model, "measure": self.measure,
                   "scenario": self.scenario, "EE": float(ee), "PFE": float(pfe),
                   "n_alive": int(n)}


PROFILE_COLUMNS = ["t", "model", "measure", "scenario", "EE", "PFE", "n_alive"]


def write_profiles(path, profiles):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PROFILE_COLUMNS)
        writer.writeheader()
        for prof in profiles:
            for row in prof.rows():
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def stopping_times(times, continuation, intrinsics) -> np.ndarray:
    """First exercise date with intrinsic strictly above continuation, else ``inf``.

    At maturity the continuation is zero, so any positive payoff exercises.
    """
    continuation = np.asarray(continuation, dtype=float)
    intrinsics = np.asarray(intrinsics, dtype=float)
    times = np.asarray(times, dtype=float)
    if continuation.shape != intrinsics.shape or continuation.shape[1] != times.size:
        raise ValueError("continuation, intrinsic and times must be aligned")
    exercise = intrinsics > continuation
    first = np.argmax(exercise, axis=1)
    return np.where(exercise.any(axis=1), times[first], np.inf)


def exposure_cube(horizons, values, taus, measure=RISK_NEUTRAL, model="") -> ExposureCube:
    """Value while alive (``tau >= t``, the exercise date itself included), zero afterwards."""
    horizons = np.asarray(horizons, dtype=float)
    values = np.asarray(values, dtype=float)
    alive = np.asarray(taus)[:, None] >= horizons[None, :] - 1e-12
    return ExposureCube(horizons, np.where(alive, values, 0.0), measure, model)


def nearest_rank_quantile(x, q=PFE_LEVEL, axis=0):
    x = np.sort(np.asarray(x, dtype=float), axis=axis)
    n = x.shape[axis]
    k = max(1, math.ceil(q * n - 1e-9))
    return np.take(x, k - 1, axis=axis)


def profiles(cube: ExposureCube, scenario="", q=PFE_LEVEL) -> ExposureProfile:
    if cube.values.size == 0:
        raise ValueError("empty exposure cube")
    ee = cube.values.mean(axis=0)
    pfe = nearest_rank_quantile(cube.values, q)
    n_alive = (cube.values != 0).sum(axis=0)
    return ExposureProfile(cube.times, ee, pfe, n_alive, cube.measure, cube.model, scenario)


def horizons_for(spec: BermudanSpec, fine_times=()) -> np.ndarray:
    return np.unique(np.concatenate((spec.times, np.asarray(fine_times, dtype=float))))


def midpoints(spec: BermudanSpec) -> np.ndarray:
    grid = np.concatenate(([0.0], spec.times))
    return 0.5 * (grid[:-1] + grid[1:])


class RlnnValuer:
    name = "rlnn"

    def __init__(self, model: RlnnModel):
        self.model = model

    def exercise_surface(self, paths):
        s = value_surface(self.model, paths)
        return s.values, s.continuation

    def fine_values(self, paths, t, surface):
        return value_at(self.model.layers, self.model.market, self.model.spec, t, paths.column(t))


class LsmValuer:
    """LSM values; off-grid horizons use per-path option-value interpolation."""

    name = "lsm"

    def __init__(self, result: LsmResult, interpolate=interp_option_value):
        self.result = result
        self.interpolate = interpolate
        self._applied = None

    def exercise_surface(self, paths):
        self._applied = apply_lsm(self.result, paths)
        return self._applied.values, self._applied.continuation

    def fine_values(self, paths, t, surface):
        return self.interpolate(self._applied, t)


class CosValuer:
    name = "cos"

    def __init__(self, market: MarketParams, spec: BermudanSpec, config: CosConfig = CosConfig()):
        self.market, self.spec, self.config = market, spec, config
        self._pricer = None

    def _pricer_for(self, paths):
        x = np.log(paths.values / self.spec.strike)
        return CosPricer(self.market, self.spec, self.config, x_range=(x.min(), x.max()))

    def exercise_surface(self, paths):
        self._pricer = pricer = self._pricer_for(paths)
        spots = paths.select(self.spec.times)
        cont = np.column_stack([pricer.continuation(i, spots[:, i]) for i in range(self.spec.n_exercise)])
        values = np.maximum(self.spec.intrinsic(spots), cont)
        values[:, -1] = self.spec.payoff(spots[:, -1])
        return values, cont

    def fine_values(self, paths, t, surface):
        return self._pricer.value_at(t, paths.column(t))


@dataclass
class ModelExposure:
    cube: ExposureCube
    taus: np.ndarray
    values: np.ndarray
    continuation: np.ndarray
    horizon_values: np.ndarray = field(repr=False, default=None)


def model_exposure(valuer, spec: BermudanSpec, paths: PathGrid, fine_times=()) -> ModelExposure:
    """Exposure cube of one model on ``paths`` (exercise dates plus ``fine_times``)."""
    horizons = horizons_for(spec, fine_times)
    values, cont = valuer.exercise_surface(paths)
    spots = paths.select(spec.times)
    taus = stopping_times(spec.times, cont, spec.intrinsic(spots))
    out = np.empty((paths.n_paths, horizons.size))
    for h, t in enumerate(horizons):
        ex = np.flatnonzero(np.isclose(spec.times, t, rtol=0, atol=1e-12))
        out[:, h] = values[:, ex[0]] if ex.size else valuer.fine_values(paths, t, values)
    cube = exposure_cube(horizons, out, taus, paths.measure, valuer.name)
    return ModelExposure(cube, taus, values, cont, out)


def run_scenarios(spec: BermudanSpec, market: MarketParams, valuers, scenarios, n_paths, seed,
                  fine_times=()):
    """Profiles per scenario and model on real-world paths, valued risk-neutrally.

    ``scenarios`` maps a label to :class:`RealWorldParams` (``None`` for the
    risk-neutral measure).  Returns ``{label: {model: ExposureProfile}}``.
    """
    if not valuers:
        raise ValueError("no fitted models supplied")
    horizons = horizons_for(spec, fine_times)
    out = {}
    for label, rw in scenarios.items():
        paths = simulate_gbm(market, horizons, n_paths, seed, rw=rw)
        out[label] = {v.name: profiles(model_exposure(v, spec, paths, fine_times).cube, str(label))
                      for v in valuers}
    return out
