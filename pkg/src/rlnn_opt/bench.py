"""Experiment drivers behind the command-line harness.

Each driver returns plain row dictionaries; writing CSV/SVG is left to the CLI.
"""
from __future__ import annotations

from dataclasses import replace
from functools import cached_property

import numpy as np

from .bermudan_engine import BermudanSpec, fit_rlnn, value_at, value_surface
from .cos import CosConfig, CosPricer
from .exposure import CosValuer, ExposureCube, LsmValuer, RlnnValuer, model_exposure, profiles
from .hedge_net import HYBRID, JOINT_ADAM, TrainingConfig
from .lsm import (apply_lsm, fit_lsm, interp_continuation_value, interp_option_value,
                  interp_params, true_fit)
from .market_model import MarketParams, RealWorldParams, simulate_gbm, stream_seeds


def epochs_to_tolerance(errors, tol):
    """First epoch index whose absolute error is below ``tol`` (``None`` if never)."""
    for epoch, err in enumerate(errors):
        if abs(err) < tol:
            return epoch
    return None


def convergence_race(market, spec, config: TrainingConfig, n_paths, seed, max_epochs, reference):
    """t0 pricing error after each epoch budget for both training modes.

    Every epoch budget refits the full backward induction from scratch on the
    same training paths, so the curve at epoch ``e`` is the price an
    ``e``-epoch run would report.
    """
    paths = simulate_gbm(market, spec.times, n_paths, stream_seeds(seed)[0])
    rows = []
    for mode in (HYBRID, JOINT_ADAM):
        for epoch in range(max_epochs + 1):
            cfg = replace(config, mode=mode, epochs=epoch)
            price = fit_rlnn(market, spec, n_paths, cfg, seed, paths=paths).t0_price
            rows.append({"mode": mode, "epoch": epoch, "price": price, "reference": reference,
                         "error": price - reference})
    return rows


def split_modes(rows):
    out = {}
    for row in rows:
        out.setdefault(row["mode"], []).append(row["error"])
    return out


class Benchmark:
    """Fitted RLNN, LSM and COS models on shared training/validation streams."""

    def __init__(self, market: MarketParams, spec: BermudanSpec, training: TrainingConfig,
                 cos_config: CosConfig, n_train: int, seed: int):
        self.market, self.spec = market, spec
        self.seed = seed
        self.train_seed, self.val_seed = stream_seeds(seed)
        self.training, self.n_train = training, n_train
        self.train = simulate_gbm(market, spec.times, n_train, self.train_seed)
        self.lsm = fit_lsm(self.train, spec, market)
        self.cos_config = cos_config
        self.cos_price = CosPricer(market, spec, cos_config).price()

    @cached_property
    def rlnn(self):
        return fit_rlnn(self.market, self.spec, self.n_train, self.training, self.seed, paths=self.train)

    def valuers(self):
        return [RlnnValuer(self.rlnn), LsmValuer(self.lsm), CosValuer(self.market, self.spec, self.cos_config)]

    def validation(self, n_paths, horizons=None, rw: RealWorldParams | None = None, seed=None):
        horizons = self.spec.times if horizons is None else horizons
        return simulate_gbm(self.market, horizons, n_paths, self.val_seed if seed is None else seed, rw=rw)

    def pv_distribution(self, paths):
        """Per-path PVs conditional on no earlier exercise, at every exercise date."""
        surf = value_surface(self.rlnn, paths)
        lsm = apply_lsm(self.lsm, paths)
        cos_vals, _ = CosValuer(self.market, self.spec, self.cos_config).exercise_surface(paths)
        spots = paths.select(self.spec.times)
        rows = []
        for i, t in enumerate(self.spec.times):
            for j in range(paths.n_paths):
                v_cos = cos_vals[j, i]
                rows.append({"t": t, "path": j, "spot": spots[j, i], "V_rlnn": surf.values[j, i],
                             "V_lsm": lsm.values[j, i], "V_cos": v_cos,
                             "err_rlnn": surf.values[j, i] - v_cos, "err_lsm": lsm.values[j, i] - v_cos})
        return rows

    def exposures(self, paths, fine_times=(), scenario=""):
        return {v.name: profiles(model_exposure(v, self.spec, paths, fine_times).cube, scenario)
                for v in self.valuers()}

    def finer_grid_gap(self, paths, fine_times):
        """Per-path RMS gap between RLNN and COS values at each fine horizon."""
        pricer = CosValuer(self.market, self.spec, self.cos_config)._pricer_for(paths)
        out = {}
        for t in fine_times:
            spots = paths.column(t)
            v_r = value_at(self.rlnn.layers, self.market, self.spec, t, spots)
            v_c = pricer.value_at(t, spots)
            out[float(t)] = float(np.sqrt(np.mean((v_r - v_c) ** 2)))
        return out

    def lsm_interpolation(self, paths, fine_times, boundary="value"):
        """Exposure profiles of True Fit and the three interpolation schemes.

        All schemes share the LSM stopping times and exercise-date values.
        """
        spec = self.spec
        applied = apply_lsm(self.lsm, paths)
        valuer = LsmValuer(self.lsm)
        exercise = model_exposure(valuer, spec, paths)
        taus = exercise.taus
        horizons = np.unique(np.concatenate((spec.times, fine_times)))
        schemes = {
            "true_fit": lambda t, m: true_fit(paths.column(t), applied.values[:, m], t, spec.times[m],
                                              self.market.r, spec.strike)[1],
            "option_value": lambda t, m: interp_option_value(applied, t),
            "continuation_value": lambda t, m: interp_continuation_value(applied, t),
            "params": lambda t, m: interp_params(applied, paths.column(t), t, boundary),
        }
        result = {}
        for name, fn in schemes.items():
            cube = np.empty((paths.n_paths, horizons.size))
            for h, t in enumerate(horizons):
                ex = np.flatnonzero(np.isclose(spec.times, t, rtol=0, atol=1e-12))
                if ex.size:
                    cube[:, h] = applied.values[:, ex[0]]
                else:
                    cube[:, h] = fn(t, int(np.searchsorted(spec.times, t)))
            alive = taus[:, None] >= horizons[None, :] - 1e-12
            result[name] = profiles(ExposureCube(horizons, np.where(alive, cube, 0.0), paths.measure, name))
        return result


def interpolation_errors(result, fine_times):
    """Max-abs EE and PFE error of each scheme versus True Fit over the fine horizons."""
    ref = result["true_fit"]
    mask = np.isin(np.round(ref.times, 12), np.round(np.asarray(fine_times), 12))
    out = {}
    for name, prof in result.items():
        if name == "true_fit":
            continue
        out[name] = {"ee": float(np.max(np.abs(prof.ee - ref.ee)[mask])),
                     "pfe": float(np.max(np.abs(prof.pfe - ref.pfe)[mask]))}
    return out
