"""GBM path simulation, discounting and Black-Scholes valuation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

RISK_NEUTRAL = "risk_neutral"
REAL_WORLD = "real_world"


@dataclass(frozen=True)
class MarketParams:
    """Time-zero market state under the pricing measure."""

    s0: float
    r: float
    sigma: float

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not np.isfinite(self.r):
            raise ValueError("r must be finite")


@dataclass(frozen=True)
class RealWorldParams:
    """Drift and volatility used to generate real-world scenarios."""

    mu: float
    sigma_real: float

    def __post_init__(self):
        if not self.sigma_real >= 0:
            raise ValueError(f"sigma_real must be non-negative, got {self.sigma_real}")


@dataclass(frozen=True)
class PathGrid:
    """Simulated spot levels, one row per path and one column per horizon.

    Time zero is not stored; column 0 is the earliest positive horizon.
    """

    times: np.ndarray
    values: np.ndarray
    measure: str = RISK_NEUTRAL
    seed: int | None = None
    s0: float = field(default=float("nan"))

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def column(self, t: float) -> np.ndarray:
        """Spots at horizon ``t``; ``t`` must be one of the grid times."""
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"horizon {t} not on grid {self.times.tolist()}")
        return self.values[:, idx[0]]

    def select(self, times) -> np.ndarray:
        """Sub-matrix of the columns matching ``times`` (in that order)."""
        return np.column_stack([self.column(t) for t in times])


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        raise ValueError("at least one horizon is required")
    if np.any(times <= 0):
        raise ValueError("horizons must be strictly positive")
    if np.any(np.diff(times) <= 0):
        raise ValueError("horizons must be strictly increasing")
    return times


def simulate_gbm(params: MarketParams, times, n_paths: int, seed: int,
                 rw: RealWorldParams | None = None) -> PathGrid:
    """Exact-transition GBM paths at ``times``.

    Without ``rw`` the drift is the risk-free rate; with ``rw`` the paths use
    the real-world drift ``mu`` and volatility ``sigma_real``.
    """
    times = _check_times(times)
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if rw is None:
        drift, vol, measure = params.r, params.sigma, RISK_NEUTRAL
    else:
        drift, vol, measure = rw.mu, rw.sigma_real, REAL_WORLD
    if vol < 0:
        raise ValueError("volatility must be non-negative")

    dt = np.diff(np.concatenate(([0.0], times)))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, times.size))
    increments = (drift - 0.5 * vol**2) * dt + vol * np.sqrt(dt) * z
    values = params.s0 * np.exp(np.cumsum(increments, axis=1))
    return PathGrid(times=times, values=values, measure=measure, seed=seed, s0=params.s0)


def stream_seeds(seed: int, n: int = 2) -> list[int]:
    """Independent child seeds (training, validation, ...) from one master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def discount(r: float, t: float) -> float:
    """Discount factor ``exp(-r t)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return float(np.exp(-r * t))


def cp_sign(side) -> np.ndarray | int:
    """Map ``"call"``/``"put"`` (or +1/-1) to +1/-1."""
    if isinstance(side, str):
        try:
            return {"call": 1, "put": -1}[side.lower()]
        except KeyError:
            raise ValueError(f"side must be 'call' or 'put', got {side!r}") from None
    return np.where(np.asarray(side) > 0, 1, -1)


def black_scholes(spot, strike, r, sigma, tau, side):
    """Black-Scholes price of a European call or put, vectorised.

    ``side`` is ``"call"``, ``"put"`` or an array of +1 (call) / -1 (put).
    At ``tau == 0`` or ``sigma == 0`` the deterministic limit
    ``max(cp * (spot - strike * exp(-r tau)), 0)`` is returned.
    """
    spot = np.asarray(spot, dtype=float)
    strike = np.asarray(strike, dtype=float)
    if np.any(spot <= 0) or np.any(strike <= 0):
        raise ValueError("spot and strike must be positive")
    if np.any(np.asarray(tau) < 0) or sigma < 0:
        raise ValueError("tau and sigma must be non-negative")
    cp = cp_sign(side)
    tau = np.asarray(tau, dtype=float)
    df = np.exp(-r * tau)
    fwd_strike = strike * df
    vol = sigma * np.sqrt(tau)

    # tiny vol sends d1 to +/-inf, which the normal CDF maps to the right limit
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d1 = np.log(spot / fwd_strike) / vol + 0.5 * vol
        d2 = d1 - vol
        price = cp * (spot * norm.cdf(cp * d1) - fwd_strike * norm.cdf(cp * d2))
    limit = np.maximum(cp * (spot - fwd_strike), 0.0)
    out = np.where(vol > 0, price, limit)
    return out[()] if out.ndim == 0 else out
