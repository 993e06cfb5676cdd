"""Longstaff-Schwartz regression with a cubic basis, and intra-period interpolation.

Regressions use spots scaled by ``1/K``; coefficients are stored in that
scaled basis together with the scale.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bermudan_engine import BermudanSpec
from .market_model import MarketParams, PathGrid

VALUE_RECURSION = "value"
CASHFLOW = "cashflow"
VALUE_BLEND = "value"
POLY_BLEND = "poly"


@dataclass(frozen=True)
class CubicCoeffs:
    """Row ``m`` holds ``c0..c3`` at exercise date ``times[m]`` (in the ``S/scale`` basis)."""

    times: np.ndarray
    coeffs: np.ndarray
    scale: float

    def evaluate(self, m, spots):
        return zeta(self.coeffs[m], np.asarray(spots) / self.scale)


@dataclass(frozen=True)
class LsmResult:
    t0_price: float
    coeffs: CubicCoeffs
    times: np.ndarray
    values: np.ndarray
    continuation: np.ndarray
    spots: np.ndarray
    r: float
    spec: BermudanSpec


def basis(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([np.ones_like(x), x, x * x, x * x * x], axis=-1)


def zeta(c, x):
    """Cubic polynomial ``c0 + c1 x + c2 x^2 + c3 x^3`` (``c`` may be per-path rows)."""
    c = np.asarray(c)
    return basis(x) @ c if c.ndim == 1 else np.einsum("...k,...k->...", basis(x), c)


def regress_cubic(x, y) -> np.ndarray:
    """Least squares on ``{1, x, x^2, x^3}``; min-norm when degenerate."""
    return np.linalg.lstsq(basis(x), np.asarray(y, dtype=float), rcond=None)[0]


def fit_lsm(paths: PathGrid, spec: BermudanSpec, market: MarketParams, method=VALUE_RECURSION) -> LsmResult:
    """Backward regression of discounted future value on the current spot.

    ``method="value"`` regresses the fitted next-date value over all paths.
    ``method="cashflow"`` is the classical variant: realised discounted
    cashflows regressed on in-the-money paths only.
    """
    if method not in (VALUE_RECURSION, CASHFLOW):
        raise ValueError(f"unknown LSM method {method!r}")
    times = spec.times
    spots = paths.select(times)
    M = spec.n_exercise
    scale = spec.strike
    coeffs = np.zeros((M, 4))
    values = np.empty_like(spots)
    cont = np.zeros_like(spots)
    values[:, -1] = spec.payoff(spots[:, -1])
    cash = values[:, -1].copy()
    for i in range(M - 2, -1, -1):
        df = np.exp(-market.r * (times[i + 1] - times[i]))
        h = spec.intrinsic(spots[:, i])
        x = spots[:, i] / scale
        if method == VALUE_RECURSION:
            coeffs[i] = regress_cubic(x, df * values[:, i + 1])
        else:
            cash *= df
            itm = h > 0
            coeffs[i] = regress_cubic(x[itm], cash[itm]) if itm.sum() >= 4 else 0.0
        cont[:, i] = zeta(coeffs[i], x)
        values[:, i] = np.maximum(h, cont[:, i])
        if method == CASHFLOW:
            stop = (h > 0) & (h > cont[:, i])
            cash[stop] = h[stop]
    if method == VALUE_RECURSION:
        cash = values[:, 0]
    mean_next = float(np.mean(np.exp(-market.r * times[0]) * cash))
    t0 = max(float(spec.intrinsic(market.s0)), mean_next)
    return LsmResult(t0, CubicCoeffs(times, coeffs, scale), times, values, cont, spots, market.r, spec)


def apply_lsm(result: LsmResult, paths: PathGrid) -> LsmResult:
    """Evaluate fitted coefficients on other paths; the time-zero price is kept."""
    spec = result.spec
    spots = paths.select(result.times)
    values = np.empty_like(spots)
    cont = np.zeros_like(spots)
    values[:, -1] = spec.payoff(spots[:, -1])
    for i in range(spec.n_exercise - 1):
        cont[:, i] = result.coeffs.evaluate(i, spots[:, i])
        values[:, i] = np.maximum(spec.intrinsic(spots[:, i]), cont[:, i])
    return replace(result, values=values, continuation=cont, spots=spots)


def _bracket(times, t):
    """Index ``m`` with ``t`` strictly inside ``(t_{m-1}, t_m)`` (``t_{-1} = 0``) and the weight."""
    grid = np.concatenate(([0.0], times))
    m = int(np.searchsorted(grid, t, side="left"))
    if m == 0 or m >= grid.size or np.isclose(grid[m], t, rtol=0, atol=1e-12) \
            or np.isclose(grid[m - 1], t, rtol=0, atol=1e-12):
        raise ValueError(f"t={t} is not strictly between exercise dates")
    w = (t - grid[m - 1]) / (grid[m] - grid[m - 1])
    return m - 1, w


def _linear(result: LsmResult, matrix, t):
    # column m-1 of ``matrix`` is exercise date m; the t0 endpoint is the time-zero price
    i, w = _bracket(result.times, t)
    n = result.values.shape[0]
    left = np.full(n, result.t0_price) if i == 0 else matrix[:, i - 1]
    right = result.values[:, -1] if i == result.times.size - 1 else matrix[:, i]
    return (1.0 - w) * left + w * right


def interp_option_value(result: LsmResult, t):
    """Per-path linear interpolation in time of the option value."""
    return _linear(result, result.values, t)


def interp_continuation_value(result: LsmResult, t):
    """Per-path linear interpolation in time of the continuation value.

    The maturity endpoint is the payoff, as the stored continuation there is zero.
    """
    return _linear(result, result.continuation, t)


def interp_params(result: LsmResult, spots_t, t, boundary=VALUE_BLEND):
    """Interpolate cubic coefficients in time and evaluate at the spot at ``t``.

    The first interval starts from the constant polynomial equal to the
    time-zero price.  In the last interval, ``boundary="value"`` blends the
    polynomial value at the last regression date with the payoff at the
    intermediate spot; ``boundary="poly"`` instead blends coefficients with a
    cubic fitted to the payoff at maturity.
    """
    i, w = _bracket(result.times, t)
    coeffs = result.coeffs
    spots_t = np.asarray(spots_t, dtype=float)
    x = spots_t / coeffs.scale
    M = result.times.size
    left = np.array([result.t0_price, 0.0, 0.0, 0.0]) if i == 0 else coeffs.coeffs[i - 1]
    if i < M - 1:
        return zeta((1.0 - w) * left + w * coeffs.coeffs[i], x)
    if boundary == VALUE_BLEND:
        return (1.0 - w) * zeta(left, x) + w * result.spec.payoff(spots_t)
    if boundary == POLY_BLEND:
        right = regress_cubic(result.spots[:, -1] / coeffs.scale, result.values[:, -1])
        return zeta((1.0 - w) * left + w * right, x)
    raise ValueError(f"unknown boundary mode {boundary!r}")


def true_fit(spots_t, next_values, t, t_next, r, scale=1.0):
    """Regress the discounted next-exercise value on the cubic basis at ``t``.

    Returns ``(coefficients in the S/scale basis, fitted per-path values)``.
    """
    if t_next < t:
        raise ValueError("t_next must not precede t")
    x = np.asarray(spots_t, dtype=float) / scale
    target = np.exp(-r * (t_next - t)) * np.asarray(next_values, dtype=float)
    c = regress_cubic(x, target)
    return c, zeta(c, x)
