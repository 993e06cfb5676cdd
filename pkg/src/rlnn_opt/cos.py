"""Fourier-cosine (COS) valuation of Bermudan options under GBM.

Log-moneyness ``x = ln(S / K)``.  The value function at each exercise date is
carried as its cosine-series coefficients on ``[a, b]``; continuation values
are recovered from the GBM characteristic function.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from .bermudan_engine import BermudanSpec
from .market_model import MarketParams, cp_sign


@dataclass(frozen=True)
class CosConfig:
    n_terms: int = 256
    range_width: float = 10.0
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    method: str = "direct"

    def __post_init__(self):
        if self.n_terms < 16:
            raise ValueError("n_terms must be at least 16")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.method not in ("direct", "fft"):
            raise ValueError("method must be 'direct' or 'fft'")


def char_fn(u, dt, r, sigma):
    """Characteristic function of the GBM log-increment over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    mu = r - 0.5 * sigma**2
    return np.exp(1j * u * mu * dt - 0.5 * sigma**2 * u**2 * dt)


def truncation_range(r, sigma, T, range_width=10.0, x0=0.0):
    """Cumulant-based interval ``x0 + c1 -/+ range_width * sqrt(c2)``."""
    if T <= 0:
        raise ValueError("T must be positive")
    c1 = (r - 0.5 * sigma**2) * T
    c2 = sigma**2 * T
    half = range_width * np.sqrt(c2)
    return x0 + c1 - half, x0 + c1 + half


def _chi_psi(a, b, c, d, n_terms):
    k = np.arange(n_terms)
    w = k * np.pi / (b - a)
    ud, uc = w * (d - a), w * (c - a)
    chi = (np.cos(ud) * np.exp(d) - np.cos(uc) * np.exp(c)
           + w * (np.sin(ud) * np.exp(d) - np.sin(uc) * np.exp(c))) / (1.0 + w**2)
    psi = np.empty(n_terms)
    psi[0] = d - c
    psi[1:] = (np.sin(ud[1:]) - np.sin(uc[1:])) / w[1:]
    return chi, psi


def payoff_coefficients(a, b, x1, x2, K, side, n_terms=256):
    """Cosine coefficients of ``alpha * K * (e^y - 1)`` restricted to ``[x1, x2]``."""
    if x1 > x2:
        raise ValueError("x1 must not exceed x2")
    if x1 == x2:
        return np.zeros(n_terms)
    chi, psi = _chi_psi(a, b, x1, x2, n_terms)
    return 2.0 / (b - a) * cp_sign(side) * K * (chi - psi)


def _theta_integrals(theta1, theta2, n):
    """``I(n) = int_{theta1}^{theta2} exp(i n theta) d theta`` for integer arrays ``n``."""
    n = np.asarray(n)
    out = np.empty(n.shape, dtype=complex)
    zero = n == 0
    out[zero] = theta2 - theta1
    nz = n[~zero]
    out[~zero] = (np.exp(1j * nz * theta2) - np.exp(1j * nz * theta1)) / (1j * nz)
    return out


def continuation_coefficients(Vk_next, a, b, x1, x2, dt, r, sigma, method="direct"):
    """Cosine coefficients of the continuation function restricted to ``[x1, x2]``.

    The kernel splits into a Hankel part (index ``j + k``) and a Toeplitz part
    (index ``j - k``).  ``method="direct"`` forms them explicitly;
    ``method="fft"`` applies both through FFT convolutions.
    """
    v = np.asarray(Vk_next, dtype=float)
    L = v.size
    if x1 >= x2 or not np.any(v):
        return np.zeros(L)
    k = np.arange(L)
    u = char_fn(k * np.pi / (b - a), dt, r, sigma) * v
    u[0] *= 0.5
    th1, th2 = np.pi * (x1 - a) / (b - a), np.pi * (x2 - a) / (b - a)
    if method == "direct":
        hankel = _theta_integrals(th1, th2, k[:, None] + k[None, :])
        toeplitz = _theta_integrals(th1, th2, k[None, :] - k[:, None])
        s = (hankel + toeplitz) @ u
    elif method == "fft":
        hank_seq = _theta_integrals(th1, th2, np.arange(2 * L - 1))
        toep_seq = _theta_integrals(th1, th2, np.arange(-(L - 1), L))
        # Hankel: sum_j I(j+k) u_j ; Toeplitz: sum_j I(j-k) u_j
        h = fftconvolve(hank_seq, u[::-1])[L - 1:2 * L - 1]
        t = fftconvolve(toep_seq[::-1], u)[L - 1:2 * L - 1]
        s = h + t
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.exp(-r * dt) * (s.real / np.pi)


def continuation_series(x, Vk_next, a, b, dt, r, sigma, derivative=False):
    """Discounted expectation of the next value function, as a function of ``x``."""
    x = np.asarray(x, dtype=float)
    L = len(Vk_next)
    w = np.arange(L) * np.pi / (b - a)
    coef = char_fn(w, dt, r, sigma) * np.asarray(Vk_next)
    coef[0] *= 0.5
    phase = np.exp(1j * np.multiply.outer(x - a, w))
    if derivative:
        phase = phase * (1j * w)
    out = np.exp(-r * dt) * (phase @ coef).real
    return out[()] if out.ndim == 0 else out


def find_exercise_point(Vk_next, a, b, dt, market: MarketParams, spec: BermudanSpec,
                        guess=0.0, tol=1e-12, max_iter=50):
    """Log-moneyness where continuation equals intrinsic value.

    Returns ``(x_star, status)`` with status ``"root"``, ``"no_exercise"`` or
    ``"always_exercise"``; in the last two cases ``x_star`` is the boundary
    of ``[a, b]`` that empties or fills the exercise region.
    """
    alpha = cp_sign(spec.side)
    K, r, sigma = spec.strike, market.r, market.sigma

    def g(x):
        return continuation_series(x, Vk_next, a, b, dt, r, sigma) - alpha * K * np.expm1(x)

    def dg(x):
        return continuation_series(x, Vk_next, a, b, dt, r, sigma, derivative=True) - alpha * K * np.exp(x)

    x = float(np.clip(guess, a, b))
    for _ in range(max_iter):
        step = g(x) / dg(x)
        if not np.isfinite(step):
            break
        x_new = x - step
        if not a <= x_new <= b:
            break
        if abs(x_new - x) < tol:
            return x_new, "root"
        x = x_new

    grid = np.linspace(a, b, 513)
    vals = g(grid)
    flips = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
    if flips.size == 0:
        # put exercises below x*, call above; map "never" / "always" onto the edges
        holds = bool(vals[0] > 0)
        if alpha < 0:
            return (a, "no_exercise") if holds else (b, "always_exercise")
        return (b, "no_exercise") if holds else (a, "always_exercise")
    i = flips[np.argmin(np.abs(grid[flips] - guess))]
    if vals[i] == 0:
        return float(grid[i]), "root"
    return float(brentq(g, grid[i], grid[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps)), "root"


class CosPricer:
    """Backward recursion of value-function coefficients for one contract.

    ``x_range`` lists log-moneyness values the caller will query; the
    truncation interval is widened to cover them.
    """

    def __init__(self, market: MarketParams, spec: BermudanSpec, config: CosConfig = CosConfig(),
                 x_range=(0.0, 0.0)):
        times = spec.times
        steps = np.diff(np.concatenate(([0.0], times)))
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("COS pricing requires equally spaced exercise dates")
        self.market, self.spec, self.config = market, spec, config
        self.dt = float(steps[0])
        x0 = np.log(market.s0 / spec.strike)
        lo = min(float(np.min(x_range)), x0, 0.0)
        hi = max(float(np.max(x_range)), x0, 0.0)
        a, _ = truncation_range(market.r, market.sigma, spec.maturity, config.range_width, lo)
        _, b = truncation_range(market.r, market.sigma, spec.maturity, config.range_width, hi)
        self.a, self.b = float(a), float(b)
        self._recurse()

    def _recurse(self):
        spec, cfg, a, b = self.spec, self.config, self.a, self.b
        M, L, K = spec.n_exercise, cfg.n_terms, spec.strike
        put = cp_sign(spec.side) < 0
        self.Vk = [None] * M
        self.x_star = [None] * M
        self.status = [None] * M
        self.x_star[-1], self.status[-1] = 0.0, "root"
        if put:
            self.Vk[-1] = payoff_coefficients(a, b, a, 0.0, K, spec.side, L)
        else:
            self.Vk[-1] = payoff_coefficients(a, b, 0.0, b, K, spec.side, L)
        guess = 0.0
        for i in range(M - 2, -1, -1):
            nxt = self.Vk[i + 1]
            xs, status = find_exercise_point(nxt, a, b, self.dt, self.market, spec, guess,
                                             cfg.newton_tol, cfg.newton_max_iter)
            self.x_star[i], self.status[i] = xs, status
            args = (self.dt, self.market.r, self.market.sigma, cfg.method)
            if put:
                self.Vk[i] = (payoff_coefficients(a, b, a, xs, K, spec.side, L)
                              + continuation_coefficients(nxt, a, b, xs, b, *args))
            else:
                self.Vk[i] = (continuation_coefficients(nxt, a, b, a, xs, *args)
                              + payoff_coefficients(a, b, xs, b, K, spec.side, L))
            guess = xs

    def _x(self, spots):
        return np.log(np.asarray(spots, dtype=float) / self.spec.strike)

    def price(self) -> float:
        return float(continuation_series(self._x(self.market.s0), self.Vk[0], self.a, self.b,
                                         self.spec.exercise_times[0], self.market.r, self.market.sigma))

    def continuation(self, i, spots):
        """Continuation value at exercise index ``i`` (zero at maturity)."""
        spots = np.asarray(spots, dtype=float)
        if i == self.spec.n_exercise - 1:
            return np.zeros_like(spots)
        return continuation_series(self._x(spots), self.Vk[i + 1], self.a, self.b, self.dt,
                                   self.market.r, self.market.sigma)

    def value_at(self, t, spots):
        """Option value at time ``t`` in ``[0, T)``, or at ``T`` itself (the payoff)."""
        times = self.spec.times
        spots = np.asarray(spots, dtype=float)
        if t < 0 or t > times[-1] + 1e-12:
            raise ValueError(f"t={t} outside [0, {times[-1]}]")
        hit = np.flatnonzero(np.isclose(times, t, rtol=0.0, atol=1e-12))
        if hit.size:
            i = hit[0]
            return np.maximum(self.spec.payoff(spots), self.continuation(i, spots))
        m = int(np.searchsorted(times, t))
        return continuation_series(self._x(spots), self.Vk[m], self.a, self.b, times[m] - t,
                                   self.market.r, self.market.sigma)


def price_cos(market: MarketParams, spec: BermudanSpec, config: CosConfig = CosConfig()) -> float:
    """Time-zero Bermudan price."""
    return CosPricer(market, spec, config).price()


def value_at_state(market: MarketParams, spec: BermudanSpec, config: CosConfig, t, spot):
    """Option value at time ``t < T`` for one or many spots sharing one coefficient pass."""
    if t >= spec.maturity:
        raise ValueError("t must be before maturity")
    x = np.log(np.atleast_1d(np.asarray(spot, dtype=float)) / spec.strike)
    pricer = CosPricer(market, spec, config, x_range=(x.min(), x.max()))
    out = pricer.value_at(t, spot)
    return out
