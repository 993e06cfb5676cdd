"""Shallow ReLU network read as a static hedge portfolio of vanilla options.

Each hidden node is a call (+1) or put (-1) payoff with strike equal to the
node bias; the output weights are the portfolio units.  Training follows the
hybrid scheme: Adam moves the strikes along the gradient of the loss
minimised over weights, and the weights are then re-solved exactly by least
squares.  ``mode="joint_adam"`` is the plain baseline where Adam updates both.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

HYBRID = "hybrid"
JOINT_ADAM = "joint_adam"


class TrainingError(RuntimeError):
    """Raised when training diverges (non-finite loss)."""


@dataclass(frozen=True)
class HedgeLayer:
    strikes: np.ndarray
    weights: np.ndarray
    cp: np.ndarray
    exercise_time: float = float("nan")

    def __post_init__(self):
        p = len(self.strikes)
        if p < 1 or len(self.weights) != p or len(self.cp) != p:
            raise ValueError("strikes, weights and cp must share a positive length")

    @property
    def p(self) -> int:
        return len(self.strikes)


@dataclass(frozen=True)
class TrainingConfig:
    p_call: int = 8
    p_put: int = 8
    moneyness_lo: float = 0.90
    moneyness_hi: float = 1.10
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 512
    strike_floor: float = 1e-8
    stop_tol: float = 1e-8
    stop_patience: int = 10
    mode: str = HYBRID

    def __post_init__(self):
        if not 0 < self.moneyness_lo < self.moneyness_hi:
            raise ValueError("need 0 < moneyness_lo < moneyness_hi")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.stop_patience < 1 or self.epochs < 0:
            raise ValueError("batch_size, stop_patience >= 1 and epochs >= 0 required")
        if self.p_call < 0 or self.p_put < 0:
            raise ValueError("node counts must be non-negative")
        if self.mode not in (HYBRID, JOINT_ADAM):
            raise ValueError(f"unknown training mode {self.mode!r}")


@dataclass
class AdamState:
    eta: np.ndarray
    nu: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, p: int) -> "AdamState":
        return cls(np.zeros(p), np.zeros(p), 0)


@dataclass(frozen=True)
class TrainingBatch:
    spots: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if len(self.spots) != len(self.targets):
            raise ValueError("spots and targets must have equal length")
        if np.any(np.asarray(self.spots) <= 0):
            raise ValueError("spots must be positive")

    def __len__(self):
        return len(self.spots)


@dataclass
class TrainingTrace:
    """Per-epoch record of the full-training-set loss."""

    epoch: list = field(default_factory=list)
    iteration: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    stopped_early: bool = False

    def record(self, epoch, iteration, loss, wall_ms):
        self.epoch.append(epoch)
        self.iteration.append(iteration)
        self.loss.append(float(loss))
        self.wall_ms.append(float(wall_ms))

    def rows(self):
        return list(zip(self.epoch, self.iteration, self.loss, self.wall_ms))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "iteration", "loss", "wall_ms"])
            for row in self.rows():
                writer.writerow([row[0], row[1], repr(row[2]), f"{row[3]:.3f}"])


def payoff_matrix(spots, strikes, cp) -> np.ndarray:
    """Hidden-layer output: entry (j, i) is ``max(cp_i * (spot_j - b_i), 0)``."""
    spots = np.asarray(spots, dtype=float).reshape(-1, 1)
    return np.maximum(np.asarray(cp) * (spots - np.asarray(strikes)), 0.0)


def network_value(spots, layer: HedgeLayer):
    """Portfolio payoff ``W . phi(S, b)``."""
    out = payoff_matrix(spots, layer.strikes, layer.cp) @ layer.weights
    return out[0] if np.ndim(spots) == 0 else out


def init_strikes(config: TrainingConfig, s0: float):
    """Equidistant call and put strikes in the moneyness band around ``s0``."""
    if config.p_call + config.p_put < 1:
        raise ValueError("at least one hidden node is required")
    lo, hi = config.moneyness_lo * s0, config.moneyness_hi * s0

    def band(n):
        if n == 1:
            return np.array([0.5 * (lo + hi)])
        return np.linspace(lo, hi, n)

    parts, signs = [], []
    for n, sign in ((config.p_call, 1), (config.p_put, -1)):
        if n:
            parts.append(band(n))
            signs.append(np.full(n, sign))
    return np.concatenate(parts), np.concatenate(signs)


def _lstsq(a, y, rcond=None):
    # min-norm solution; rank deficiency (e.g. duplicate floored strikes) is fine
    return np.linalg.lstsq(a, y, rcond=rcond)[0]

# Relative singular-value cutoff for the Gram solve.  A call and a put on the
# same strike differ by a linear function of spot, so the design is rank
# deficient by construction; its null directions show up around 1e-14.
GRAM_RCOND = 1e-12


def ols_weights(batch: TrainingBatch, strikes, cp) -> np.ndarray:
    """Least-squares weights without intercept on the batch design."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    x = payoff_matrix(batch.spots, strikes, cp)
    return _lstsq(x, np.asarray(batch.targets, dtype=float))


def batch_loss(batch: TrainingBatch, layer: HedgeLayer) -> float:
    """Summed pathwise loss ``sum_j 0.5 * (y_j - G(S_j))**2``."""
    res = np.asarray(batch.targets) - network_value(batch.spots, layer)
    return 0.5 * float(res @ res)


def grad_strikes(batch: TrainingBatch, layer: HedgeLayer) -> np.ndarray:
    """Batch gradient (a sum over paths) of the weight-optimised loss w.r.t. strikes.

    Uses the envelope form: with weights at their least-squares optimum the
    derivative through the weights vanishes, leaving
    ``residual_j * w_i * cp_i * 1{node i active at S_j}`` per path.
    """
    spots = np.asarray(batch.spots, dtype=float)
    active = (layer.cp * (spots[:, None] - layer.strikes)) > 0
    res = np.asarray(batch.targets) - payoff_matrix(spots, layer.strikes, layer.cp) @ layer.weights
    return (res @ active) * layer.weights * layer.cp


def adam_step(params, gradient, state: AdamState, config: TrainingConfig, floor=True):
    """One bias-corrected Adam update; strikes are floored afterwards."""
    g = np.asarray(gradient, dtype=float)
    step = state.step + 1
    eta = config.beta1 * state.eta + (1 - config.beta1) * g
    nu = config.beta2 * state.nu + (1 - config.beta2) * g * g
    eta_hat = eta / (1 - config.beta1**step)
    nu_hat = nu / (1 - config.beta2**step)
    new = np.asarray(params, dtype=float) - eta_hat * config.lr / (np.sqrt(nu_hat) + config.eps)
    if floor:
        new = np.maximum(new, config.strike_floor)
    return new, AdamState(eta, nu, step)


class GramCache:
    """Exact ``X^T X``, ``X^T Y`` and loss over a fixed training set.

    The hidden-layer columns are ReLUs of one scalar, so every Gram entry is a
    polynomial moment of the spots over an index range of the sorted sample.
    Prefix sums make each full-set least-squares solve O(p^2 log N).
    """

    def __init__(self, spots, targets):
        order = np.argsort(spots, kind="stable")
        s = np.asarray(spots, dtype=float)[order]
        y = np.asarray(targets, dtype=float)[order]
        self.s = s
        self.n = s.size
        z = np.zeros(1)
        self.c1 = np.concatenate((z, np.cumsum(np.ones_like(s))))
        self.cs = np.concatenate((z, np.cumsum(s)))
        self.cs2 = np.concatenate((z, np.cumsum(s * s)))
        self.cy = np.concatenate((z, np.cumsum(y)))
        self.csy = np.concatenate((z, np.cumsum(s * y)))
        self.yy = float(y @ y)

    def _ranges(self, strikes, cp):
        # calls are active for s > b, puts for s < b; boundary points contribute zero
        lo = np.where(cp > 0, np.searchsorted(self.s, strikes, side="right"), 0)
        hi = np.where(cp > 0, self.n, np.searchsorted(self.s, strikes, side="left"))
        return lo, hi

    def moments(self, strikes, cp):
        strikes = np.asarray(strikes, dtype=float)
        cp = np.asarray(cp, dtype=float)
        lo, hi = self._ranges(strikes, cp)
        ilo = np.maximum(lo[:, None], lo[None, :])
        ihi = np.maximum(np.minimum(hi[:, None], hi[None, :]), ilo)
        n0 = self.c1[ihi] - self.c1[ilo]
        n1 = self.cs[ihi] - self.cs[ilo]
        n2 = self.cs2[ihi] - self.cs2[ilo]
        bi, bk = strikes[:, None], strikes[None, :]
        gram = np.outer(cp, cp) * (n2 - (bi + bk) * n1 + bi * bk * n0)
        xty = cp * ((self.csy[hi] - self.csy[lo]) - strikes * (self.cy[hi] - self.cy[lo]))
        return gram, xty

    def solve(self, strikes, cp):
        """Full-set OLS weights and the mean loss ``L = 0.5/N * ||Y - XW||^2``."""
        gram, xty = self.moments(strikes, cp)
        w = _lstsq(gram, xty, GRAM_RCOND)
        return w, self._loss(gram, xty, w)

    def loss(self, strikes, cp, weights):
        gram, xty = self.moments(strikes, cp)
        return self._loss(gram, xty, weights)

    def _loss(self, gram, xty, w):
        sse = self.yy - 2.0 * (w @ xty) + w @ gram @ w
        return 0.5 * max(sse, 0.0) / self.n


def _joint_grads(spots, targets, strikes, weights, cp):
    x = payoff_matrix(spots, strikes, cp)
    res = targets - x @ weights
    active = (cp * (spots[:, None] - strikes)) > 0
    grad_w = -(res @ x)
    grad_b = (res @ active) * weights * cp
    return grad_w, grad_b


def fit_layer(training: TrainingBatch, s0: float, config: TrainingConfig = TrainingConfig(),
              seed: int = 0, exercise_time: float = float("nan")):
    """Fit one hedge layer to ``(spot, option value)`` pairs.

    Returns the fitted :class:`HedgeLayer` and a :class:`TrainingTrace` with
    the full-set loss after initialisation (epoch 0) and after every epoch.
    """
    n = len(training)
    if n == 0:
        raise ValueError("empty training set")
    spots = np.asarray(training.spots, dtype=float)
    targets = np.asarray(training.targets, dtype=float)
    if not (np.all(np.isfinite(spots)) and np.all(np.isfinite(targets))):
        raise TrainingError(f"non-finite training data (t={exercise_time})")
    strikes, cp = init_strikes(config, s0)
    cache = GramCache(spots, targets)
    weights, loss = cache.solve(strikes, cp)
    trace = TrainingTrace()
    start = time.perf_counter()
    trace.record(0, 0, loss, 0.0)

    rng = np.random.default_rng(seed)
    batches_per_epoch = max(1, -(-n // config.batch_size))
    p = strikes.size
    hybrid = config.mode == HYBRID
    state = AdamState.zeros(p if hybrid else 2 * p)
    quiet = 0
    iteration = 0
    for epoch in range(1, config.epochs + 1):
        for _ in range(batches_per_epoch):
            idx = rng.integers(0, n, size=config.batch_size)
            bs, bt = spots[idx], targets[idx]
            if hybrid:
                g = grad_strikes(TrainingBatch(bs, bt), HedgeLayer(strikes, weights, cp))
                strikes, state = adam_step(strikes, g, state, config)
                weights, new_loss = cache.solve(strikes, cp)
            else:
                gw, gb = _joint_grads(bs, bt, strikes, weights, cp)
                theta, state = adam_step(np.concatenate((weights, strikes)),
                                         np.concatenate((gw, gb)), state, config, floor=False)
                weights = theta[:p]
                strikes = np.maximum(theta[p:], config.strike_floor)
                new_loss = cache.loss(strikes, cp, weights)
            iteration += 1
            if not np.isfinite(new_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, iteration {iteration} "
                    f"(t={exercise_time}, mode={config.mode})")
            quiet = quiet + 1 if abs(new_loss - loss) < config.stop_tol else 0
            loss = new_loss
            if quiet >= config.stop_patience:
                break
        trace.record(epoch, iteration, loss, 1e3 * (time.perf_counter() - start))
        if quiet >= config.stop_patience:
            trace.stopped_early = True
            log.debug("stopping criterion met at epoch %d, iteration %d", epoch, iteration)
            break
    return HedgeLayer(strikes, weights, cp, exercise_time), trace


def relabel(layer: HedgeLayer, perm) -> HedgeLayer:
    """Same portfolio with hidden nodes permuted."""
    perm = np.asarray(perm)
    return replace(layer, strikes=layer.strikes[perm], weights=layer.weights[perm], cp=layer.cp[perm])
