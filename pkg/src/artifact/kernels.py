"""Covariate kernels and the truncation regions their slice variables induce.

Parameter arrays broadcast: evaluating at covariates of shape S against
parameters of shape P returns shape S + P.
"""

from dataclasses import dataclass

import numpy as np

from .stochastic import IntervalUnion

BANDWIDTH_FLOOR = 1e-12
SIMPLEX_TOL = 1e-9


def _floor(v):
    return np.maximum(np.asarray(v, dtype=float), BANDWIDTH_FLOOR)


def canonical_center(center, period):
    """Map a periodic center into (-pi*period/2, pi*period/2]."""
    width = np.pi * np.asarray(period, dtype=float)
    c = np.asarray(center, dtype=float)
    out = -(np.mod(-c + 0.5 * width, width) - 0.5 * width)
    return out if out.ndim else float(out)


@dataclass
class GaussianKernel:
    center: np.ndarray
    bandwidth: np.ndarray

    family = "gaussian"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.bandwidth = _floor(self.bandwidth)

    def log_eval(self, x):
        d = np.subtract.outer(np.asarray(x, dtype=float), self.center)
        return -0.5 * d * d / self.bandwidth

    def select(self, idx):
        return GaussianKernel(self.center[idx], self.bandwidth[idx])


@dataclass
class PeriodicKernel:
    center: np.ndarray
    bandwidth: np.ndarray
    period: np.ndarray

    family = "periodic"

    def __post_init__(self):
        self.period = np.asarray(self.period, dtype=float)
        if np.any(self.period <= 0):
            raise ValueError("period must be positive")
        self.center = np.asarray(canonical_center(self.center, self.period), dtype=float)
        self.bandwidth = _floor(self.bandwidth)

    def log_eval(self, x):
        s = np.sin(np.subtract.outer(np.asarray(x, dtype=float), self.center) / self.period)
        return -2.0 * s * s / self.bandwidth

    def select(self, idx):
        return PeriodicKernel(self.center[idx], self.bandwidth[idx], self.period[idx])


@dataclass
class CategoricalKernel:
    """Level probabilities on the last axis; levels are 1-based."""

    probs: np.ndarray

    family = "categorical"

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p <= 0):
            raise ValueError("categorical probabilities must be positive")
        tot = p.sum(axis=-1, keepdims=True)
        if np.any(np.abs(tot - 1.0) > SIMPLEX_TOL):
            raise ValueError("categorical probabilities must sum to one")
        self.probs = p / tot

    @property
    def levels(self):
        return self.probs.shape[-1]

    def log_eval(self, x):
        x = np.asarray(x)
        if np.any(x < 1) or np.any(x > self.levels) or np.any(x != np.round(x)):
            raise ValueError("categorical level out of range")
        lp = np.log(self.probs)
        # result shape: x.shape + probs.shape[:-1]
        taken = np.take(lp, x.astype(int) - 1, axis=-1)
        return np.moveaxis(taken, tuple(range(lp.ndim - 1, taken.ndim)), tuple(range(x.ndim)))

    def select(self, idx):
        return CategoricalKernel(self.probs[idx])


KernelParams = GaussianKernel | PeriodicKernel | CategoricalKernel


def eval_kernel(x, psi):
    out = np.exp(psi.log_eval(x))
    return out if np.ndim(out) else float(out)


def _log_ratio(neg_log_u, xi, q):
    """log(-log u / (xi q)); negative exactly on constrained rows."""
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(neg_log_u, dtype=float)) - np.log(np.asarray(xi, dtype=float) * q)


def gaussian_center_region(x, neg_log_u, xi, q, bandwidth):
    """Centers compatible with every slice constraint of one (component, group).

    Rows are passed as arrays; `neg_log_u` is -log u for the component.
    """
    lr = np.atleast_1d(_log_ratio(neg_log_u, xi, q))
    x = np.broadcast_to(np.asarray(x, dtype=float), lr.shape)
    active = lr < 0
    if not np.any(active):
        return IntervalUnion.real_line()
    k = np.sqrt(-2.0 * bandwidth * lr[active])
    region = IntervalUnion.excluding(zip(x[active] - k, x[active] + k))
    if region.is_empty:
        raise ValueError("infeasible region")
    return region


def gaussian_bandwidth_upper(x, neg_log_u, xi, q, center, axis=0):
    """Largest bandwidth keeping every slice constraint; inf if unconstrained."""
    lr = _log_ratio(neg_log_u, xi, q)
    d2 = (np.asarray(x, dtype=float) - center) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(lr < 0, -d2 / (2.0 * lr), np.inf)
    out = np.min(bound, axis=axis, initial=np.inf)
    return out if np.ndim(out) else float(out)


def periodic_bandwidth_upper(x, neg_log_u, xi, q, center, period, axis=0):
    lr = _log_ratio(neg_log_u, xi, q)
    s2 = np.sin((np.asarray(x, dtype=float) - center) / period) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(lr < 0, -2.0 * s2 / lr, np.inf)
    out = np.min(bound, axis=axis, initial=np.inf)
    if np.any(np.asarray(out) <= 0):
        raise ValueError("empty bandwidth region: constrained row sits on the center")
    return out if np.ndim(out) else float(out)
