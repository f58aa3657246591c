"""Covariate-dependent mixture weights and truncated HDP top-level weights."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

SIMPLEX_TOL = 1e-12


@dataclass
class TopLevelWeights:
    p: np.ndarray
    alpha: float
    alpha0: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p <= 0) or abs(self.p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError("top-level weights must be a positive simplex")
        if self.alpha <= 0 or self.alpha0 <= 0:
            raise ValueError("concentrations must be positive")


@dataclass
class GroupWeightState:
    q: np.ndarray
    kernel: object

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if np.any(self.q <= 0):
            raise ValueError("q must be positive")


def normalized_log_weights(log_q, log_k):
    """Normalize log q + log K over the last axis."""
    a = np.asarray(log_q) + np.asarray(log_k)
    lse = logsumexp(a, axis=-1, keepdims=True)
    if np.any(~np.isfinite(lse)):
        raise ValueError("all weight terms underflow")
    return a - lse


def covariate_weights(q, kernel, x):
    """Weights q_j K(x|psi_j) / sum_k q_k K(x|psi_k); kernel params on the last axis."""
    q = np.asarray(q, dtype=float)
    return np.exp(normalized_log_weights(np.log(q), kernel.log_eval(x)))


def stick_breaking(v):
    v = np.asarray(v, dtype=float)
    rest = np.concatenate([[1.0], np.cumprod(1.0 - v)])
    return np.concatenate([v, [1.0]]) * rest


def normalize_q(q):
    q = np.asarray(q, dtype=float)
    return q / q.sum(axis=-1, keepdims=True)


def augmented_log_density(xi, log_q, log_k, z, neg_log_u=None):
    """log q_z K_z exp(-xi sum_k q_k K_k) for one observation.

    With slice variables the exponential factors become indicators
    1(-log u_k > xi q_k K_k), so the density is q_z K_z on the slice and 0 off it.
    Integrating xi over (0, inf) recovers the normalized weight of z.
    """
    log_q = np.asarray(log_q, dtype=float)
    log_k = np.asarray(log_k, dtype=float)
    lead = log_q[z] + log_k[z]
    mass = xi * np.exp(log_q + log_k)
    if neg_log_u is None:
        return lead - mass.sum()
    return np.where(np.all(np.asarray(neg_log_u) > mass), lead, -np.inf)
