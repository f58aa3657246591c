"""Adaptive Metropolis-Hastings on transformed coordinates.

All routines are batched: a state carries running moments for many
independent blocks of equal dimension that step together.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .stochastic import as_generator

SCALE_MIN, SCALE_MAX = np.exp(-50.0), np.exp(50.0)
EPSILON = 0.01
WARMUP = 100


# transforms -----------------------------------------------------------------

@dataclass(frozen=True)
class Log:
    def forward(self, theta):
        return np.log(theta)

    def inverse(self, x):
        return np.exp(x)

    def log_jacobian(self, theta):
        return -np.log(theta)


@dataclass(frozen=True)
class LogitBounded:
    """x = -log(1/(theta-lo) - 1/(hi-lo)); tends to log(theta-lo) as hi -> inf."""

    lo: object = 0.0
    hi: object = 1.0

    def _parts(self, theta):
        t = np.asarray(theta, dtype=float) - self.lo
        w = np.asarray(self.hi, dtype=float) - self.lo
        return t, w

    def forward(self, theta):
        t, w = self._parts(theta)
        if np.any(t <= 0) or np.any(t >= w):
            raise ValueError("value outside bounded domain")
        return np.log(t) - np.log1p(-t / w)

    def inverse(self, x):
        w = np.asarray(self.hi, dtype=float) - self.lo
        with np.errstate(over="ignore"):
            return self.lo + 1.0 / (np.exp(-np.asarray(x, dtype=float)) + 1.0 / w)

    def log_jacobian(self, theta):
        t, w = self._parts(theta)
        return -np.log(t) - np.log1p(-t / w)


@dataclass(frozen=True)
class ShiftedLog:
    lo: object = 0.0

    def forward(self, theta):
        t = np.asarray(theta, dtype=float) - self.lo
        if np.any(t <= 0):
            raise ValueError("value below lower bound")
        return np.log(t)

    def inverse(self, x):
        return self.lo + np.exp(x)

    def log_jacobian(self, theta):
        return -np.log(np.asarray(theta, dtype=float) - self.lo)


@dataclass(frozen=True)
class AdditiveLogRatio:
    """Simplex (last axis, length J) to R^(J-1) via log(p_j / p_J).

    With on_log_scale the parameter is passed as log p, which keeps tiny
    weights representable.
    """

    on_log_scale: bool = False

    def _logp(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta if self.on_log_scale else np.log(theta)

    def forward(self, theta):
        lp = self._logp(theta)
        return lp[..., :-1] - lp[..., -1:]

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        full = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
        lp = full - logsumexp(full, axis=-1, keepdims=True)
        return lp if self.on_log_scale else np.exp(lp)

    def log_jacobian(self, theta):
        return -np.sum(self._logp(theta), axis=-1)


Transform = Log | LogitBounded | ShiftedLog | AdditiveLogRatio


def forward(t, theta):
    return t.forward(theta)


def inverse(t, x):
    return t.inverse(x)


def log_jacobian(t, theta):
    return t.log_jacobian(theta)


# state ----------------------------------------------------------------------

@dataclass
class AmhState:
    """Running moments for a batch of blocks.

    mode: "fixed" (scale constant), "adaptive" (scale tuned toward the
    target acceptance) or "variance" (univariate random walk whose variance
    itself is tuned; no covariance is used for proposals).
    """

    dim: int
    batch_shape: tuple = ()
    mode: str = "fixed"
    scale: np.ndarray = None
    target: float = 0.234
    n: int = 0
    mean: np.ndarray = field(default=None, repr=False)
    scatter: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.batch_shape = tuple(self.batch_shape)
        if self.scale is None:
            self.scale = {"fixed": 2.4 ** 2 / self.dim, "adaptive": 0.001, "variance": 0.01}[self.mode]
        self.scale = np.broadcast_to(np.asarray(self.scale, dtype=float), self.batch_shape).copy()
        if self.mean is None:
            self.mean = np.zeros(self.batch_shape + (self.dim,))
            self.scatter = np.zeros(self.batch_shape + (self.dim, self.dim))

    def covariance(self):
        if self.n < 2:
            raise ValueError("covariance needs at least two points")
        return self.scatter / (self.n - 1)

    def copy(self):
        return AmhState(self.dim, self.batch_shape, self.mode, self.scale.copy(), self.target,
                        self.n, self.mean.copy(), self.scatter.copy())


def update_moments(state, x_new):
    """Welford recursion; equals the batch covariance of every prefix."""
    x = np.asarray(x_new, dtype=float).reshape(state.batch_shape + (state.dim,))
    state.n += 1
    delta = x - state.mean
    state.mean = state.mean + delta / state.n
    state.scatter = state.scatter + delta[..., :, None] * (x - state.mean)[..., None, :]
    return state


def proposal_covariance(state):
    d = state.dim
    eye = np.eye(d)
    if state.mode == "variance":
        return state.scale[..., None, None] * eye
    if state.n + 1 <= WARMUP or state.n < 2:
        return np.broadcast_to(EPSILON * eye, state.batch_shape + (d, d))
    return state.scale[..., None, None] * (state.covariance() + EPSILON * eye)


def propose(state, x_old, rng):
    rng = as_generator(rng)
    x = np.asarray(x_old, dtype=float).reshape(state.batch_shape + (state.dim,))
    z = rng.standard_normal(x.shape)
    if state.dim == 1:
        sd = np.sqrt(proposal_covariance(state)[..., 0, 0])
        return x + sd[..., None] * z
    C = np.linalg.cholesky(proposal_covariance(state))
    return x + np.einsum("...ij,...j->...i", C, z)


def adapt_scale(s, n, accept_prob, target):
    w = np.exp(np.log(s) + n ** -0.7 * (np.asarray(accept_prob) - target))
    return np.clip(w, SCALE_MIN, SCALE_MAX)


def step(state, theta_old, log_target, t, rng, forced=None, log_target_old=None):
    """One Metropolis-Hastings update with Jacobian correction.

    forced: optional (mask, theta) replacing masked blocks by prior draws that
    are always accepted; their values still feed the running moments.
    Returns (theta_new, accept_prob, state).
    """
    rng = as_generator(rng)
    theta_old = np.asarray(theta_old, dtype=float)
    x_old = t.forward(theta_old)
    xshape = x_old.shape
    x_prop = propose(state, x_old, rng).reshape(xshape)
    theta_prop = np.asarray(t.inverse(x_prop), dtype=float)

    def batch_lj(th):
        lj = np.asarray(t.log_jacobian(th), dtype=float)
        return lj if lj.shape == state.batch_shape else lj.sum(axis=-1)

    lt_old = log_target(theta_old) if log_target_old is None else log_target_old
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        lj_new = batch_lj(theta_prop)
        lt_new = np.asarray(log_target(theta_prop), dtype=float)
        log_r = lt_new - lj_new - lt_old + batch_lj(theta_old)
        valid = np.isfinite(lt_new) & np.isfinite(lj_new) & ~np.isnan(log_r)
        log_r = np.where(valid, log_r, -np.inf)
        accept_prob = np.minimum(1.0, np.exp(np.minimum(log_r, 0.0)))
    accept = rng.uniform(size=state.batch_shape) < accept_prob

    extra = theta_old.ndim - len(state.batch_shape)
    expand = (Ellipsis,) + (None,) * extra
    theta_new = np.where(accept[expand], theta_prop, theta_old)
    if forced is not None:
        mask, theta_forced = forced
        mask = np.asarray(mask, dtype=bool)
        theta_new = np.where(mask[expand], theta_forced, theta_new)
        accept_prob = np.where(mask, 1.0, accept_prob)

    update_moments(state, t.forward(theta_new))
    if state.mode != "fixed":
        state.scale = adapt_scale(state.scale, state.n, accept_prob, state.target)
    if theta_new.ndim == 0:
        theta_new = float(theta_new)
    return theta_new, accept_prob, state
