"""Sampling and log-density primitives plus reproducible RNG streams."""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import betaln, gammainccinv, gammaincc, gammaln, log_ndtr, ndtr, ndtri

TINY_MASS = 1e-300


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by (seed, key...).

    The same (seed, key) always reproduces the same Philox sequence and
    distinct keys give independent streams, so chains can run in any order.
    """

    seed: int
    key: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")
        object.__setattr__(self, "key", tuple(int(k) for k in self.key))

    def child(self, *key):
        return RngStream(self.seed, self.key + tuple(key))

    def generator(self):
        seq = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(seq))


def as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class IntervalUnion:
    """Sorted disjoint open intervals on the extended real line."""

    def __init__(self, intervals=()):
        ivs = sorted((float(a), float(b)) for a, b in intervals if b > a)
        merged = []
        for a, b in ivs:
            if merged and a < merged[-1][1]:
                raise ValueError("intervals overlap")
            merged.append((a, b))
        self.intervals = tuple(merged)

    @classmethod
    def real_line(cls):
        return cls([(-np.inf, np.inf)])

    @classmethod
    def excluding(cls, holes):
        """Complement of the union of closed intervals [lo, hi]."""
        holes = sorted((float(a), float(b)) for a, b in holes)
        out, cursor = [], -np.inf
        for a, b in holes:
            if a > cursor:
                out.append((cursor, a))
            cursor = max(cursor, b)
        if cursor < np.inf:
            out.append((cursor, np.inf))
        return cls(out)

    def intersect(self, other):
        out = []
        for a, b in self.intervals:
            for c, d in other.intervals:
                lo, hi = max(a, c), min(b, d)
                if hi > lo:
                    out.append((lo, hi))
        return IntervalUnion(out)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x > a) & (x < b)
        return inside

    @property
    def is_empty(self):
        return len(self.intervals) == 0

    def __eq__(self, other):
        return isinstance(other, IntervalUnion) and self.intervals == other.intervals

    def __repr__(self):
        return f"IntervalUnion({list(self.intervals)})"


def _log1mexp(x):
    # log(1 - exp(x)) for x <= 0
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > -0.693, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def _log_std_mass(a, b):
    """log(Phi(b) - Phi(a)) for standardized bounds, stable in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = log_ndtr(-a) + _log1mexp(log_ndtr(-b) - log_ndtr(-a))
        lower = log_ndtr(b) + _log1mexp(log_ndtr(a) - log_ndtr(b))
        middle = np.log1p(-ndtr(a) - ndtr(-b))
    return np.where(a >= 0, upper, np.where(b <= 0, lower, middle))


def _tail_rejection(a, b, rng):
    """Exponential-proposal rejection for Z > a (a > 0), optionally Z < b."""
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    while True:
        z = a + rng.exponential(1.0 / alpha)
        if z < b and rng.uniform() <= np.exp(-0.5 * (z - alpha) ** 2):
            return z


def sample_std_interval(a, b, rng):
    """Standard normal restricted to (a, b); vectorized over bounds."""
    rng = as_generator(rng)
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    shape = a.shape
    a, b = np.atleast_1d(a, b)
    v = rng.uniform(size=a.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # upper-side representation: survival function interpolation
        la, lb = log_ndtr(-a), log_ndtr(-b)
        up = -ndtri(np.exp(la + np.log1p(-v * -np.expm1(lb - la))))
        la2, lb2 = log_ndtr(a), log_ndtr(b)
        lo = ndtri(np.exp(lb2 + np.log1p(-v * -np.expm1(la2 - lb2))))
        pa, pb = ndtr(a), ndtr(b)
        mid = ndtri(pa + v * (pb - pa))
    out = np.where(a >= 0, up, np.where(b <= 0, lo, mid))
    deep = ((a >= 0) & (la < np.log(TINY_MASS))) | ((b <= 0) & (lb2 < np.log(TINY_MASS)))
    for idx in zip(*np.nonzero(deep)):
        if a[idx] >= 0:
            out[idx] = _tail_rejection(a[idx], b[idx], rng)
        else:
            out[idx] = -_tail_rejection(-b[idx], -a[idx], rng)
    return np.clip(out, np.nextafter(a, np.inf), np.nextafter(b, -np.inf)).reshape(shape)


def sample_truncated_normal_interval(mean, sd, lo, hi, rng):
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    z = sample_std_interval((np.asarray(lo) - mean) / sd, (np.asarray(hi) - mean) / sd, rng)
    return mean + sd * z


def sample_truncated_normal(mean, variance, region, rng):
    """Draw from N(mean, variance) restricted to an IntervalUnion."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    if region.is_empty:
        raise ValueError("empty truncation region")
    rng = as_generator(rng)
    sd = np.sqrt(variance)
    bounds = np.array(region.intervals, dtype=float)
    a = (bounds[:, 0] - mean) / sd
    b = (bounds[:, 1] - mean) / sd
    logm = _log_std_mass(a, b)
    if not np.any(np.isfinite(logm)):
        if np.all(b - a <= 0):
            raise ValueError("degenerate tail truncation")
        # every piece lies beyond double-precision tails: weight pieces by their
        # nearest-edge log density, which dominates the mass asymptotically
        near = np.minimum(np.abs(a), np.abs(b))
        logm = -0.5 * near ** 2 - np.log(near + 1e-300)
    w = np.exp(logm - logm.max())
    k = rng.choice(len(w), p=w / w.sum())
    z = sample_std_interval(a[k], b[k], rng)
    return float(mean + sd * z)


def sample_truncated_inverse_gamma(shape, scale, upper, rng):
    """IG(shape, scale) with density ~ x^(-a-1) exp(-b/x), restricted to (0, upper)."""
    rng = as_generator(rng)
    shape, scale, upper = np.broadcast_arrays(
        np.asarray(shape, dtype=float), np.asarray(scale, dtype=float), np.asarray(upper, dtype=float)
    )
    if np.any(shape <= 0) or np.any(scale <= 0) or np.any(upper <= 0):
        raise ValueError("shape, scale and upper must be positive")
    # 1/x ~ Gamma(shape, rate=scale) restricted to (1/upper, inf)
    with np.errstate(divide="ignore"):
        mass = gammaincc(shape, scale / upper)
    if np.any(mass <= 0):
        raise ValueError("degenerate truncation")
    v = rng.uniform(size=shape.shape)
    y = gammainccinv(shape, (1.0 - v) * mass) / scale
    x = 1.0 / y
    x = np.minimum(x, np.nextafter(upper, 0))
    return x if x.ndim else float(x)


def sample_matrix_normal(M, U, V, rng):
    """Matrix normal with row covariance U and column covariance V."""
    rng = as_generator(rng)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    try:
        A = np.linalg.cholesky(U)
        B = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance not positive definite") from exc
    Z = rng.standard_normal(M.shape)
    return M + A @ Z @ B.T


def sample_inverse_wishart(dof, scale, rng, size=None):
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    G = scale.shape[0]
    if dof <= G - 1:
        raise ValueError("dof must exceed dimension - 1")
    out = stats.invwishart(df=dof, scale=scale).rvs(size=1 if size is None else size, random_state=as_generator(rng))
    shape = (G, G) if size is None else tuple(np.atleast_1d(size)) + (G, G)
    out = np.asarray(out, dtype=float).reshape(shape)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


RISING_DIRECT_MAX = 1e4


def log_rising(phi, y):
    """log Gamma(y + phi) - log Gamma(phi) for counts y >= 0.

    The direct difference cancels catastrophically once phi >> y; those
    entries go through the beta function, which stays accurate for any
    dispersion.
    """
    y = np.asarray(y, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = gammaln(y + phi) - gammaln(phi)
    big = np.broadcast_to(phi > RISING_DIRECT_MAX, out.shape)
    if big.any():
        yb = np.broadcast_to(y, out.shape)[big]
        pb = np.broadcast_to(phi, out.shape)[big]
        ys = np.maximum(yb, 1.0)
        out = np.array(out, copy=True)
        out[big] = np.where(yb > 0, gammaln(ys) - betaln(ys, pb), 0.0)
    return out


def nb_log_pmf(y, mean, dispersion):
    """Negative binomial log-pmf with variance mean + mean^2/dispersion."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    phi = np.asarray(dispersion, dtype=float)
    return (
        log_rising(phi, y)
        - gammaln(y + 1.0)
        - phi * np.log1p(mean / phi)
        + y * (np.log(mean) - np.log(mean + phi))
    )


# plumbing samplers; rates rather than scales throughout

def sample_gamma(shape, rate, rng, size=None):
    return as_generator(rng).gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def sample_log_gamma(shape, rng, size=None):
    """log of a Gamma(shape, 1) draw, accurate for tiny shapes."""
    rng = as_generator(rng)
    shape = np.asarray(shape, dtype=float)
    if size is None:
        size = shape.shape
    g = rng.gamma(shape + 1.0, size=size)
    u = rng.uniform(size=size)
    return np.log(g) + np.log(u) / shape


def sample_inverse_gamma(shape, scale, rng, size=None):
    return np.asarray(scale, dtype=float) / as_generator(rng).gamma(shape, size=size)


def sample_beta(a, b, rng, size=None):
    return as_generator(rng).beta(a, b, size=size)


def sample_log_dirichlet(conc, rng):
    """log of a Dirichlet draw along the last axis, robust to tiny concentrations."""
    lg = sample_log_gamma(conc, rng)
    top = lg.max(axis=-1, keepdims=True)
    return lg - (top + np.log(np.exp(lg - top).sum(axis=-1, keepdims=True)))


def sample_dirichlet(conc, rng):
    return np.exp(sample_log_dirichlet(conc, rng))


def sample_categorical(log_weights, rng):
    """One draw per row from unnormalized log weights (last axis)."""
    rng = as_generator(rng)
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - lw.max(axis=-1, keepdims=True))
    c = np.cumsum(w, axis=-1)
    u = rng.uniform(size=lw.shape[:-1] + (1,)) * c[..., -1:]
    return np.minimum((c < u).sum(axis=-1), lw.shape[-1] - 1)


def sample_lognormal(mean_log, var_log, rng, size=None):
    return np.exp(as_generator(rng).normal(mean_log, np.sqrt(var_log), size=size))


def sample_binomial(n, p, rng, size=None):
    return as_generator(rng).binomial(n, p, size=size)


def sample_mvnormal(mean, cov, rng, size=None):
    return as_generator(rng).multivariate_normal(mean, cov, size=size, method="eigh")


def sample_uniform(lo, hi, rng, size=None):
    return as_generator(rng).uniform(lo, hi, size=size)


def sample_nb(mean, dispersion, rng):
    rng = as_generator(rng)
    mean = np.asarray(mean, dtype=float)
    lam = rng.gamma(dispersion, mean / dispersion)
    return rng.poisson(lam)
