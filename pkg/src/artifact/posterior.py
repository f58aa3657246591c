"""Predictive summaries, marker detection and posterior predictive checks."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import stochastic as st
from .kernels import CategoricalKernel, GaussianKernel, PeriodicKernel

log = logging.getLogger(__name__)

GRID_POINTS = 100
EFDR_GRID = np.round(np.arange(0, 1001) * 0.001, 3)


def hpd_interval(samples, mass=0.95, axis=0):
    """Shortest interval holding `mass` of the draws along `axis`."""
    x = np.sort(np.moveaxis(np.asarray(samples, dtype=float), axis, 0), axis=0)
    L = x.shape[0]
    k = max(int(np.ceil(mass * L)), 1)
    if k >= L:
        return x[0], x[-1]
    width = x[k - 1:] - x[: L - k + 1]
    i = np.argmin(width, axis=0)
    lo = np.take_along_axis(x, i[None], axis=0)[0]
    hi = np.take_along_axis(x, (i + k - 1)[None], axis=0)[0]
    return lo, hi


def _kernel_from_draw(trace, i, family):
    if family == "gaussian":
        return GaussianKernel(trace["center"][i], trace["bandwidth"][i])
    if family == "periodic":
        return PeriodicKernel(trace["center"][i], trace["bandwidth"][i], trace["period"][i])
    return CategoricalKernel(trace["probs"][i])


def weights_at(trace, i, d, x):
    """Covariate-dependent weights of group d at points x for draw i, shape (len(x), J)."""
    kern = _kernel_from_draw(trace, i, trace.kernel).select((slice(None), d))
    lw = trace["log_q"][i][:, d] + kern.log_eval(np.asarray(x, dtype=float))
    lw = lw - lw.max(axis=-1, keepdims=True)
    w = np.exp(lw)
    return w / w.sum(axis=-1, keepdims=True)


@dataclass
class PredictiveCurve:
    grid: np.ndarray
    draws: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def _curve(grid, draws, mass):
    lo, hi = hpd_interval(draws, mass)
    mean = draws.mean(axis=0)
    return PredictiveCurve(grid, draws, mean, np.minimum(lo, mean), np.maximum(hi, mean))


def default_grid(x, points=GRID_POINTS):
    x = np.asarray(x, dtype=float)
    return np.linspace(x.min(), x.max(), points)


def probability_curves(trace, d, grid, mass=0.95):
    """Weight curves of every component in group d; draws have shape (L, J, m)."""
    grid = np.sort(np.asarray(grid, dtype=float))
    draws = np.stack([weights_at(trace, i, d, grid).T for i in range(len(trace))])
    return _curve(grid, draws, mass)


def predictive_mean(trace, d, x, design=None):
    """Posterior predictive mean at covariate x, averaged over draws.

    NB traces use the latent-scale means mu*; VAR traces need the design row
    (1, y_prev) of the prediction point.
    """
    out = 0.0
    for i in range(len(trace)):
        w = weights_at(trace, i, d, np.atleast_1d(x))[0]
        if "mu" in trace:
            comp = trace["mu"][i]
        else:
            xrow = np.ones(1) if design is None else np.asarray(design, dtype=float)
            comp = np.einsum("p,jpg->jg", xrow, trace["L"][i][:, : xrow.size])
        out = out + w @ comp
    return out / len(trace)


def conditional_density(trace, d, x, y_grid, design=None, capture=1.0):
    """Mixture density at covariate x over y_grid.

    NB: per-gene marginal pmf on an integer grid, shape (m, G), observed at
    capture efficiency `capture`. VAR/Gaussian: joint density at points
    y_grid of shape (m, G), returns (m,).
    """
    y = np.asarray(y_grid, dtype=float)
    total = 0.0
    for i in range(len(trace)):
        w = weights_at(trace, i, d, np.atleast_1d(x))[0]
        if "mu" in trace:
            mu, phi = trace["mu"][i], trace["phi"][i]
            yy = y.reshape(-1, 1, 1) if y.ndim == 1 else y[:, None, :]
            f = np.exp(st.nb_log_pmf(yy, capture * mu[None], phi[None]))
            total = total + np.einsum("j,mjg->mg", w, f)
        else:
            yy = y.reshape(-1, 1) if y.ndim == 1 else y
            xrow = np.ones(1) if design is None else np.asarray(design, dtype=float)
            L, S = trace["L"][i], trace["Sigma"][i]
            f = np.empty((yy.shape[0], L.shape[0]))
            for j in range(L.shape[0]):
                mean = xrow @ L[j][: xrow.size]
                C = np.linalg.cholesky(S[j])
                r = np.linalg.solve(C, (yy - mean).T)
                f[:, j] = np.exp(-0.5 * (r * r).sum(0) - np.log(np.diag(C)).sum()
                                 - 0.5 * yy.shape[1] * np.log(2 * np.pi))
            total = total + f @ w
    return total / len(trace)


# latent counts ---------------------------------------------------------------

def latent_count_expectation(y, mu, phi, beta):
    """E(y0 | y, beta, mu, phi) for the thinned negative binomial."""
    den = mu * beta + phi
    return y * (mu + phi) / den + mu * phi * (1.0 - beta) / den


def latent_count_mean(trace, model):
    """Posterior mean latent counts per observation and gene, shape (n, G)."""
    y = model.data.y
    acc = np.zeros_like(y, dtype=float)
    for i in range(len(trace)):
        z = trace["z"][i]
        acc += latent_count_expectation(y, trace["mu"][i][z], trace["phi"][i][z], trace["beta"][i][:, None])
    return acc / max(len(trace), 1)


# marker genes -----------------------------------------------------------------

@dataclass
class MarkerProbabilities:
    components: np.ndarray
    global_mean: np.ndarray
    global_dispersion: np.ndarray
    local_mean: np.ndarray
    local_dispersion: np.ndarray
    mean_abs_lfc_mean: np.ndarray
    mean_abs_lfc_dispersion: np.ndarray
    diagnostic: str = ""


def _pair_probs(logv, thresh):
    """P(|log v_j - log v_k| > thresh) for every pair, shape (J, J, G)."""
    diff = np.abs(logv[:, :, None, :] - logv[:, None, :, :])
    return (diff > thresh).mean(axis=0), diff.mean(axis=0)


def marker_tail_probabilities(trace, tau0, omega0, components=None):
    """Global (max over pairs) and local (min over partners) tail probabilities.

    Only `components` (default: those occupied in the first stored
    partition) are compared.
    """
    if components is None:
        components = np.unique(trace["z"][0])
    components = np.asarray(components, dtype=int)
    G = trace["mu"].shape[-1]
    if len(components) < 2:
        e = np.zeros((0, G))
        return MarkerProbabilities(components, np.zeros(G), np.zeros(G), e, e, np.zeros(G), np.zeros(G),
                                   "fewer than two occupied components; no pairs to compare")
    lm = np.log(trace["mu"][:, components])
    lp = np.log(trace["phi"][:, components])
    pm, am = _pair_probs(lm, tau0)
    pd, ad = _pair_probs(lp, omega0)
    K = len(components)
    off = ~np.eye(K, dtype=bool)
    iu = np.triu_indices(K, 1)
    glob_m, glob_d = pm[iu].max(axis=0), pd[iu].max(axis=0)
    loc_m = np.stack([pm[j][off[j]].min(axis=0) for j in range(K)])
    loc_d = np.stack([pd[j][off[j]].min(axis=0) for j in range(K)])
    best_m = am[iu][pm[iu].argmax(axis=0), np.arange(G)]
    best_d = ad[iu][pd[iu].argmax(axis=0), np.arange(G)]
    return MarkerProbabilities(components, glob_m, glob_d, loc_m, loc_d, best_m, best_d)


def efdr(probabilities, alpha):
    p = np.asarray(probabilities, dtype=float)
    den = np.sum(1.0 - p)
    if den <= 0:
        return 0.0
    return float(np.sum((1.0 - p) * (p > alpha)) / den)


def calibrate_efdr(probabilities, efdr_target=0.05):
    """Smallest threshold on a 0.001 grid whose EFDR meets the target."""
    p = np.asarray(probabilities, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    for a in EFDR_GRID:
        if efdr(p, a) <= efdr_target:
            return float(a)
    return 1.0


def flag_markers(probabilities, efdr_target=0.05):
    a = calibrate_efdr(probabilities, efdr_target)
    return np.asarray(probabilities) > a, a


# posterior predictive checks ------------------------------------------------

def ppc_replicates(trace, model, R, rng):
    """R replicate datasets from the mixed predictive distribution, shape (R, n, G).

    NB: mu* and beta come from random stored draws while phi* is redrawn from
    its prior given (b, alpha_phi^2, mu*). VAR: one-step replicates given the
    observed lags.
    """
    rng = st.as_generator(rng)
    d = model.data
    if R <= 0:
        return np.zeros((0,) + d.y.shape)
    pick = rng.integers(0, len(trace), size=R)
    out = np.empty((R,) + d.y.shape)
    for r, i in enumerate(pick):
        z = trace["z"][i]
        if "mu" in trace:
            mu = trace["mu"][i]
            b = trace["b"][i]
            s = np.sqrt(trace["alpha_phi2"][i])
            phi = np.exp(b[0] + b[1] * np.log(mu) + s * rng.standard_normal(mu.shape))
            beta = trace["beta"][i]
            out[r] = st.sample_nb(mu[z] * beta[:, None], phi[z], rng)
        else:
            L, S = trace["L"][i], trace["Sigma"][i]
            mean = np.einsum("np,npg->ng", d.design, L[z])
            C = np.linalg.cholesky(S)[z]
            out[r] = mean + np.einsum("ngk,nk->ng", C, rng.standard_normal(d.y.shape))
    return out


PPC_STATS = ("mean_log", "sd_log", "log_mean", "dropout")


def ppc_statistics(y):
    """Per-gene summaries of a count matrix (n, G) or stack (..., n, G)."""
    y = np.asarray(y, dtype=float)
    ls = np.log1p(y)
    n = y.shape[-2]
    with np.errstate(divide="ignore"):
        return {
            "mean_log": ls.mean(axis=-2),
            "sd_log": ls.std(axis=-2, ddof=1) if n > 1 else np.zeros(y.shape[:-2] + y.shape[-1:]),
            "log_mean": np.log(y.mean(axis=-2)),
            "dropout": (y == 0).mean(axis=-2),
        }


def ppc_coverage(observed, replicates, mass=0.99, stats=("mean_log", "sd_log", "dropout")):
    """Fraction of genes whose observed statistics sit in the central replicate band."""
    obs = ppc_statistics(observed)
    rep = ppc_statistics(replicates)
    q = 0.5 * (1.0 - mass)
    inside = {}
    for k in stats:
        lo, hi = np.quantile(rep[k], [q, 1.0 - q], axis=0)
        inside[k] = (obs[k] >= lo) & (obs[k] <= hi)
    both = np.logical_and.reduce([inside[k] for k in stats])
    return float(both.mean()), inside
