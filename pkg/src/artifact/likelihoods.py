"""Observation models: thinned negative binomial counts and VAR/Gaussian vectors."""

from dataclasses import dataclass

import numpy as np

from .stochastic import nb_log_pmf

DISPERSION_CAP = 1e4
BETA_CLIP = 1e-6


@dataclass
class NbComponent:
    mu: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if np.any(self.mu <= 0) or np.any(self.phi <= 0):
            raise ValueError("mean and dispersion must be positive")


@dataclass
class CaptureEfficiencies:
    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ValueError("capture efficiencies must lie in (0, 1)")


@dataclass
class MeanDispersionLink:
    b: np.ndarray
    alpha_phi2: float
    alpha_mu2: float

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if self.alpha_phi2 <= 0 or self.alpha_mu2 <= 0:
            raise ValueError("link variances must be positive")


@dataclass
class VarComponent:
    L: np.ndarray
    Sigma: np.ndarray


@dataclass
class MatrixNormalIwPrior:
    L0: np.ndarray
    V0: np.ndarray
    omega0: float
    Phi0: np.ndarray

    def __post_init__(self):
        self.L0 = np.atleast_2d(np.asarray(self.L0, dtype=float))
        self.V0 = np.atleast_2d(np.asarray(self.V0, dtype=float))
        self.Phi0 = np.atleast_2d(np.asarray(self.Phi0, dtype=float))
        G = self.Phi0.shape[0]
        if self.omega0 <= G - 1:
            raise ValueError("omega0 must exceed G - 1")
        for m in (self.V0, self.Phi0):
            np.linalg.cholesky(m)


def nb_obs_log_likelihood(y, mu, phi, beta):
    """Observed count log-likelihood after integrating the binomial thinning."""
    return nb_log_pmf(y, np.asarray(mu) * np.asarray(beta), phi)


def var_log_likelihood(y, x, L, Sigma):
    """Gaussian log-density of y given design rows x, mean x @ L, covariance Sigma.

    y: (n, G), x: (n, P). A single component (L: (P, G)) gives shape (n,);
    a stack (L: (J, P, G)) gives (n, J). For the lag-one VAR, x = (1, y_prev).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    L = np.asarray(L, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    single = L.ndim == 2
    if single:
        L, Sigma = L[None], Sigma[None]
    try:
        C = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance not positive definite") from exc
    G = y.shape[1]
    resid = y[None, :, :] - np.einsum("np,jpg->jng", x, L)
    sol = np.linalg.solve(C, np.swapaxes(resid, 1, 2))
    quad = np.sum(sol * sol, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diagonal(C, axis1=1, axis2=2)), axis=1)
    out = -0.5 * (quad + logdet[:, None] + G * np.log(2.0 * np.pi))
    return out[0] if single else out.T


def var_design(y_prev):
    y_prev = np.atleast_2d(np.asarray(y_prev, dtype=float))
    return np.hstack([np.ones((y_prev.shape[0], 1)), y_prev])


def var_posterior(Y, X, prior):
    """Matrix-normal / inverse-Wishart posterior (L_n, V_n, omega_n, Phi_n)."""
    Y = np.asarray(Y, dtype=float).reshape(-1, prior.Phi0.shape[0])
    X = np.asarray(X, dtype=float).reshape(-1, prior.L0.shape[0])
    if Y.shape[0] == 0:
        return prior.L0.copy(), prior.V0.copy(), float(prior.omega0), prior.Phi0.copy()
    V0inv = np.linalg.inv(prior.V0)
    prec = X.T @ X + V0inv
    try:
        Vn = np.linalg.inv(prec)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular normal equations") from exc
    Vn = 0.5 * (Vn + Vn.T)
    Ln = Vn @ (X.T @ Y + V0inv @ prior.L0)
    Phin = prior.Phi0 + Y.T @ Y + prior.L0.T @ V0inv @ prior.L0 - Ln.T @ prec @ Ln
    Phin = 0.5 * (Phin + Phin.T)
    return Ln, Vn, float(Y.shape[0] + prior.omega0), Phin


def mean_dispersion_posterior(mu, phi, m_b, nu1, nu2):
    """Conjugate posterior of (b, alpha_phi^2) under log phi ~ N(b0 + b1 log mu, alpha_phi^2)."""
    lm = np.log(np.asarray(mu, dtype=float)).ravel()
    lp = np.log(np.asarray(phi, dtype=float)).ravel()
    m_b = np.asarray(m_b, dtype=float)
    X = np.column_stack([np.ones_like(lm), lm])
    prec = X.T @ X + np.eye(2)
    Vt = np.linalg.inv(prec)
    mt = Vt @ (X.T @ lp + m_b)
    nu1t = nu1 + lm.size / 2.0
    nu2t = nu2 + 0.5 * (lp @ lp - mt @ prec @ mt + m_b @ m_b)
    return mt, Vt, nu1t, nu2t


def baynorm_capture_estimates(counts_by_group, global_mean=0.06):
    """Per-cell capture efficiency proportional to library size, mean `global_mean`."""
    out = []
    for Y in counts_by_group:
        tot = np.asarray(Y, dtype=float).sum(axis=1)
        if tot.sum() <= 0:
            raise ValueError("group has no counts")
        est = tot / tot.mean() * global_mean
        out.append(np.clip(est, BETA_CLIP, 1.0 - BETA_CLIP))
    return out


@dataclass
class EmpiricalPriors:
    mu_hat: np.ndarray
    phi_hat: np.ndarray
    m_b: np.ndarray
    nu1: float
    nu2: float
    alpha_mu2: float


def empirical_prior_moments(counts_by_group, beta_by_group, nu1=5.0):
    """Moment estimates of per-gene mean and dispersion on normalized counts.

    Counts y ~ NB(mu beta, phi) have E[y/beta] = mu and
    Var[y/beta] = E[mu/beta] + mu^2/phi, which the dispersion estimate inverts.
    """
    Y = np.vstack([np.asarray(c, dtype=float) for c in counts_by_group])
    beta = np.concatenate([np.asarray(b, dtype=float) for b in beta_by_group])
    norm = Y / beta[:, None]
    mu_hat = norm.mean(axis=0)
    var = norm.var(axis=0, ddof=1) if Y.shape[0] > 1 else np.zeros(Y.shape[1])
    excess = var - mu_hat * np.mean(1.0 / beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_hat = np.where(excess > 0, mu_hat ** 2 / excess, DISPERSION_CAP)
    phi_hat = np.clip(phi_hat, 1.0 / DISPERSION_CAP, DISPERSION_CAP)
    mu_hat = np.maximum(mu_hat, 1e-3)

    lm, lp = np.log(mu_hat), np.log(phi_hat)
    if lm.size >= 3 and np.ptp(lm) > 0:
        b1, b0 = np.polyfit(lm, lp, 1)
        resid = lp - (b0 + b1 * lm)
        rv = float(resid.var(ddof=2))
    else:
        b0, b1, rv = float(np.mean(lp)), 0.0, float(np.var(lp))
    rv = max(rv, 1e-2)
    # prior on log mu is centred at zero, so spread is measured about zero
    alpha_mu2 = max(float(np.mean(lm ** 2)), 1e-2)
    return EmpiricalPriors(mu_hat, phi_hat, np.array([b0, b1]), float(nu1), rv * (nu1 + 1.0), alpha_mu2)


def capture_prior_from_estimates(beta_hat, floor=1.01):
    """Method-of-moments Beta(a, b) for one group's capture estimates, a, b > 1."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    m = float(np.clip(beta_hat.mean(), 1e-3, 1 - 1e-3))
    v = float(beta_hat.var(ddof=1)) if beta_hat.size > 1 else 0.0
    if v <= 0 or v >= m * (1 - m):
        k = 10.0
    else:
        k = m * (1 - m) / v - 1.0
    a, b = m * k, (1 - m) * k
    if min(a, b) < floor:
        s = floor / min(a, b)
        a, b = a * s, b * s
    return a, b
