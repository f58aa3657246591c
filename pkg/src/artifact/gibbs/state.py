"""Chain state, resolved priors and initialization."""

import copy
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import cdist

from .. import likelihoods as lk
from ..kernels import CategoricalKernel, GaussianKernel, PeriodicKernel, canonical_center
from .data import ModelData


class NumericalFailure(RuntimeError):
    def __init__(self, block, detail):
        super().__init__(f"numerical failure in block '{block}': {detail}")
        self.block = block


@dataclass
class Model:
    """Data plus configuration with every data-driven prior filled in."""

    data: ModelData
    cfg: object
    alpha_mu2: float = None
    m_b: np.ndarray = None
    nu1: float = None
    nu2: float = None
    capture_a: np.ndarray = None
    capture_b: np.ndarray = None
    beta_hat: np.ndarray = None
    var_prior: lk.MatrixNormalIwPrior = None

    @property
    def J(self):
        return int(self.cfg.J)

    @property
    def kernel_priors(self):
        return {
            "gaussian": self.cfg.gaussian_kernel,
            "periodic": self.cfg.periodic_kernel,
            "categorical": self.cfg.categorical_kernel,
        }[self.cfg.kernel]


def build_model(dataset, cfg):
    data = ModelData.from_dataset(dataset, cfg.likelihood)
    if cfg.kernel == "categorical" and not dataset.categorical:
        raise ValueError("categorical kernel needs covariate levels")
    model = Model(data=data, cfg=cfg)
    if cfg.likelihood == "nb":
        if not data.counts:
            raise ValueError("negative binomial likelihood needs counts")
        slices = data.group_slices()
        groups = [data.y[s] for s in slices]
        bh = lk.baynorm_capture_estimates(groups, cfg.nb.baynorm_global_mean)
        emp = lk.empirical_prior_moments(groups, bh, nu1=cfg.nb.nu1)
        model.beta_hat = np.concatenate(bh)
        model.alpha_mu2 = cfg.nb.alpha_mu2 if cfg.nb.alpha_mu2 is not None else emp.alpha_mu2
        model.m_b = np.asarray(cfg.nb.m_b, dtype=float) if cfg.nb.m_b is not None else emp.m_b
        model.nu1 = cfg.nb.nu1
        model.nu2 = cfg.nb.nu2 if cfg.nb.nu2 is not None else emp.nu2
        if cfg.nb.capture_a is not None and cfg.nb.capture_b is not None:
            ab = [(cfg.nb.capture_a, cfg.nb.capture_b)] * data.D
        else:
            ab = [lk.capture_prior_from_estimates(b) for b in bh]
        a = np.array([p[0] for p in ab])
        b = np.array([p[1] for p in ab])
        model.capture_a, model.capture_b = a[data.group], b[data.group]
    else:
        model.var_prior = empirical_var_prior(data, cfg)
    return model


def empirical_var_prior(data, cfg):
    G, P = data.G, data.design.shape[1]
    vc = cfg.var
    X, Y = data.design, data.y
    if vc.L0 is not None:
        L0 = np.asarray(vc.L0, dtype=float).reshape(P, G)
    else:
        L0 = np.linalg.lstsq(X, Y, rcond=None)[0]
    if vc.Phi0 is not None:
        Phi0 = np.asarray(vc.Phi0, dtype=float).reshape(G, G)
    else:
        resid = Y - X @ L0
        dof = max(Y.shape[0] - P, 1)
        phi_hat = resid.T @ resid / dof + 1e-8 * np.eye(G)
        J0 = vc.J0 if vc.J0 is not None else cfg.J
        Phi0 = phi_hat / J0 ** (2.0 / G)
    omega0 = vc.omega0 if vc.omega0 is not None else G + 2.0
    return lk.MatrixNormalIwPrior(L0, vc.V0_scale * np.eye(P), omega0, Phi0)


@dataclass
class ChainState:
    z: np.ndarray
    xi: np.ndarray
    neg_log_u: np.ndarray
    log_q: np.ndarray
    log_p: np.ndarray
    alpha: float
    alpha0: float
    kernel: object
    r: np.ndarray = None
    s2: float = None
    h: np.ndarray = None
    m2: float = None
    mu: np.ndarray = None
    phi: np.ndarray = None
    beta: np.ndarray = None
    b: np.ndarray = None
    alpha_phi2: float = None
    L: np.ndarray = None
    Sigma: np.ndarray = None
    amh: dict = field(default_factory=dict)
    accept: dict = field(default_factory=dict)
    sweeps: int = 0

    @property
    def q(self):
        return np.exp(self.log_q)

    @property
    def p(self):
        return np.exp(self.log_p)

    @property
    def u(self):
        return np.exp(-self.neg_log_u)

    def copy(self):
        return copy.deepcopy(self)

    def check(self, J):
        assert self.z.min() >= 0 and self.z.max() < J
        assert np.all(self.xi > 0)
        assert np.all(self.neg_log_u > 0)
        assert abs(np.exp(self.log_p).sum() - 1.0) < 1e-12
        assert self.alpha > 0 and self.alpha0 > 0


def _features(model):
    d = model.data
    if d.counts:
        # pooled library-size scaling; per-group capture estimates can shift
        # whole groups apart and seed group-specific duplicates of one cluster.
        # Log library size stays as a feature: clusters differing by a common
        # shift in every gene are invisible after the scaling alone.
        lib = d.y.sum(axis=1)
        f = np.log1p(d.y / np.maximum(lib / lib.mean(), 1e-3)[:, None])
        f = np.hstack([f, np.log1p(lib)[:, None]])
    else:
        f = np.hstack([d.y, d.design[:, 1:]])
    sd = f.std(axis=0)
    return f / np.where(sd > 0, sd, 1.0)


SILHOUETTE_POINTS = 1000


def mean_silhouette(dist, labels):
    """Mean silhouette width from a full distance matrix; singletons score 0."""
    ks = np.unique(labels)
    if ks.size < 2:
        return -1.0
    onehot = labels[:, None] == ks[None, :]
    sizes = onehot.sum(axis=0)
    tot = dist @ onehot
    own = onehot.argmax(axis=1)
    n_own = sizes[own]
    a = tot[np.arange(len(labels)), own] / np.maximum(n_own - 1, 1)
    other = np.where(onehot, np.inf, tot / sizes)
    b = other.min(axis=1)
    s = np.where(n_own > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
    return float(s.mean())


def initial_partition(model, rng):
    """k-means seeding; the number of seeds (2..J) maximizes the mean silhouette.

    Seeding all J clusters splits large clusters in two, and duplicates
    whose groups drift apart cannot be merged by single-site moves.
    """
    J = model.J
    f = _features(model)
    n = f.shape[0]
    if J == 1 or n < 3:
        return np.zeros(n, dtype=int)
    sub = rng.choice(n, SILHOUETTE_POINTS, replace=False) if n > SILHOUETTE_POINTS else np.arange(n)
    dist = cdist(f[sub], f[sub])
    best, best_score = None, -np.inf
    for k in range(2, min(J, n - 1) + 1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, labels = kmeans2(f, k, minit="++", seed=rng)
        score = mean_silhouette(dist, labels[sub])
        if score > best_score:
            best, best_score = labels, score
    return np.unique(best, return_inverse=True)[1].astype(int)


def _gaussian_kernel_init(model):
    pr, J, d = model.cfg.gaussian_kernel, model.J, model.data
    centers = np.empty((J, d.D))
    for g, s in enumerate(d.group_slices()):
        centers[:, g] = np.quantile(d.x[s], (np.arange(J) + 0.5) / J)
    kern = GaussianKernel(centers, np.full((J, d.D), np.exp(pr.mu_h)))
    hyper = dict(r=np.full(J, pr.mu_r), s2=pr.eta2 / (pr.eta1 - 1), h=np.full(J, pr.mu_h), m2=pr.kappa2 / (pr.kappa1 - 1))
    return kern, hyper


def periodic_shape_scale(h, m2):
    h = np.asarray(h, dtype=float)
    return 2.0 + h * h / m2, h * h + h ** 3 / m2


def _periodic_kernel_init(model):
    pr, J, d = model.cfg.periodic_kernel, model.J, model.data
    lam = np.full((J, d.D), np.exp(pr.mu_r))
    centers = np.empty((J, d.D))
    for g, s in enumerate(d.group_slices()):
        centers[:, g] = np.quantile(d.x[s], (np.arange(J) + 0.5) / J)
    centers = canonical_center(centers, lam)
    h, m2 = np.exp(pr.mu_h), pr.kappa2 / (pr.kappa1 - 1)
    a, b = periodic_shape_scale(h, m2)
    bw = stats.invgamma.median(a, scale=b)
    kern = PeriodicKernel(centers, np.full((J, d.D), bw), lam)
    hyper = dict(r=np.full(J, pr.mu_r), s2=pr.eta2 / (pr.eta1 - 1), h=np.full(J, h), m2=m2)
    return kern, hyper


def _fit_kernels_to_partition(kern, d, z, family):
    """Start each occupied kernel on its own points.

    Quantile centres with prior-median bandwidths would otherwise override
    the initial partition on the first allocation step, and a fixed
    partition can never pull a kernel back to its points.
    """
    for g, s in enumerate(d.group_slices()):
        x, zg = d.x[s], z[s]
        for j in np.unique(zg):
            xs = x[zg == j]
            if family == "gaussian":
                kern.center[j, g] = xs.mean()
                if xs.size > 1:
                    kern.bandwidth[j, g] = np.clip(xs.var(), 1e-4, 1.0)
                continue
            # periodic: best centre on a grid over one period
            lam = kern.period[j, g]
            grid = np.linspace(-0.5, 0.5, 201)[:-1] * np.pi * lam
            score = -np.sin(np.subtract.outer(grid, xs) / lam) ** 2
            kern.center[j, g] = grid[np.argmax(score.sum(axis=1))]


def initialize(model, rng, partition=None):
    from .updates import draw_xi, update_components_var

    d, J = model.data, model.J
    z = initial_partition(model, rng) if partition is None else np.asarray(partition, dtype=int).copy()
    if model.cfg.kernel == "gaussian":
        kern, hyper = _gaussian_kernel_init(model)
    elif model.cfg.kernel == "periodic":
        kern, hyper = _periodic_kernel_init(model)
    else:
        kern = CategoricalKernel(np.full((J, d.D, d.levels), 1.0 / d.levels))
        hyper = {}
    if model.cfg.kernel != "categorical":
        _fit_kernels_to_partition(kern, d, z, model.cfg.kernel)
    state = ChainState(
        z=z,
        xi=np.ones(d.n),
        neg_log_u=np.ones((d.n, J)),
        log_q=np.zeros((J, d.D)),
        log_p=np.full(J, -np.log(J)),
        alpha=1.0,
        alpha0=1.0,
        kernel=kern,
        **hyper,
    )
    if d.counts:
        norm = d.y / model.beta_hat[:, None]
        overall = np.maximum(norm.mean(axis=0), 1e-2)
        mu = np.tile(overall, (J, 1))
        for j in np.unique(z):
            mu[j] = np.maximum(norm[z == j].mean(axis=0), 1e-2)
        state.mu = mu
        state.b = np.asarray(model.m_b, dtype=float).copy()
        state.alpha_phi2 = model.nu2 / (model.nu1 + 1.0)
        state.phi = np.clip(np.exp(state.b[0] + state.b[1] * np.log(mu)), 1e-3, lk.DISPERSION_CAP)
        state.beta = np.clip(model.beta_hat, 0.01, 0.99)
    else:
        G, P = d.G, d.design.shape[1]
        state.L = np.tile(model.var_prior.L0, (J, 1, 1))
        state.Sigma = np.tile(model.var_prior.Phi0, (J, 1, 1))
        update_components_var(state, model, rng)
    draw_xi(state, model, rng)
    return state


def state_from_draw(draw, model):
    """Rebuild the parameter part of a chain state from one stored draw.

    Latent xi and u are not stored; they are filled with placeholders since
    no summary conditions on them.
    """
    n, J = model.data.n, model.J
    fam = model.cfg.kernel
    if fam == "gaussian":
        kern = GaussianKernel(draw["center"], draw["bandwidth"])
    elif fam == "periodic":
        kern = PeriodicKernel(draw["center"], draw["bandwidth"], draw["period"])
    else:
        kern = CategoricalKernel(draw["probs"])
    st = ChainState(
        z=np.asarray(draw["z"], dtype=int), xi=np.ones(n), neg_log_u=np.ones((n, J)),
        log_q=draw["log_q"], log_p=draw["log_p"], alpha=float(draw["alpha"]),
        alpha0=float(draw["alpha0"]), kernel=kern,
    )
    for key in ("r", "s2", "h", "m2", "mu", "phi", "beta", "b", "alpha_phi2", "L", "Sigma"):
        if key in draw:
            setattr(st, key, draw[key])
    return st
