"""Synthetic scenarios with known clusterings, weight curves and atoms."""

from dataclasses import dataclass, field

import numpy as np

from . import stochastic as st
from .gibbs.data import GroupedDataset
from .kernels import GaussianKernel, PeriodicKernel

SCENARIOS = ("sim1", "sim2", "sim3", "var-periodic")
TABLE_VERSION = 1

# scenario constant tables; (component, group) layout throughout
SIM12 = dict(
    sizes=(100, 100), G=10, log_mu=(1.0, 3.0), var_mu=0.1, b=(0.25, 0.5), var_phi=0.1,
    capture=(3.0, 2.0),
)
SIM1_KERNEL = dict(
    center=np.array([[0.4, 0.8], [0.9, 0.3]]),
    sd=np.array([[0.08, 0.1], [0.15, 0.1]]),
    q=np.array([[0.5, 0.3], [0.5, 0.7]]),
)
SIM3 = dict(
    sizes=(200, 300), G=100, markers=70, theta=(-2.0, 2.0, 4.0), var_mu=0.1, b=(-1.0, 1.0),
    var_phi=0.1, null_log_mu=(3.5, 0.5), capture=(3.0, 2.0),
    center=np.array([[0.4, 0.8], [0.9, 0.5], [0.1, 0.3]]),
    sd=np.array([[0.08, 0.1], [0.15, 0.05], [0.1, 0.1]]),
    q=np.array([[0.5, 0.7], [0.5, 0.0], [0.0, 0.3]]),
)
VAR_PERIODIC = dict(
    sizes=(151, 151),
    # L_j has rows (intercept, lag 1, lag 2) and one column per dimension
    L=np.array([
        [[0.0, 0.0], [0.9, 0.1], [-0.1, 0.8]],
        [[1.0, 1.0], [0.5, -0.1], [0.1, 0.5]],
        [[-1.0, -1.0], [0.9, 0.0], [-0.2, 0.9]],
    ]),
    Sigma=np.array([
        [[0.001, 0.002], [0.002, 0.004]],
        [[0.005, 0.0], [0.0, 0.005]],
        [[0.05, -0.02], [-0.02, 0.05]],
    ]),
    q=np.array([[0.5, 0.6], [0.5, 0.0], [0.0, 0.4]]),
    center=np.array([[0.0, 0.1], [0.2, -0.1], [-0.1, 0.0]]),
    period=np.array([[0.3, 0.6], [0.6, 0.4], [0.2, 0.3]]) / np.pi,
    bandwidth=np.array([[0.2, 0.05], [0.1, 0.2], [0.05, 0.1]]),
)


@dataclass(frozen=True)
class SimSpec:
    scenario: str
    seed: int = 0
    sizes: tuple = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")


@dataclass
class Truth:
    """Ground truth; labels are 0-based and stacked across groups."""

    labels: np.ndarray
    group: np.ndarray
    params: dict = field(default_factory=dict)
    weight_fn: object = None

    def weights(self, t, d):
        """True (J, len(t)) weight curves of group d."""
        return self.weight_fn(np.asarray(t, dtype=float), d)


def kernel_weights(q, kernel, t, d):
    """q-weighted normalized kernel curves for group d, shape (J, len(t))."""
    lk = kernel.select((slice(None), d)).log_eval(t).T
    w = q[:, d, None] * np.exp(lk - lk.max(axis=0))
    return w / w.sum(axis=0)


def logistic_weights(t, d):
    p1 = 1.0 / (1.0 + np.exp(-4.0 + 20.0 * t * t)) if d == 0 else 1.0 / (1.0 + np.exp(4.0 - 10.0 * t))
    return np.vstack([p1, 1.0 - p1])


def _draw_labels(weights, rng):
    return st.sample_categorical(np.log(np.maximum(weights.T, 1e-300)), rng)


def _nb_counts(mu, phi, labels, beta, rng):
    y0 = st.sample_nb(mu[labels], phi[labels], rng)
    return st.sample_binomial(y0, beta[:, None], rng)


def _sim12(spec, rng, kind):
    p = SIM12
    sizes = spec.sizes or p["sizes"]
    G = p["G"]
    J = 2
    log_mu = np.asarray(p["log_mu"])[:, None] + np.sqrt(p["var_mu"]) * rng.standard_normal((J, G))
    mu = np.exp(log_mu)
    phi = np.exp(p["b"][0] + p["b"][1] * log_mu + np.sqrt(p["var_phi"]) * rng.standard_normal((J, G)))
    if kind == "sim1":
        k = SIM1_KERNEL
        kern = GaussianKernel(k["center"], k["sd"] ** 2)
        wfn = lambda t, d: kernel_weights(k["q"], kern, t, d)
        kparams = dict(center=k["center"], bandwidth=k["sd"] ** 2, q=k["q"])
    else:
        wfn = logistic_weights
        kparams = {}
    return _count_groups(sizes, mu, phi, p["capture"], wfn, rng, dict(mu=mu, phi=phi, **kparams))


def _count_groups(sizes, mu, phi, capture, wfn, rng, params):
    ys, ts, labels, betas = [], [], [], []
    for d, n in enumerate(sizes):
        t = rng.uniform(size=n)
        z = _draw_labels(wfn(t, d), rng)
        beta = rng.beta(*capture, size=n)
        ys.append(_nb_counts(mu, phi, z, beta, rng))
        ts.append(t)
        labels.append(z)
        betas.append(beta)
    ds = GroupedDataset(ys, ts, counts=True)
    params = dict(params, beta=np.concatenate(betas))
    truth = Truth(np.concatenate(labels), np.repeat(np.arange(len(sizes)), sizes), params, wfn)
    return ds, truth


def _sim3(spec, rng):
    p = SIM3
    sizes = spec.sizes or p["sizes"]
    G, M, J = p["G"], p["markers"], 3
    log_mu = np.empty((J, G))
    log_mu[:, :M] = np.asarray(p["theta"])[:, None] + np.sqrt(p["var_mu"]) * rng.standard_normal((J, M))
    null = p["null_log_mu"][0] + np.sqrt(p["null_log_mu"][1]) * rng.standard_normal(G - M)
    log_mu[:, M:] = null
    b0, b1 = p["b"]
    log_phi = np.empty((J, G))
    log_phi[:, :M] = b0 + b1 * log_mu[:, :M] + np.sqrt(p["var_phi"]) * rng.standard_normal((J, M))
    log_phi[:, M:] = b0 + b1 * null + np.sqrt(p["var_phi"]) * rng.standard_normal(G - M)
    kern = GaussianKernel(p["center"], p["sd"] ** 2)
    wfn = lambda t, d: kernel_weights(p["q"], kern, t, d)
    params = dict(mu=np.exp(log_mu), phi=np.exp(log_phi), markers=np.arange(G) < M,
                  center=p["center"], bandwidth=p["sd"] ** 2, q=p["q"])
    return _count_groups(sizes, params["mu"], params["phi"], p["capture"], wfn, rng, params)


def _var_periodic(spec, rng):
    p = VAR_PERIODIC
    sizes = spec.sizes or p["sizes"]
    kern = PeriodicKernel(p["center"], p["bandwidth"], p["period"])
    wfn = lambda t, d: kernel_weights(p["q"], kern, t, d)
    ys, ts, labels = [], [], []
    for d, n in enumerate(sizes):
        t = np.linspace(0.0, 1.0, n)
        z = _draw_labels(wfn(t[1:], d), rng)
        y = np.zeros((n, 2))
        # the first observation only serves as a lag and starts at the origin
        for i in range(1, n):
            j = z[i - 1]
            mean = p["L"][j].T @ np.concatenate([[1.0], y[i - 1]])
            y[i] = st.sample_mvnormal(mean, p["Sigma"][j], rng)
        ys.append(y)
        ts.append(t)
        labels.append(z)
    ds = GroupedDataset(ys, ts, counts=False, lagged=True)
    truth = Truth(np.concatenate(labels), np.repeat(np.arange(len(sizes)), [n - 1 for n in sizes]),
                  dict(L=p["L"], Sigma=p["Sigma"], q=p["q"], center=p["center"], period=p["period"],
                       bandwidth=p["bandwidth"]), wfn)
    return ds, truth


def simulate(spec):
    """Dataset and ground truth for a scenario; identical for identical specs."""
    if isinstance(spec, str):
        spec = SimSpec(spec)
    rng = st.RngStream(spec.seed, (SCENARIOS.index(spec.scenario),)).generator()
    if spec.scenario in ("sim1", "sim2"):
        return _sim12(spec, rng, spec.scenario)
    if spec.scenario == "sim3":
        return _sim3(spec, rng)
    return _var_periodic(spec, rng)
