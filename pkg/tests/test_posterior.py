import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs
from scipy import stats

from artifact import posterior as po
from artifact.gibbs import run_chain
from artifact.gibbs.trace import Trace
from artifact.kernels import GaussianKernel
from artifact.weights import covariate_weights
from conftest import toy_nb_model


def var_trace(L, Sigma, log_q=None, center=None, bandwidth=None):
    """Stored draws of a one-group Gaussian-kernel VAR fit."""
    L = np.asarray(L, dtype=float)
    S, J = L.shape[0], L.shape[1]
    if log_q is None:
        log_q = np.zeros((S, J, 1))
    if center is None:
        center = np.zeros((S, J, 1))
    if bandwidth is None:
        bandwidth = np.full((S, J, 1), 1e12)
    draws = dict(L=L, Sigma=np.asarray(Sigma, dtype=float), log_q=log_q, center=center, bandwidth=bandwidth,
                 log_p=np.full((S, J), -np.log(J)), z=np.zeros((S, 1), dtype=int))
    return Trace("gaussian", "var", draws, list(range(S)))


@pytest.fixture(scope="module")
def nb_fit():
    model = toy_nb_model(J=3, D=2, n=15, G=4, seed=4)
    return model, run_chain(model, model.cfg, 1, iterations=40, burn_in=20, thin=2)


# HPD ----------------------------------------------------------------------------

def test_hpd_is_shortest_window(rng):
    x = rng.gamma(2.0, size=501)
    lo, hi = po.hpd_interval(x, 0.9)
    s = np.sort(x)
    k = int(np.ceil(0.9 * 501))
    widths = [s[i + k - 1] - s[i] for i in range(501 - k + 1)]
    assert np.isclose(hi - lo, min(widths))
    assert np.mean((x >= lo) & (x <= hi)) >= 0.9


def test_hpd_normal_and_axis(rng):
    x = rng.normal(size=(200000, 2))
    lo, hi = po.hpd_interval(x, 0.95)
    assert np.allclose(lo, -1.96, atol=0.03) and np.allclose(hi, 1.96, atol=0.03)
    lo2, hi2 = po.hpd_interval(x.T, 0.95, axis=1)
    assert np.array_equal(lo, lo2) and np.array_equal(hi, hi2)


# weights and curves --------------------------------------------------------------

def test_weights_match_direct_evaluation(nb_fit):
    model, tr = nb_fit
    x = np.linspace(0, 1, 7)
    for i in range(len(tr)):
        for d in range(2):
            w = po.weights_at(tr, i, d, x)
            kern = GaussianKernel(tr["center"][i][:, d], tr["bandwidth"][i][:, d])
            ref = np.array([covariate_weights(np.exp(tr["log_q"][i][:, d]), kern, v) for v in x])
            assert np.allclose(w, ref, atol=1e-12)


def test_probability_curves_simplex_and_band(nb_fit):
    _, tr = nb_fit
    c = po.probability_curves(tr, 0, np.linspace(1, 0, 25))
    assert np.all(np.diff(c.grid) > 0)
    assert c.draws.shape == (len(tr), 3, 25)
    assert np.allclose(c.draws.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(c.lower <= c.mean + 1e-15) and np.all(c.mean <= c.upper + 1e-15)
    assert po.default_grid([0.3, 0.1, 0.9]).size == po.GRID_POINTS


# predictive quantities ------------------------------------------------------------

def test_predictive_mean_example():
    L = np.zeros((1, 2, 2, 1))
    L[0, 1, 0, 0] = 2.0  # intercepts 0 and 2
    tr = var_trace(L, np.ones((1, 2, 1, 1)))
    assert abs(po.predictive_mean(tr, 0, 0.3)[0] - 1.0) < 1e-12


def test_conditional_density_integrates_to_one():
    r = np.random.default_rng(5)
    L = r.normal(size=(4, 3, 2, 1))
    Sig = r.gamma(2.0, 0.3, size=(4, 3, 1, 1))
    tr = var_trace(L, Sig, log_q=r.normal(size=(4, 3, 1)), center=r.uniform(size=(4, 3, 1)),
                   bandwidth=np.full((4, 3, 1), 0.05))
    y = np.linspace(-15, 15, 30001)
    f = po.conditional_density(tr, 0, 0.4, y[:, None], design=[1.0, 0.7])
    assert abs(np.trapezoid(f, y) - 1.0) < 1e-8


def test_conditional_density_matches_mixture_oracle():
    r = np.random.default_rng(6)
    L = r.normal(size=(2, 2, 3, 2))
    A = r.normal(size=(2, 2, 2, 2))
    Sig = A @ np.swapaxes(A, -1, -2) + 0.5 * np.eye(2)
    tr = var_trace(L, Sig, log_q=r.normal(size=(2, 2, 1)), center=r.uniform(size=(2, 2, 1)),
                   bandwidth=np.full((2, 2, 1), 0.1))
    design = np.array([1.0, 0.2, -0.4])
    y = r.normal(size=(5, 2))
    ref = np.zeros(5)
    for i in range(2):
        w = po.weights_at(tr, i, 0, [0.6])[0]
        for j in range(2):
            ref += w[j] * stats.multivariate_normal(design @ L[i, j], Sig[i, j]).pdf(y) / 2
    assert np.allclose(po.conditional_density(tr, 0, 0.6, y, design=design), ref, rtol=1e-12)


def test_nb_conditional_density_sums_to_one(nb_fit):
    _, tr = nb_fit
    # empty components drawn from the prior can carry very large means
    f = po.conditional_density(tr, 1, 0.5, np.arange(0, 200000), capture=0.3)
    assert np.allclose(f.sum(axis=0), 1.0, atol=1e-8)


# latent counts ---------------------------------------------------------------------

def test_latent_count_examples():
    assert po.latent_count_expectation(7, 3.0, 2.0, 1.0) == 7
    assert abs(po.latent_count_expectation(0, 3.0, 2.0, 0.0) - 3.0) < 1e-12


@given(hs.integers(0, 30), hs.floats(0.2, 20), hs.floats(0.2, 10), hs.floats(0.05, 0.95))
@settings(max_examples=60, deadline=None)
def test_latent_count_posterior_brute_force(y, mu, phi, beta):
    # p(y0 | y) ∝ NB(y0 | mu, phi) Bin(y | y0, beta)
    y0 = np.arange(y, y + 5000)
    lp = stats.nbinom.logpmf(y0, phi, phi / (phi + mu)) + stats.binom.logpmf(y, y0, beta)
    w = np.exp(lp - lp.max())
    ref = (w * y0).sum() / w.sum()
    got = po.latent_count_expectation(y, mu, phi, beta)
    assert abs(got - ref) < 1e-8 * max(1.0, ref)
    assert got >= y


def test_latent_count_mean_shape(nb_fit):
    model, tr = nb_fit
    E = po.latent_count_mean(tr, model)
    assert E.shape == model.data.y.shape and np.all(E >= model.data.y)


# markers and EFDR -------------------------------------------------------------------

def test_efdr_examples():
    assert abs(po.efdr([0.9, 0.8, 0.2], 0.85) - 0.1 / 1.1) < 1e-15
    assert abs(0.1 / 1.1 - 0.090909) < 1e-6
    assert po.efdr([1.0, 1.0, 1.0], 0.5) == 0.0
    with pytest.raises(ValueError):
        po.calibrate_efdr([0.5, 1.2])


@given(hs.lists(hs.floats(0, 1), min_size=1, max_size=40), hs.floats(0.01, 0.5))
@settings(max_examples=100, deadline=None)
def test_calibration_is_first_grid_point_meeting_target(p, target):
    a = po.calibrate_efdr(p, target)
    p = np.array(p)

    def e(t):
        den = np.sum(1 - p)
        return 0.0 if den <= 0 else np.sum((1 - p) * (p > t)) / den

    grid = [k / 1000 for k in range(1001)]
    ok = [t for t in grid if e(t) <= target]
    assert a == (ok[0] if ok else 1.0)
    flags, a2 = po.flag_markers(p, target)
    assert a2 == a and np.array_equal(flags, p > a)


def test_marker_probabilities_pairwise_oracle():
    r = np.random.default_rng(8)
    S, J, G = 50, 3, 4
    mu = np.exp(r.normal(size=(S, J, G)))
    phi = np.exp(r.normal(size=(S, J, G)))
    tr = Trace("gaussian", "nb", dict(mu=mu, phi=phi, z=np.array([[0, 1, 2, 1]] * S)), list(range(S)))
    m = po.marker_tail_probabilities(tr, 1.0, 0.7)
    pm = np.zeros((J, J, G))
    for j in range(J):
        for k in range(J):
            pm[j, k] = np.mean(np.abs(np.log(mu[:, j]) - np.log(mu[:, k])) > 1.0, axis=0)
    pairs = [(0, 1), (0, 2), (1, 2)]
    assert np.allclose(m.global_mean, np.max([pm[a, b] for a, b in pairs], axis=0))
    for j in range(J):
        assert np.allclose(m.local_mean[j], np.min([pm[j, k] for k in range(J) if k != j], axis=0))
    one = po.marker_tail_probabilities(tr, 1.0, 0.7, components=[1])
    assert one.diagnostic and np.all(one.global_mean == 0)


# posterior predictive checks -------------------------------------------------------

def test_ppc_statistics_edge_cases():
    y = np.array([[0, 3], [0, 3], [0, 3]])
    s = po.ppc_statistics(y)
    assert s["dropout"][0] == 1.0 and s["sd_log"][1] == 0.0
    assert np.isclose(s["mean_log"][1], np.log(4)) and s["log_mean"][0] == -np.inf
    yy = np.array([[0, 1], [2, 5], [7, 0]])
    assert np.allclose(po.ppc_statistics(yy)["sd_log"], np.log1p(yy).std(axis=0, ddof=1))


def test_ppc_replicates(nb_fit, rng):
    model, tr = nb_fit
    assert po.ppc_replicates(tr, model, 0, rng).shape == (0,) + model.data.y.shape
    rep = po.ppc_replicates(tr, model, 4, rng)
    assert rep.shape == (4,) + model.data.y.shape
    assert np.all(rep >= 0) and np.all(rep == np.round(rep))


def test_ppc_replicate_mean_is_thinned_mean(rng):
    # with one stored draw the replicate mean is beta mu whatever the redrawn phi
    S, n, G = 1, 3, 2
    tr = Trace("gaussian", "nb", dict(
        z=np.array([[0, 1, 1]]), mu=np.array([[[4.0, 1.0], [2.0, 8.0]]]), b=np.array([[0.0, 0.5]]),
        alpha_phi2=np.array([0.2]), beta=np.array([[0.5, 0.25, 1.0]])), [0])
    model = toy_nb_model(J=2, D=1, n=n, G=G)
    rep = po.ppc_replicates(tr, model, 40000, rng)
    expect = np.array([[2.0, 0.5], [0.5, 2.0], [2.0, 8.0]])
    se = rep.std(axis=0) / np.sqrt(40000)
    assert np.all(np.abs(rep.mean(axis=0) - expect) < 4 * se)


def test_ppc_coverage_on_own_replicates(rng):
    obs = rng.negative_binomial(2.0, 0.3, size=(80, 20))
    reps = rng.negative_binomial(2.0, 0.3, size=(400, 80, 20))
    frac, inside = po.ppc_coverage(obs, reps)
    assert frac >= 0.9 and set(inside) == {"mean_log", "sd_log", "dropout"}
    frac_bad, _ = po.ppc_coverage(obs + 20, reps)
    assert frac_bad == 0.0
