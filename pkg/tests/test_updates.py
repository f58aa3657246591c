from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.special import gammaln, logsumexp

from artifact import amh
from artifact.gibbs import updates as up
from artifact.gibbs.state import initialize
from artifact.gibbs.sweep import gibbs_sweep
from conftest import toy_nb_model, toy_var_model

N_ORACLE = 10 ** 5


def warm_state(model, seed=0, sweeps=5):
    r = np.random.default_rng(seed)
    s = initialize(model, r)
    for _ in range(sweeps):
        gibbs_sweep(s, model, r)
    return s


def kernel_value(kern, j, g, x):
    if kern.family == "gaussian":
        return np.exp(-(x - kern.center[j, g]) ** 2 / (2 * kern.bandwidth[j, g]))
    s = np.sin((x - kern.center[j, g]) / kern.period[j, g])
    return np.exp(-2 * s * s / kern.bandwidth[j, g])


def rows_of(model):
    d = model.data
    return [(i, int(d.group[i]), float(d.x[i])) for i in range(d.n)]


def batch_means_se(x, batches=50):
    m = np.asarray(x)[: len(x) // batches * batches].reshape(batches, -1).mean(axis=1)
    return m.std(ddof=1) / np.sqrt(batches)


# q ---------------------------------------------------------------------------------

def test_q_worked_example():
    # three rows on component 0, alpha p = 0.5, sum xi K = 2  ->  Gam(3.5, rate 3)
    model = toy_nb_model(J=2, D=1, n=3, G=1)
    s = initialize(model, np.random.default_rng(0), partition=np.zeros(3, dtype=int))
    s.alpha, s.log_p = 1.0, np.log([0.5, 0.5])
    s.kernel.bandwidth[:] = 1e12
    s.xi = np.full(3, 2.0 / 3.0)
    r = np.random.default_rng(1)
    draws = np.empty((N_ORACLE, 2))
    for i in range(N_ORACLE):
        draws[i] = np.exp(up.update_q(s, model, r).log_q[:, 0])
    assert abs(3.5 / 3 - 1.1667) < 1e-4
    assert stats.kstest(draws[:, 0], stats.gamma(3.5, scale=1 / 3).cdf).pvalue > 0.01
    assert stats.kstest(draws[:, 1], stats.gamma(0.5, scale=1 / 3).cdf).pvalue > 0.01


def test_q_full_conditional_oracle():
    model = toy_nb_model(J=3, D=2, n=12)
    s = warm_state(model)
    J, D = 3, 2
    shape = np.zeros((J, D))
    rate = np.ones((J, D))
    for i, g, x in rows_of(model):
        shape[s.z[i], g] += 1
        for j in range(J):
            rate[j, g] += s.xi[i] * kernel_value(s.kernel, j, g, x)
    shape += s.alpha * np.exp(s.log_p)[:, None]
    r = np.random.default_rng(2)
    reps = N_ORACLE // (J * D) + 1
    pit = np.empty((reps, J, D))
    for k in range(reps):
        pit[k] = stats.gamma.cdf(np.exp(up.update_q(s, model, r).log_q) * rate, shape)
    assert stats.kstest(pit.ravel(), "uniform").pvalue > 0.01


# xi and u ---------------------------------------------------------------------------

def test_xi_full_conditional_oracle():
    model = toy_nb_model(J=3, D=2, n=12)
    s = warm_state(model)
    q = np.exp(s.log_q)
    rate = np.array([sum(q[j, g] * kernel_value(s.kernel, j, g, x) for j in range(3))
                     for _, g, x in rows_of(model)])
    r = np.random.default_rng(3)
    reps = N_ORACLE // model.data.n + 1
    scaled = np.concatenate([up.draw_xi(s, model, r).xi * rate for _ in range(reps)])
    assert stats.kstest(scaled, "expon").pvalue > 0.01


@pytest.mark.parametrize("kernel", ["gaussian", "periodic"])
def test_u_full_conditional_oracle(kernel):
    # u | rest is uniform on (0, exp(-xi q K))
    if kernel == "gaussian":
        model = toy_nb_model(J=3, D=2, n=12)
    else:
        model = toy_var_model(J=3, D=2, n=13)
    s = warm_state(model)
    q = np.exp(s.log_q)
    top = np.array([[np.exp(-s.xi[i] * q[j, g] * kernel_value(s.kernel, j, g, x)) for j in range(3)]
                    for i, g, x in rows_of(model)])
    r = np.random.default_rng(4)
    reps = N_ORACLE // top.size + 1
    ratio = np.concatenate([(up.update_u(s, model, r).u / top).ravel() for _ in range(reps)])
    assert stats.kstest(ratio, "uniform").pvalue > 0.01


# gaussian kernel --------------------------------------------------------------------

def test_center_worked_example():
    model = toy_nb_model(J=1, D=1, n=1, G=1)
    s = initialize(model, np.random.default_rng(0))
    model.data.x[:] = 1.0
    s.r, s.s2 = np.zeros(1), 1.0
    s.kernel.bandwidth[:] = 1.0
    s.neg_log_u[:] = 1e6  # no active slice constraint
    r = np.random.default_rng(5)
    draws = np.array([up.update_centers_gaussian(s, model, r).kernel.center[0, 0] for _ in range(20000)])
    assert stats.kstest(draws, stats.norm(0.5, np.sqrt(0.5)).cdf).pvalue > 0.01


def test_center_conditional_respects_slices():
    model = toy_nb_model(J=3, D=2, n=12)
    s = warm_state(model)
    r = np.random.default_rng(6)
    q = np.exp(s.log_q)
    for _ in range(200):
        up.update_centers_gaussian(s, model, r)
        for i, g, x in rows_of(model):
            for j in range(3):
                assert s.neg_log_u[i, j] > s.xi[i] * q[j, g] * kernel_value(s.kernel, j, g, x)


def _bandwidth_blocks(model, s):
    """Allocated sum of squares and slice upper bound for every (j, d)."""
    J, D = model.J, model.data.D
    q = np.exp(s.log_q)
    ss = np.zeros((J, D))
    upper = np.full((J, D), np.inf)
    for i, g, x in rows_of(model):
        for j in range(J):
            d2 = (x - s.kernel.center[j, g]) ** 2
            if s.z[i] == j:
                ss[j, g] += d2
            # -log u > xi q exp(-d2 / (2 s2)) fails for large s2 once xi q > -log u
            if s.xi[i] * q[j, g] > s.neg_log_u[i, j]:
                upper[j, g] = min(upper[j, g], d2 / (2 * np.log(s.xi[i] * q[j, g] / s.neg_log_u[i, j])))
    return ss, upper


def _log_bandwidth_cdfs(ss, upper, h, m2, npts=20001):
    """Quadrature CDF on t = log s2 of exp(-ss e^-t / 2) N(t | h, m2) below log upper."""
    out = []
    for j in range(ss.shape[0]):
        for g in range(ss.shape[1]):
            hi = min(np.log(upper[j, g]), h[j] + 12 * np.sqrt(m2))
            t = np.linspace(-60.0, hi, npts)
            lf = -0.5 * ss[j, g] * np.exp(-t) - (t - h[j]) ** 2 / (2 * m2)
            f = np.exp(lf - lf.max())
            c = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
            out.append((t, c / c[-1]))
    return out


def _gaussian_bandwidth_pits(broken=False, reps=250, steps=99):
    # start every block at an exact draw and run the AMH step below warmup;
    # an invariant kernel must leave the draws exactly distributed
    model = toy_nb_model(J=2, D=200, n=5, G=1, seed=7)
    s = warm_state(model, seed=7, sweeps=3)
    s.h, s.m2 = np.array([-2.5, -1.0]), 1.0
    ss, upper = _bandwidth_blocks(model, s)
    assert np.isfinite(upper).sum() > 20
    cdfs = _log_bandwidth_cdfs(ss, upper, s.h, s.m2)
    r = np.random.default_rng(8)
    pits = []
    for _ in range(reps):
        u0 = r.uniform(size=len(cdfs))
        s.kernel.bandwidth = np.exp([np.interp(u, c, t) for u, (t, c) in zip(u0, cdfs)]).reshape(ss.shape)
        s.amh.pop("bandwidth", None)
        for _ in range(steps):
            up.update_bandwidths_gaussian(s, model, r)
        lt = np.log(s.kernel.bandwidth).ravel()
        pits.append([np.interp(v, t, c) for v, (t, c) in zip(lt, cdfs)])
    return np.concatenate(pits)


def test_gaussian_bandwidth_full_conditional_oracle():
    pit = _gaussian_bandwidth_pits()
    assert pit.size >= N_ORACLE
    assert stats.kstest(pit, "uniform").pvalue > 0.01


def test_gaussian_bandwidth_oracle_has_power(monkeypatch):
    # dropping the transform Jacobian must be caught by the same comparison
    monkeypatch.setattr(amh.LogitBounded, "log_jacobian", lambda self, x: np.zeros(np.shape(x)))
    pit = _gaussian_bandwidth_pits(reps=100)
    assert stats.kstest(pit, "uniform").pvalue < 1e-6


def test_gaussian_hyperparameters_conjugate(rng):
    model = toy_nb_model(J=2, D=3, n=6)
    s = warm_state(model)
    pr = model.cfg.gaussian_kernel
    c, lb = s.kernel.center.copy(), np.log(s.kernel.bandwidth)
    v = 1 / (1 / pr.sigma_r ** 2 + 3 / 0.7)
    m = v * (pr.mu_r / pr.sigma_r ** 2 + c.sum(axis=1) / 0.7)
    vh = 1 / (1 / pr.sigma_h ** 2 + 3 / 0.3)
    mh = vh * (pr.mu_h / pr.sigma_h ** 2 + lb.sum(axis=1) / 0.3)
    pit = {"r": [], "s2": [], "h": [], "m2": []}
    for _ in range(20000):
        s.s2, s.m2 = 0.7, 0.3
        up.update_hyper_gaussian(s, model, rng)
        pit["r"].extend(stats.norm.cdf(s.r, m, np.sqrt(v)))
        pit["h"].extend(stats.norm.cdf(s.h, mh, np.sqrt(vh)))
        # the variances are drawn given the fresh means
        b = pr.eta2 + 0.5 * np.sum((c - s.r[:, None]) ** 2)
        pit["s2"].append(stats.invgamma.cdf(s.s2, 3.0 + pr.eta1, scale=b))
        b = pr.kappa2 + 0.5 * np.sum((lb - s.h[:, None]) ** 2)
        pit["m2"].append(stats.invgamma.cdf(s.m2, 3.0 + pr.kappa1, scale=b))
    for k, v_ in pit.items():
        assert stats.kstest(v_, "uniform").pvalue > 0.01, k


# periodic kernel --------------------------------------------------------------------

def test_periodic_bandwidth_full_conditional_oracle():
    model = toy_var_model(J=2, D=50, n=6, seed=3)
    s = warm_state(model, seed=3)
    J, D = 2, 50
    h, m2 = s.h[:, None], s.m2
    a = 2 + h ** 2 / m2
    b0 = h ** 2 + h ** 3 / m2
    r = np.random.default_rng(9)
    pits, active = [], 0
    for _ in range(N_ORACLE // (J * D)):
        up.update_kernel_periodic(s, model, r)
        kern, q = s.kernel, np.exp(s.log_q)
        alloc = np.zeros((J, D))
        upper = np.full((J, D), np.inf)
        for i, g, x in rows_of(model):
            for j in range(J):
                sn2 = np.sin((x - kern.center[j, g]) / kern.period[j, g]) ** 2
                if s.z[i] == j:
                    alloc[j, g] += sn2
                if s.xi[i] * q[j, g] > s.neg_log_u[i, j]:
                    upper[j, g] = min(upper[j, g], 2 * sn2 / np.log(s.xi[i] * q[j, g] / s.neg_log_u[i, j]))
        active += np.isfinite(upper).sum()
        ig = stats.invgamma(a, scale=b0 + 2 * alloc)
        pits.append(ig.cdf(kern.bandwidth) / ig.cdf(upper))
    assert active > 1000
    assert stats.kstest(np.ravel(pits), "uniform").pvalue > 0.01


def test_periodic_center_stays_canonical():
    model = toy_var_model(J=3, D=2, n=13)
    s = warm_state(model)
    r = np.random.default_rng(10)
    for _ in range(100):
        up.update_kernel_periodic(s, model, r)
        assert np.all(np.abs(s.kernel.center) <= np.pi * s.kernel.period / 2 * (1 + 1e-12))


# VAR conjugate block ---------------------------------------------------------------

def test_var_component_full_conditional_oracle():
    model = toy_var_model(J=1, D=2, n=15, G=2)
    s = initialize(model, np.random.default_rng(0))
    pr = model.var_prior
    X, Y = model.data.design, model.data.y
    P, G = X.shape[1], Y.shape[1]
    # vec form: precision (Sigma^-1 kron A) with A = X'X + V0^-1 gives a Sigma-free mean
    A = X.T @ X + np.linalg.inv(pr.V0)
    Ln = np.linalg.solve(A, X.T @ Y + np.linalg.solve(pr.V0, pr.L0))
    R = Y - X @ Ln
    Phin = pr.Phi0 + R.T @ R + (Ln - pr.L0).T @ np.linalg.solve(pr.V0, Ln - pr.L0)
    wn = pr.omega0 + Y.shape[0]
    Vn = np.linalg.inv(A)
    r = np.random.default_rng(11)
    s11, sigma_sum, white = [], np.zeros((G, G)), []
    for _ in range(N_ORACLE):
        up.update_components_var(s, model, r)
        L, S = s.L[0], s.Sigma[0]
        s11.append(S[0, 0])
        sigma_sum += S
        # vec(L - Ln) ~ N(0, Sigma kron Vn)
        cov = np.kron(S, Vn)
        e = (L - Ln).ravel(order="F")
        white.append(np.linalg.solve(np.linalg.cholesky(cov), e))
    assert stats.kstest(s11, stats.invgamma((wn - G + 1) / 2, scale=Phin[0, 0] / 2).cdf).pvalue > 0.01
    assert np.allclose(sigma_sum / N_ORACLE, Phin / (wn - G - 1), rtol=0.03)
    assert stats.kstest(np.ravel(white), "norm").pvalue > 0.01


def test_var_batched_draw_matches_single(rng):
    model = toy_var_model(J=1, D=2, n=15, G=2)
    from artifact.likelihoods import var_posterior
    post = var_posterior(model.data.y, model.data.design, model.var_prior)
    L, S = up.draw_var_component(post, rng, size=20000)
    A = np.linalg.cholesky(post[1])
    B = np.linalg.cholesky(S)
    Z = np.linalg.solve(A, L - post[0])
    Z = np.linalg.solve(B, np.swapaxes(Z, 1, 2))
    assert stats.kstest(Z.ravel(), "norm").pvalue > 0.01


# allocations ------------------------------------------------------------------------

def test_allocation_probabilities_direct_nb():
    model = toy_nb_model(J=2, D=1, n=4, G=2)
    s = warm_state(model)
    q = np.exp(s.log_q)
    got = up.allocation_log_probs(s, model)
    for i, g, x in rows_of(model):
        lp = np.empty(2)
        for j in range(2):
            m = s.beta[i] * s.mu[j]
            like = stats.nbinom.logpmf(model.data.y[i], s.phi[j], s.phi[j] / (s.phi[j] + m)).sum()
            lp[j] = like + np.log(q[j, g] * kernel_value(s.kernel, j, g, x))
        assert np.allclose(got[i], lp - logsumexp(lp), atol=1e-12)


def test_allocation_probabilities_direct_var():
    model = toy_var_model(J=3, D=2, n=8)
    s = warm_state(model)
    q = np.exp(s.log_q)
    got = up.allocation_log_probs(s, model)
    d = model.data
    for i, g, x in rows_of(model):
        lp = np.array([stats.multivariate_normal(s.L[j].T @ d.design[i], s.Sigma[j]).logpdf(d.y[i])
                       + np.log(q[j, g] * kernel_value(s.kernel, j, g, x)) for j in range(3)])
        assert np.allclose(got[i], lp - logsumexp(lp), atol=1e-12)


# top-level weights and concentrations ------------------------------------------------

def test_top_weights_target_matches_independent_evaluation(rng):
    J, D = 4, 3
    log_q = np.log(rng.gamma(1.0, size=(J, D)))
    alpha, alpha0 = 1.7, 2.3

    def oracle(p):
        return (stats.gamma.logpdf(np.exp(log_q), (alpha * p)[:, None]).sum()
                + stats.dirichlet.logpdf(p, np.full(J, alpha0 / J)))

    ps = rng.dirichlet(np.ones(J), size=20)
    lib = np.array([up.top_weights_log_target(np.log(p), alpha, alpha0, log_q) for p in ps])
    ref = np.array([oracle(p) for p in ps])
    assert np.ptp(lib - ref) < 1e-9


def _posterior_mean(logpdf, lo=1e-8, hi=60.0):
    z = quad(lambda a: np.exp(logpdf(a)), lo, hi, limit=200)[0]
    m = quad(lambda a: a * np.exp(logpdf(a)), lo, hi, limit=200)[0]
    return m / z


def test_alpha_single_group_single_component():
    model = toy_nb_model(J=1, D=1, n=3, G=1)
    s = initialize(model, np.random.default_rng(0))
    s.log_q = np.array([[np.log(0.7)]])
    s.log_p = np.zeros(1)
    # Gam(1, 1) prior times Gam(0.7 | alpha, 1)
    mean = _posterior_mean(lambda a: -a + (a - 1) * np.log(0.7) - gammaln(a))
    r = np.random.default_rng(12)
    draws = np.array([up.update_alpha(s, model, r).alpha for _ in range(N_ORACLE)])[1000:]
    assert abs(draws.mean() - mean) < 4 * batch_means_se(draws)


def test_alpha0_two_components():
    model = toy_nb_model(J=2, D=1, n=3, G=1)
    s = initialize(model, np.random.default_rng(0))
    p = np.array([0.3, 0.7])
    s.log_p = np.log(p)
    mean = _posterior_mean(lambda a: -a + stats.dirichlet.logpdf(p, [a / 2, a / 2]))
    r = np.random.default_rng(13)
    draws = np.array([up.update_alpha0(s, model, r).alpha0 for _ in range(N_ORACLE)])[1000:]
    assert abs(draws.mean() - mean) < 4 * batch_means_se(draws)


# NB atoms and capture ----------------------------------------------------------------

def test_nb_atom_one_gene_one_cell_quadrature():
    # genes are independent given (beta, b, alpha_phi2), so replicated genes run as parallel chains
    G = 2000
    model = toy_nb_model(J=1, D=1, n=1, G=G, nb=dict(alpha_mu2=0.5, m_b=[0.2, 0.3], capture_a=2.0, capture_b=2.0))
    s = initialize(model, np.random.default_rng(0))
    model.data.y[:] = 3.0
    s.beta = np.array([0.5])
    s.b, s.alpha_phi2 = np.array([0.2, 0.3]), 0.3
    lm = np.linspace(-6, 6, 801)
    lp = np.linspace(-8, 8, 801)
    LM, LP = np.meshgrid(lm, lp, indexing="ij")
    mu, phi = np.exp(LM), np.exp(LP)
    logd = (stats.norm.logpdf(LM, 0, np.sqrt(0.5)) + stats.norm.logpdf(LP, 0.2 + 0.3 * LM, np.sqrt(0.3))
            + stats.nbinom.logpmf(3, phi, phi / (phi + 0.5 * mu)))
    w = np.exp(logd - logsumexp(logd))
    r = np.random.default_rng(14)
    sums = np.zeros((2, G))
    for k in range(600):
        up.update_components_nb(s, model, r)
        if k >= 200:
            sums += np.log(s.mu[0]), np.log(s.phi[0])
    chain_means = sums / 400
    for c, grid in ((0, LM), (1, LP)):
        est = chain_means[c].mean()
        se = chain_means[c].std(ddof=1) / np.sqrt(G)
        assert abs(est - (w * grid).sum()) < min(4 * se, 1e-2)


def test_capture_without_genes_recovers_beta_prior():
    n = 5000
    model = SimpleNamespace(data=SimpleNamespace(y=np.zeros((n, 0)), n=n),
                            capture_a=np.full(n, 3.0), capture_b=np.full(n, 2.0))
    s = SimpleNamespace(beta=np.full(n, 0.5), z=np.zeros(n, dtype=int), mu=np.zeros((1, 0)),
                        phi=np.ones((1, 0)), amh={}, accept={})
    r = np.random.default_rng(15)
    for _ in range(2000):
        up.update_capture(s, model, r)
    assert stats.kstest(s.beta, stats.beta(3, 2).cdf).pvalue > 0.01


def test_categorical_levels_respect_slices():
    model = toy_var_model(J=3, D=2, n=20, kernel="categorical")
    s = warm_state(model)
    r = np.random.default_rng(16)
    q = np.exp(s.log_q)
    for _ in range(100):
        up.update_kernel_categorical(s, model, r)
        p = s.kernel.probs
        assert np.allclose(p.sum(axis=-1), 1.0)
        for i, g, x in rows_of(model):
            for j in range(3):
                assert s.neg_log_u[i, j] > s.xi[i] * q[j, g] * p[j, g, int(x) - 1]
