"""Full-conditional updates for every parameter block.

Each update takes (state, model, rng), mutates the state and returns it.
Arrays indexed by (component, group) have shape (J, D); row-level arrays
have one row per allocated observation.
"""

import numpy as np
from scipy.special import gammaln

from .. import amh
from .. import stochastic as st
from ..kernels import canonical_center
from ..likelihoods import var_log_likelihood, var_posterior
from .state import periodic_shape_scale

_LOG_2PI = np.log(2.0 * np.pi)


# shared helpers -------------------------------------------------------------

def row_log_kernel(kernel, data):
    """log K(x_i | psi_{j, d_i}) for every row and component, shape (n, J)."""
    g = data.group
    fam = kernel.family
    if fam == "gaussian":
        diff = data.x[:, None] - kernel.center.T[g]
        return -0.5 * diff * diff / kernel.bandwidth.T[g]
    if fam == "periodic":
        s = np.sin((data.x[:, None] - kernel.center.T[g]) / kernel.period.T[g])
        return -2.0 * s * s / kernel.bandwidth.T[g]
    return np.log(kernel.probs[:, g, data.x_level - 1]).T


def per_group(data, M):
    """Sum row-level (n, J) values within each group -> (J, D)."""
    return np.add.reduceat(M, data.starts, axis=0).T


def per_allocation(data, z, values, J):
    """Sum row-level values over rows allocated to (j, d) -> (J, D)."""
    idx = data.group * J + z
    return np.bincount(idx, weights=values, minlength=data.D * J).reshape(data.D, J).T


def allocation_counts(state, model):
    return per_allocation(model.data, state.z, np.ones(model.data.n), model.J)


def row_q(state, data):
    return state.log_q.T[data.group]


def _amh_state(state, key, **kw):
    if key not in state.amh:
        state.amh[key] = amh.AmhState(**kw)
    return state.amh[key]


def _record_accept(state, key, prob):
    state.accept.setdefault(key, []).append(float(np.mean(prob)))


def _log_lik_matrix(state, model):
    """log f(y_i | theta_j) up to row constants, shape (n, J)."""
    d = model.data
    if d.counts:
        phi, y = state.phi, d.y[:, None, :]
        lb = np.log(state.beta)
        bm = state.beta[:, None, None] * state.mu
        t = st.log_rising(phi, y) - phi * np.log1p(bm / phi) - y * np.log(bm + phi)
        return t.sum(axis=2) + d.y @ np.log(state.mu).T + (d.y.sum(axis=1) * lb)[:, None]
    return var_log_likelihood(d.y, d.design, state.L, state.Sigma)


# weights and augmentation ---------------------------------------------------

def update_q(state, model, rng):
    d, J = model.data, model.J
    K = np.exp(row_log_kernel(state.kernel, d))
    S = per_group(d, state.xi[:, None] * K)
    N = allocation_counts(state, model)
    shape = N + state.alpha * np.exp(state.log_p)[:, None]
    state.log_q = st.sample_log_gamma(shape, rng) - np.log1p(S)
    return state


def draw_xi(state, model, rng):
    d = model.data
    rate = np.exp(row_q(state, d) + row_log_kernel(state.kernel, d)).sum(axis=1)
    state.xi = rng.standard_exponential(d.n) / rate
    return state


def update_xi(state, model, rng):
    return draw_xi(state, model, rng)


def update_u(state, model, rng):
    d = model.data
    M = state.xi[:, None] * np.exp(row_q(state, d) + row_log_kernel(state.kernel, d))
    state.neg_log_u = M + rng.standard_exponential(M.shape)
    return state


def _slice_log_ratio(state, model):
    """log(-log u / (xi q)) per row and component; negative rows are constrained."""
    d = model.data
    return np.log(state.neg_log_u) - np.log(state.xi)[:, None] - row_q(state, d)


def _min_per_group(data, M):
    """Minimum of row-level (n, J) values within each group -> (J, D)."""
    return np.minimum.reduceat(M, data.starts, axis=0).T


# gaussian kernel ------------------------------------------------------------

def update_centers_gaussian(state, model, rng):
    d, J, kern = model.data, model.J, state.kernel
    lr = _slice_log_ratio(state, model)
    N = allocation_counts(state, model)
    sx = per_allocation(d, state.z, d.x, J)
    for g, sl in enumerate(d.group_slices()):
        xs = d.x[sl]
        for j in range(J):
            bw = kern.bandwidth[j, g]
            l = lr[sl, j]
            act = l < 0
            if np.any(act):
                k = np.sqrt(-2.0 * bw * l[act])
                region = st.IntervalUnion.excluding(zip(xs[act] - k, xs[act] + k))
            else:
                region = st.IntervalUnion.real_line()
            prec = 1.0 / state.s2 + N[j, g] / bw
            mean = (state.r[j] / state.s2 + sx[j, g] / bw) / prec
            kern.center[j, g] = st.sample_truncated_normal(mean, 1.0 / prec, region, rng)
    return state


def gaussian_bandwidth_log_target(sigma2, ss, h, m2):
    ls = np.log(sigma2)
    return -ss / (2.0 * sigma2) - ls - (ls - h) ** 2 / (2.0 * m2)


def update_bandwidths_gaussian(state, model, rng):
    d, J, kern = model.data, model.J, state.kernel
    lr = _slice_log_ratio(state, model)
    diff2 = (d.x[:, None] - kern.center.T[d.group]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(lr < 0, -diff2 / (2.0 * lr), np.inf)
    upper = _min_per_group(d, bound)
    # guard against round-off putting the current value on the bound
    upper = np.maximum(upper, kern.bandwidth * (1.0 + 1e-9))
    rows = np.arange(d.n)
    ss = per_allocation(d, state.z, diff2[rows, state.z], J)
    N = allocation_counts(state, model)
    h = state.h[:, None]

    empty = N == 0
    with np.errstate(divide="ignore"):
        hi = np.log(upper)
    prior_draw = np.exp(st.sample_truncated_normal_interval(
        np.broadcast_to(h, upper.shape), np.sqrt(state.m2), -np.inf, hi, rng))
    prior_draw = np.clip(prior_draw, 1e-12, np.nextafter(upper, 0))

    ams = _amh_state(state, "bandwidth", dim=1, batch_shape=(J, d.D), mode="fixed")
    t = amh.LogitBounded(0.0, upper)
    new, acc, _ = amh.step(
        ams, kern.bandwidth, lambda s2: gaussian_bandwidth_log_target(s2, ss, h, state.m2),
        t, rng, forced=(empty, prior_draw))
    kern.bandwidth = np.maximum(new, 1e-12)
    _record_accept(state, "bandwidth", acc[~empty] if np.any(~empty) else acc)
    return state


def update_kernel_gaussian(state, model, rng):
    update_centers_gaussian(state, model, rng)
    update_bandwidths_gaussian(state, model, rng)
    return state


def update_hyper_gaussian(state, model, rng):
    pr, kern, D = model.cfg.gaussian_kernel, state.kernel, model.data.D
    J = model.J
    v = 1.0 / (1.0 / pr.sigma_r ** 2 + D / state.s2)
    m = v * (pr.mu_r / pr.sigma_r ** 2 + kern.center.sum(axis=1) / state.s2)
    state.r = m + np.sqrt(v) * rng.standard_normal(J)
    ssr = np.sum((kern.center - state.r[:, None]) ** 2)
    state.s2 = float(st.sample_inverse_gamma(J * D / 2.0 + pr.eta1, pr.eta2 + 0.5 * ssr, rng))
    lb = np.log(kern.bandwidth)
    v = 1.0 / (1.0 / pr.sigma_h ** 2 + D / state.m2)
    m = v * (pr.mu_h / pr.sigma_h ** 2 + lb.sum(axis=1) / state.m2)
    state.h = m + np.sqrt(v) * rng.standard_normal(J)
    ssh = np.sum((lb - state.h[:, None]) ** 2)
    state.m2 = float(st.sample_inverse_gamma(J * D / 2.0 + pr.kappa1, pr.kappa2 + 0.5 * ssh, rng))
    return state


# periodic kernel ------------------------------------------------------------

def _periodic_terms(state, model, center, period):
    """Allocated sin^2 sums and the xi-weighted kernel sums, both (J, D)."""
    d, J, kern = model.data, model.J, state.kernel
    g = d.group
    s = np.sin((d.x[:, None] - center.T[g]) / period.T[g])
    s2 = s * s
    K = np.exp(-2.0 * s2 / kern.bandwidth.T[g])
    rows = np.arange(d.n)
    alloc = per_allocation(d, state.z, s2[rows, state.z], J)
    mass = per_group(d, state.xi[:, None] * K)
    return alloc, mass


def periodic_location_log_target(state, model, center, period):
    alloc, mass = _periodic_terms(state, model, center, period)
    return -2.0 / state.kernel.bandwidth * alloc - np.exp(state.log_q) * mass


def update_kernel_periodic(state, model, rng):
    d, J, kern = model.data, model.J, state.kernel
    pr = model.cfg.periodic_kernel
    half = 0.5 * np.pi * kern.period
    # the canonical interval is half-open; keep the start strictly inside
    inner = half * (1.0 - 1e-12)
    kern.center = np.clip(kern.center, -inner, inner)
    ams = _amh_state(state, "location", dim=1, batch_shape=(J, d.D), mode="variance", target=0.44)
    new, acc, _ = amh.step(
        ams, kern.center,
        lambda c: periodic_location_log_target(state, model, c, kern.period),
        amh.LogitBounded(-half, half), rng)
    kern.center = new
    _record_accept(state, "location", acc)

    lo = 2.0 * np.abs(kern.center) / np.pi
    r = state.r[:, None]

    def period_target(lam):
        return (periodic_location_log_target(state, model, kern.center, lam)
                - 2.0 * np.log(lam) - (np.log(lam) - r) ** 2 / (2.0 * state.s2))

    ams = _amh_state(state, "period", dim=1, batch_shape=(J, d.D), mode="variance", target=0.44)
    new, acc, _ = amh.step(ams, kern.period, period_target, amh.ShiftedLog(lo), rng)
    kern.period = new
    kern.center = np.asarray(canonical_center(kern.center, kern.period))
    _record_accept(state, "period", acc)

    # slice variables must be redrawn once location and period have moved
    update_u(state, model, rng)
    lr = _slice_log_ratio(state, model)
    g = d.group
    s = np.sin((d.x[:, None] - kern.center.T[g]) / kern.period.T[g])
    s2 = s * s
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(lr < 0, -2.0 * s2 / lr, np.inf)
    upper = _min_per_group(d, bound)
    if np.any(upper <= 0):
        raise ValueError("empty bandwidth region: constrained row sits on the center")
    upper = np.maximum(upper, kern.bandwidth * (1.0 + 1e-9))
    a, b = periodic_shape_scale(state.h, state.m2)
    rows = np.arange(d.n)
    alloc = per_allocation(d, state.z, s2[rows, state.z], J)
    kern.bandwidth = np.maximum(
        st.sample_truncated_inverse_gamma(a[:, None], b[:, None] + 2.0 * alloc, upper, rng), 1e-12)
    return state


def _ig_terms(h, m2, bw):
    """Per-component log IG(a(h, m2), b(h, m2)) density summed over groups."""
    a, b = periodic_shape_scale(h, m2)
    D = bw.shape[-1]
    lb = np.log(bw)
    return (D * a * np.log(b) - D * gammaln(a) - (a + 1.0) * lb.sum(axis=-1)
            - b * (1.0 / bw).sum(axis=-1))


def update_hyper_periodic(state, model, rng):
    pr, kern, D, J = model.cfg.periodic_kernel, state.kernel, model.data.D, model.J
    ll = np.log(kern.period)
    v = 1.0 / (1.0 / pr.sigma_r ** 2 + D / state.s2)
    m = v * (pr.mu_r / pr.sigma_r ** 2 + ll.sum(axis=1) / state.s2)
    state.r = m + np.sqrt(v) * rng.standard_normal(J)
    ssr = np.sum((ll - state.r[:, None]) ** 2)
    state.s2 = float(st.sample_inverse_gamma(J * D / 2.0 + pr.eta1, pr.eta2 + 0.5 * ssr, rng))

    def h_target(h):
        lh = np.log(h)
        return _ig_terms(h, state.m2, kern.bandwidth) - lh - (lh - pr.mu_h) ** 2 / (2.0 * pr.sigma_h ** 2)

    ams = _amh_state(state, "h", dim=1, batch_shape=(J,), mode="variance", target=0.44)
    state.h, acc, _ = amh.step(ams, state.h, h_target, amh.Log(), rng)
    _record_accept(state, "h", acc)

    def m2_target(m2):
        return (_ig_terms(state.h, m2, kern.bandwidth).sum()
                - (pr.kappa1 + 1.0) * np.log(m2) - pr.kappa2 / m2)

    ams = _amh_state(state, "m2", dim=1, batch_shape=(), mode="variance", target=0.44)
    state.m2, acc, _ = amh.step(ams, state.m2, m2_target, amh.Log(), rng)
    _record_accept(state, "m2", acc)
    return state


# categorical kernel ---------------------------------------------------------

def update_kernel_categorical(state, model, rng):
    d, J, kern = model.data, model.J, state.kernel
    L = d.levels
    if L == 1:
        return state
    conc = model.cfg.categorical_kernel.concentration
    lr = _slice_log_ratio(state, model)
    counts = np.zeros((J, d.D, L))
    np.add.at(counts, (state.z, d.group, d.x_level - 1), 1.0)
    # tightest slice bound per (component, group, level)
    limit = np.full((J, d.D, L), np.inf)
    np.minimum.at(limit, (slice(None), d.group, d.x_level - 1), lr.T)

    def target(logp):
        ok = np.all(logp < limit, axis=-1)
        val = np.sum((counts + conc - 1.0) * logp, axis=-1)
        return np.where(ok, val, -np.inf)

    ams = _amh_state(state, "levels", dim=L - 1, batch_shape=(J, d.D), mode="adaptive")
    logp, acc, _ = amh.step(ams, np.log(kern.probs), target, amh.AdditiveLogRatio(on_log_scale=True), rng)
    kern.probs = np.exp(logp)
    _record_accept(state, "levels", acc)
    return state


def update_kernel(state, model, rng):
    fam = model.cfg.kernel
    if fam == "gaussian":
        return update_kernel_gaussian(state, model, rng)
    if fam == "periodic":
        return update_kernel_periodic(state, model, rng)
    return update_kernel_categorical(state, model, rng)


def update_hyperparams(state, model, rng):
    fam = model.cfg.kernel
    if fam == "gaussian":
        return update_hyper_gaussian(state, model, rng)
    if fam == "periodic":
        return update_hyper_periodic(state, model, rng)
    return state


# concentrations and top-level weights ---------------------------------------

def alpha_log_target(alpha, log_p, log_q, shape=1.0, rate=1.0):
    alpha = np.asarray(alpha, dtype=float)
    ap = alpha[..., None] * np.exp(log_p)
    D = log_q.shape[1]
    terms = ap * log_q.sum(axis=1) - D * gammaln(ap)
    return (shape - 1.0) * np.log(alpha) - rate * alpha + terms.sum(axis=-1)


def alpha0_log_target(alpha0, log_p, shape=1.0, rate=1.0):
    a0 = np.asarray(alpha0, dtype=float)
    J = log_p.shape[-1]
    return ((shape - 1.0) * np.log(a0) - rate * a0 + gammaln(a0) - J * gammaln(a0 / J)
            + a0 / J * log_p.sum())


def top_weights_log_target(log_p, alpha, alpha0, log_q):
    J = log_p.shape[-1]
    ap = alpha * np.exp(log_p)
    D = log_q.shape[1]
    return np.sum(ap * log_q.sum(axis=1) - D * gammaln(ap), axis=-1) + np.sum((alpha0 / J - 1.0) * log_p, axis=-1)


def update_alpha(state, model, rng):
    c = model.cfg.concentration
    ams = _amh_state(state, "alpha", dim=1, mode="fixed")
    state.alpha, acc, _ = amh.step(
        ams, state.alpha, lambda a: alpha_log_target(a, state.log_p, state.log_q, c.alpha_shape, c.alpha_rate),
        amh.Log(), rng)
    _record_accept(state, "alpha", acc)
    return state


def update_alpha0(state, model, rng):
    c = model.cfg.concentration
    ams = _amh_state(state, "alpha0", dim=1, mode="fixed")
    state.alpha0, acc, _ = amh.step(
        ams, state.alpha0, lambda a: alpha0_log_target(a, state.log_p, c.alpha0_shape, c.alpha0_rate),
        amh.Log(), rng)
    _record_accept(state, "alpha0", acc)
    return state


def update_top_weights(state, model, rng):
    J = model.J
    if J == 1:
        return state
    ams = _amh_state(state, "p", dim=J - 1, mode="adaptive", target=0.234)
    state.log_p, acc, _ = amh.step(
        ams, state.log_p, lambda lp: top_weights_log_target(lp, state.alpha, state.alpha0, state.log_q),
        amh.AdditiveLogRatio(on_log_scale=True), rng)
    _record_accept(state, "p", acc)
    return state


# allocations ----------------------------------------------------------------

def allocation_log_probs(state, model):
    """Normalized log p(z_i = j | rest), shape (n, J)."""
    d = model.data
    lp = _log_lik_matrix(state, model) + row_q(state, d) + row_log_kernel(state.kernel, d)
    top = lp.max(axis=1, keepdims=True)
    return lp - top - np.log(np.exp(lp - top).sum(axis=1, keepdims=True))


def update_allocations(state, model, rng):
    state.z = st.sample_categorical(allocation_log_probs(state, model), rng)
    return state


# negative binomial atoms ----------------------------------------------------

def update_link(state, model, rng):
    from ..likelihoods import mean_dispersion_posterior

    mt, Vt, n1, n2 = mean_dispersion_posterior(state.mu, state.phi, model.m_b, model.nu1, model.nu2)
    state.alpha_phi2 = float(st.sample_inverse_gamma(n1, n2, rng))
    C = np.linalg.cholesky(state.alpha_phi2 * Vt)
    state.b = mt + C @ rng.standard_normal(2)
    return state


def _cluster_nb_loglik(mu, phi, state, model):
    """Sum over allocated cells of the NB log-pmf for each (component, gene)."""
    y, z = model.data.y, state.z
    ph = phi[z]
    lm = np.log(mu)
    bm = state.beta[:, None] * mu[z]
    t = st.log_rising(ph, y) - ph * np.log1p(bm / ph) - y * np.log(bm + ph) + y * lm[z]
    t += y * np.log(state.beta)[:, None]
    order = np.argsort(z, kind="stable")
    counts = np.bincount(z, minlength=mu.shape[0])
    out = np.zeros(mu.shape)
    occ = counts > 0
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    out[occ] = np.add.reduceat(t[order], starts[occ], axis=0)
    return out


def nb_atom_log_target(theta, state, model):
    mu, phi = theta[..., 0], theta[..., 1]
    lm, lphi = np.log(mu), np.log(phi)
    b0, b1 = state.b
    prior = (-lm - lphi - lm * lm / (2.0 * model.alpha_mu2)
             - (lphi - b0 - b1 * lm) ** 2 / (2.0 * state.alpha_phi2))
    return prior + _cluster_nb_loglik(mu, phi, state, model)


def update_components_nb(state, model, rng):
    J, G = state.mu.shape
    occupied = np.bincount(state.z, minlength=J) > 0
    empty = np.broadcast_to(~occupied[:, None], (J, G))
    mu0 = np.exp(np.sqrt(model.alpha_mu2) * rng.standard_normal((J, G)))
    phi0 = np.exp(state.b[0] + state.b[1] * np.log(mu0) + np.sqrt(state.alpha_phi2) * rng.standard_normal((J, G)))
    theta = np.stack([state.mu, state.phi], axis=-1)
    ams = _amh_state(state, "atoms", dim=2, batch_shape=(J, G), mode="fixed", scale=1.0)
    new, acc, _ = amh.step(ams, theta, lambda th: nb_atom_log_target(th, state, model), amh.Log(), rng,
                           forced=(empty, np.stack([mu0, phi0], axis=-1)))
    state.mu, state.phi = new[..., 0], new[..., 1]
    _record_accept(state, "atoms", acc[occupied] if occupied.any() else acc)
    return state


def capture_log_target(beta, state, model):
    d = model.data
    mu = state.mu[state.z]
    phi = state.phi[state.z]
    y = d.y
    lb = np.log(beta)
    bm = mu * beta[:, None]
    # phi log phi dropped: constant in beta and ruinous for round-off at large phi
    like = -np.sum(phi * np.log1p(bm / phi) + y * np.log(phi + bm) - y * lb[:, None], axis=1)
    return (model.capture_a - 1.0) * lb + (model.capture_b - 1.0) * np.log1p(-beta) + like


def update_capture(state, model, rng):
    n = model.data.n
    ams = _amh_state(state, "capture", dim=1, batch_shape=(n,), mode="fixed")
    state.beta, acc, _ = amh.step(ams, state.beta, lambda b: capture_log_target(b, state, model),
                                  amh.LogitBounded(0.0, 1.0), rng)
    _record_accept(state, "capture", acc)
    return state


# VAR / Gaussian atoms -------------------------------------------------------

def draw_var_component(post, rng, size=None):
    Ln, Vn, wn, Phin = post
    Sigma = st.sample_inverse_wishart(wn, Phin, rng, size=size)
    if size is None:
        return st.sample_matrix_normal(Ln, Vn, Sigma, rng), Sigma
    A = np.linalg.cholesky(Vn)
    B = np.linalg.cholesky(Sigma)
    Z = rng.standard_normal((size,) + Ln.shape)
    return Ln + np.einsum("ij,sjk,slk->sil", A, Z, B), Sigma


def update_components_var(state, model, rng):
    d = model.data
    for j in range(model.J):
        rows = state.z == j
        post = var_posterior(d.y[rows], d.design[rows], model.var_prior)
        state.L[j], state.Sigma[j] = draw_var_component(post, rng)
    return state


def update_atoms(state, model, rng):
    if model.data.counts:
        return update_components_nb(state, model, rng)
    return update_components_var(state, model, rng)
