import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from artifact.kernels import (
    CategoricalKernel, GaussianKernel, PeriodicKernel, canonical_center, eval_kernel,
    gaussian_bandwidth_upper, gaussian_center_region, periodic_bandwidth_upper,
)

pos = hs.floats(1e-3, 10.0)
real = hs.floats(-5.0, 5.0)


def test_gaussian_values():
    assert eval_kernel(0.4, GaussianKernel(0.4, 0.0064)) == 1.0
    assert abs(eval_kernel(0.5, GaussianKernel(0.4, 0.0064)) - 0.45783) < 5e-6
    assert abs(eval_kernel(0.5, GaussianKernel(0.4, 0.0064)) - np.exp(-0.78125)) < 1e-15


def test_periodic_value_and_period():
    lam = 0.7
    k = PeriodicKernel(0.1, 2.0, lam)
    assert abs(eval_kernel(0.1 + np.pi * lam / 2, k) - np.exp(-1.0)) < 1e-12
    x = np.linspace(-3, 3, 101)
    assert np.allclose(eval_kernel(x + np.pi * lam, k), eval_kernel(x, k), atol=1e-13)


def test_categorical_kernel():
    k = CategoricalKernel([0.2, 0.3, 0.5])
    assert np.allclose(eval_kernel(np.array([1, 2, 3]), k), [0.2, 0.3, 0.5])
    with pytest.raises(ValueError):
        eval_kernel(4, k)
    with pytest.raises(ValueError):
        eval_kernel(0, k)
    with pytest.raises(ValueError):
        CategoricalKernel([0.2, 0.3, 0.6])
    assert abs(CategoricalKernel([0.2, 0.3, 0.5 + 1e-10]).probs.sum() - 1.0) < 1e-15
    with pytest.raises(ValueError):
        CategoricalKernel([0.0, 1.0])


def test_bandwidth_floor_and_period_validation():
    assert GaussianKernel(0.0, 0.0).bandwidth == 1e-12
    with pytest.raises(ValueError):
        PeriodicKernel(0.0, 1.0, 0.0)


@given(real, real, pos, pos)
@settings(max_examples=200, deadline=None)
def test_kernel_bounded(x, c, bw, lam):
    for k in (GaussianKernel(c, bw), PeriodicKernel(c, bw, lam)):
        v = eval_kernel(x, k)
        assert 0 <= v <= 1


@given(real, real, pos)
@settings(max_examples=100, deadline=None)
def test_flat_limit(x, c, lam):
    assert abs(eval_kernel(x, GaussianKernel(c, 1e8)) - 1) < 1e-6
    assert abs(eval_kernel(x, PeriodicKernel(c, 1e8, lam)) - 1) < 1e-6


@given(hs.floats(-50, 50), pos)
@settings(max_examples=200, deadline=None)
def test_canonical_center_interval(c, lam):
    m = canonical_center(c, lam)
    half = np.pi * lam / 2
    assert -half - 1e-9 * half < m <= half + 1e-9 * half
    # same point on the circle
    assert abs(np.sin((m - c) / lam)) < 1e-6 * max(1.0, abs(c) / lam)


def test_periodic_kernel_stores_canonical_center():
    k = PeriodicKernel(np.pi * 0.5 * 3, 1.0, 0.5)
    assert abs(k.center) <= np.pi * 0.5 / 2


# truncation regions ----------------------------------------------------------

def test_center_region_unconstrained():
    r = gaussian_center_region(np.array([0.3, 0.5]), np.array([3.0, 5.0]), np.array([1.0, 1.0]), 2.0, 0.01)
    assert r.intervals == ((-np.inf, np.inf),)


def test_center_region_closed_form():
    # u = e^-1 so -log u = 1; xi q = 2
    r = gaussian_center_region(np.array([0.3]), np.array([1.0]), np.array([1.0]), 2.0, 0.01)
    k = np.sqrt(0.02 * np.log(2))
    assert abs(k - 0.11774) < 5e-6
    (a, b), (c, d) = r.intervals
    assert a == -np.inf and d == np.inf
    assert abs(b - 0.18226) < 5e-6 and abs(c - 0.41774) < 5e-6
    twice = gaussian_center_region(np.array([0.3, 0.3]), np.array([1.0, 1.0]), np.array([1.0, 1.0]), 2.0, 0.01)
    assert twice == r


def test_center_region_never_empty():
    # finitely many bounded holes always leave both tails available
    x = np.linspace(-100, 100, 4001)
    r = gaussian_center_region(x, np.full(x.size, 1e-3), np.ones(x.size), 1.0, 1.0)
    assert not r.is_empty
    assert r.intervals[0][0] == -np.inf and r.intervals[-1][1] == np.inf


@given(hs.lists(hs.tuples(hs.floats(-1, 1), hs.floats(0.05, 3.0), hs.floats(0.1, 3.0)), min_size=1, max_size=5),
       hs.floats(0.1, 3.0), hs.floats(1e-3, 0.1))
@settings(max_examples=80, deadline=None)
def test_center_region_matches_grid_scan(rows, q, bw):
    x = np.array([r[0] for r in rows])
    nlu = np.array([r[1] for r in rows])
    xi = np.array([r[2] for r in rows])
    region = gaussian_center_region(x, nlu, xi, q, bw)
    grid = np.linspace(-3, 3, 3001)
    # u_i < exp(-xi q K(x_i | c))  <=>  -log u_i > xi q K
    K = np.exp(-0.5 * (x[:, None] - grid[None]) ** 2 / bw)
    margin = nlu[:, None] - xi[:, None] * q * K
    ok = np.all(margin > 0, axis=0)
    # ignore grid points sitting on a boundary within round-off
    clear = np.all(np.abs(margin) > 1e-9, axis=0)
    assert np.array_equal(region.contains(grid)[clear], ok[clear])


def test_gaussian_bandwidth_upper():
    assert gaussian_bandwidth_upper(np.array([0.0]), np.array([5.0]), np.array([1.0]), 2.0, 0.0) == np.inf
    v = gaussian_bandwidth_upper(np.array([0.1]), np.array([1.0]), np.array([1.0]), 2.0, 0.0)
    assert abs(v - 0.0072135) < 5e-7
    assert abs(v - (-0.01 / (2 * np.log(0.5)))) < 1e-15
    both = gaussian_bandwidth_upper(np.array([0.1, 0.5]), np.array([1.0, 1.0]), np.array([1.0, 1.0]), 2.0, 0.0)
    assert both == v


@given(hs.floats(-1, 1), hs.floats(0.05, 3.0), hs.floats(0.1, 3.0), hs.floats(0.1, 3.0), hs.floats(-1, 1))
@settings(max_examples=100, deadline=None)
def test_bandwidth_upper_is_exact_boundary(x, nlu, xi, q, c):
    ub = gaussian_bandwidth_upper(np.array([x]), np.array([nlu]), np.array([xi]), q, c)
    K = lambda s2: np.exp(-0.5 * (x - c) ** 2 / s2)
    if np.isinf(ub):
        assert nlu >= xi * q * K(1e12) - 1e-12
    elif ub > 1e-8:
        assert nlu > xi * q * K(ub * 0.999)
        assert nlu < xi * q * K(ub * 1.001) + 1e-12


def test_periodic_bandwidth_upper():
    lam = 0.4
    mu = 0.0
    t = np.pi * lam / 2
    assert periodic_bandwidth_upper(np.array([t]), np.array([5.0]), np.array([1.0]), 2.0, mu, lam) == np.inf
    v = periodic_bandwidth_upper(np.array([t]), np.array([1.0]), np.array([1.0]), 2.0, mu, lam)
    assert abs(v - 2.8854) < 5e-5
    assert abs(v - (-2 / np.log(0.5))) < 1e-12
    with pytest.raises(ValueError):
        periodic_bandwidth_upper(np.array([mu]), np.array([1.0]), np.array([1.0]), 2.0, mu, lam)
