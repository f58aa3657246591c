import numpy as np
import pytest

from artifact.gibbs import GroupedDataset, build_model, config_from_dict


def within_mcse(draws, expected, k=4.0):
    """Mean of iid draws agrees with `expected` to k standard errors."""
    draws = np.asarray(draws, dtype=float)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    return abs(draws.mean() - expected) <= k * se + 1e-12


def log_gamma(r, shape):
    """log of Gam(shape, 1) draws; log Gam(shape + 1) + log(U) / shape stays finite for tiny shapes."""
    shape = np.asarray(shape, dtype=float)
    return np.log(r.gamma(shape + 1.0)) + np.log(r.uniform(size=shape.shape)) / shape


def batch_means_se(x, batches=50):
    m = x[: len(x) // batches * batches].reshape(batches, -1).mean(axis=1)
    return m.std(axis=0, ddof=1) / np.sqrt(batches)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


def toy_nb_model(J=3, D=2, n=12, G=3, seed=0, **cfg):
    r = np.random.default_rng(seed)
    ys = [r.poisson(r.uniform(1, 8, size=G), size=(n, G)) + 1 for _ in range(D)]
    xs = [np.sort(r.uniform(0, 1, n)) for _ in range(D)]
    ds = GroupedDataset(ys, xs, counts=True)
    c = dict(likelihood="nb", kernel="gaussian", J=J)
    c.update(cfg)
    return build_model(ds, config_from_dict(c))


def toy_var_model(J=2, D=2, n=15, G=2, kernel="periodic", seed=0, **cfg):
    r = np.random.default_rng(seed)
    ys = [np.cumsum(r.normal(0, 0.3, size=(n, G)), axis=0) for _ in range(D)]
    if kernel == "categorical":
        xs = [r.integers(1, 4, size=n).astype(float) for _ in range(D)]
    else:
        xs = [np.linspace(0, 1, n) for _ in range(D)]
    ds = GroupedDataset(ys, xs, counts=False, lagged=True, categorical=kernel == "categorical")
    c = dict(likelihood="var", kernel=kernel, J=J)
    c.update(cfg)
    return build_model(ds, config_from_dict(c))
