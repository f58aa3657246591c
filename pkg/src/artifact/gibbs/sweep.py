"""Gibbs sweeps and chain drivers."""

import logging

import numpy as np

from ..stochastic import RngStream
from . import updates as up
from .state import NumericalFailure, build_model, initialize
from .trace import Trace, snapshot

log = logging.getLogger(__name__)

BLOCKS = {
    "q": up.update_q,
    "xi": up.update_xi,
    "u": up.update_u,
    "kernel": up.update_kernel,
    "alpha": up.update_alpha,
    "alpha0": up.update_alpha0,
    "z": up.update_allocations,
    "p": up.update_top_weights,
    "link": up.update_link,
    "atoms": up.update_atoms,
    "capture": up.update_capture,
    "hyper": up.update_hyperparams,
}
NB_ONLY = {"link", "capture"}


def _finite(state):
    arrays = [state.log_q, state.log_p, state.xi, state.neg_log_u, [state.alpha, state.alpha0]]
    arrays += [v for v in (state.mu, state.phi, state.beta, state.L, state.Sigma) if v is not None]
    return all(np.all(np.isfinite(a)) for a in arrays)


def gibbs_sweep(state, model, rng, skip=()):
    """One full sweep in configured order; failures are tagged with their block."""
    for name in model.cfg.order:
        if name in skip or (name in NB_ONLY and not model.data.counts):
            continue
        try:
            with np.errstate(over="ignore", under="ignore"):
                BLOCKS[name](state, model, rng)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise NumericalFailure(name, str(exc)) from exc
        if not _finite(state):
            raise NumericalFailure(name, "non-finite parameter values")
    state.sweeps += 1
    return state


def _as_model(data, cfg):
    return data if hasattr(data, "cfg") else build_model(data, cfg)


def _run(model, seed, chain, partition, fixed, monitor, iterations, burn_in, thin):
    cfg = model.cfg
    iterations = cfg.mcmc.iterations if iterations is None else iterations
    burn_in = cfg.mcmc.burn_in if burn_in is None else burn_in
    thin = cfg.mcmc.thin if thin is None else thin
    stream = RngStream(seed, (chain,))
    state = initialize(model, stream.child(0).generator(), partition=partition)
    trace = Trace(cfg.kernel, cfg.likelihood, meta={
        "seed": int(seed), "chain": int(chain), "iterations": int(iterations),
        "burn_in": int(burn_in), "thin": int(thin), "fixed_partition": bool(fixed),
        "config_digest": cfg.digest(), "J": model.J, "D": model.data.D,
    })
    skip = ("z",) if fixed else ()
    for it in range(1, iterations + 1):
        gibbs_sweep(state, model, stream.child(it).generator(), skip=skip)
        if it > burn_in and (it - burn_in) % thin == 0:
            trace.append(it, snapshot(state, monitor))
    trace.acceptance = {k: float(np.mean(v)) for k, v in state.accept.items()}
    trace.finalize()
    return trace, state


def run_chain(data, cfg, seed, chain=0, monitor=None, iterations=None, burn_in=None, thin=None,
              partition=None, return_state=False):
    """Run one chain from its own stream; `data` is a dataset or a built model."""
    model = _as_model(data, cfg)
    trace, state = _run(model, seed, chain, partition, False, monitor, iterations, burn_in, thin)
    return (trace, state) if return_state else trace


def run_postprocessing_chain(data, cfg, fixed_partition, seed, chain=0, monitor=None,
                             iterations=None, burn_in=None, thin=None):
    """Same chain with allocations held at `fixed_partition` (0-based labels)."""
    model = _as_model(data, cfg)
    z = np.asarray(fixed_partition, dtype=int)
    if z.shape != (model.data.n,):
        raise ValueError("fixed partition length does not match the data")
    if z.min() < 0 or z.max() >= model.J:
        raise ValueError("partition labels must lie in 0..J-1")
    trace, _ = _run(model, seed, chain, z, True, monitor, iterations, burn_in, thin)
    return trace
