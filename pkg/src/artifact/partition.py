"""Partition summaries: similarity matrices, VI/ARI, point estimates, consensus."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

log = logging.getLogger(__name__)

GREEDY_SWEEPS = 50
MAX_CANDIDATES = 200


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def relabel(labels):
    """Labels renumbered 0.. in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv.ravel()]


def _contingency(c1, c2):
    a, b = relabel(c1), relabel(c2)
    K, M = a.max() + 1, b.max() + 1
    return np.bincount(a * M + b, minlength=K * M).reshape(K, M)


def psm(draws):
    """Posterior similarity matrix from an (L, n) array of label draws."""
    Z = np.atleast_2d(np.asarray(draws))
    L, n = Z.shape
    out = np.zeros((n, n))
    for z in Z:
        out += z[:, None] == z[None, :]
    return out / L


def variation_of_information(c1, c2, normalized=False):
    """VI in nats; `normalized` divides by log n."""
    N = _contingency(c1, c2)
    n = N.sum()
    vi = (_xlogx(N.sum(1)).sum() + _xlogx(N.sum(0)).sum() - 2.0 * _xlogx(N).sum()) / n
    vi = max(float(vi), 0.0)
    if normalized:
        return vi / np.log(n) if n > 1 else 0.0
    return vi


def adjusted_rand_index(c1, c2):
    N = _contingency(c1, c2)
    n = N.sum()
    s = comb(N, 2).sum()
    a = comb(N.sum(1), 2).sum()
    b = comb(N.sum(0), 2).sum()
    total = comb(n, 2)
    expected = a * b / total if total > 0 else 0.0
    top = 0.5 * (a + b)
    if top == expected:
        return 1.0
    return float((s - expected) / (top - expected))


# VI-optimal point estimate --------------------------------------------------

def expected_vi(c, draws):
    """Monte-Carlo posterior expected VI of partition c against label draws."""
    Z = np.atleast_2d(np.asarray(draws))
    c = relabel(c)
    L, n = Z.shape
    K = c.max() + 1
    zs = np.vstack([relabel(z) for z in Z])
    M = zs.max() + 1
    idx = (np.arange(L)[:, None] * K + c[None, :]) * M + zs
    joint = np.bincount(idx.ravel(), minlength=L * K * M)
    own = np.bincount(zs.ravel() + M * np.repeat(np.arange(L), n), minlength=L * M)
    term = _xlogx(np.bincount(c)).sum() + _xlogx(own).sum() / L - 2.0 * _xlogx(joint).sum() / L
    return max(float(term / n), 0.0)


class _GreedyVi:
    """Incremental expected-VI bookkeeping for single-point moves."""

    def __init__(self, c, zs):
        self.zs = zs
        self.L, self.n = zs.shape
        self.M = zs.max() + 1
        self.c = relabel(c).copy()
        # room for a handful of new clusters; more are rarely useful
        self.cap = min(self.n + 1, self.c.max() + 11)
        self.sizes = np.bincount(self.c, minlength=self.cap).astype(float)
        self.cross = np.zeros((self.L, self.cap, self.M))
        np.add.at(self.cross, (np.repeat(np.arange(self.L), self.n), np.tile(self.c, self.L), zs.ravel()), 1.0)
        self.rows = np.arange(self.L)

    def move_costs(self, i):
        """Cost of placing point i (already removed) into each label."""
        m = self.zs[:, i]
        sz = self.sizes
        d_own = _xlogx(sz + 1.0) - _xlogx(sz)
        col = self.cross[self.rows, :, m]
        d_cross = (_xlogx(col + 1.0) - _xlogx(col)).mean(axis=0)
        return d_own - 2.0 * d_cross

    def remove(self, i):
        a = self.c[i]
        self.sizes[a] -= 1
        self.cross[self.rows, a, self.zs[:, i]] -= 1
        return a

    def add(self, i, b):
        self.c[i] = b
        self.sizes[b] += 1
        self.cross[self.rows, b, self.zs[:, i]] += 1

    def sweep(self):
        changed = False
        for i in range(self.n):
            a = self.remove(i)
            cost = self.move_costs(i)
            used = self.sizes > 0
            empty = np.flatnonzero(~used)
            cand = np.flatnonzero(used)
            if empty.size:
                cand = np.append(cand, empty[0])
            best = cand[np.argmin(cost[cand])]
            if cost[best] < cost[a] - 1e-12:
                self.add(i, best)
                changed = True
            else:
                self.add(i, a)
        return changed

    def try_merges(self):
        """Merge the pair of clusters that lowers the expected VI most, if any."""
        labels = np.flatnonzero(self.sizes > 0)
        best, best_gain = None, 1e-12
        base = expected_vi(self.c, self.zs)
        for x in range(len(labels)):
            for y in range(x + 1, len(labels)):
                trial = np.where(self.c == labels[y], labels[x], self.c)
                v = expected_vi(trial, self.zs)
                if base - v > best_gain:
                    best, best_gain = trial, base - v
        if best is None:
            return False
        self.__init__(best, self.zs)
        return True


def _greedy(c, zs, sweeps=GREEDY_SWEEPS):
    g = _GreedyVi(c, zs)
    for _ in range(sweeps):
        moved = g.sweep()
        merged = g.try_merges() if len(np.unique(g.c)) <= 30 else False
        if not moved and not merged:
            break
    return relabel(g.c)


def minimize_expected_vi(draws, psm_matrix=None, n_starts=3):
    """Partition minimizing posterior expected VI.

    Candidates are the sampled partitions plus greedy single-point
    relabelings started from the best few; ties go to fewer clusters and
    then to the first candidate seen. `psm_matrix` is accepted for API
    symmetry and only used to seed one extra start.
    """
    Z = np.atleast_2d(np.asarray(draws))
    zs = np.vstack([relabel(z) for z in Z])
    uniq, first = np.unique(zs, axis=0, return_index=True)
    uniq = uniq[np.argsort(first)]
    if len(uniq) > MAX_CANDIDATES:
        pick = np.linspace(0, len(uniq) - 1, MAX_CANDIDATES).round().astype(int)
        uniq = uniq[pick]
    cands = [u for u in uniq]
    scores = [expected_vi(u, zs) for u in cands]
    order = np.argsort(scores, kind="stable")
    starts = [cands[k] for k in order[:n_starts]]
    if psm_matrix is not None:
        starts.append(_psm_seed(psm_matrix))
    for s in starts:
        g = _greedy(s, zs)
        cands.append(g)
        scores.append(expected_vi(g, zs))
    key = [(round(s, 12), len(np.unique(c)), k) for k, (s, c) in enumerate(zip(scores, cands))]
    return relabel(cands[min(range(len(cands)), key=lambda k: key[k])])


def _psm_seed(P):
    """Threshold the PSM at 1/2 and take connected groups greedily."""
    n = P.shape[0]
    lab = -np.ones(n, dtype=int)
    k = 0
    for i in range(n):
        if lab[i] < 0:
            lab[(P[i] > 0.5) & (lab < 0)] = k
            lab[i] = k
            k += 1
    return lab


# consensus clustering -------------------------------------------------------

@dataclass
class ConsensusResult:
    psm: np.ndarray
    partition: np.ndarray
    draws: np.ndarray
    mad_depth: list
    mad_width: list


def mean_absolute_difference(P1, P2):
    return float(np.mean(np.abs(np.asarray(P1) - np.asarray(P2))))


def mad_curve(psms):
    """MAD between successive matrices of a list."""
    return [mean_absolute_difference(a, b) for a, b in zip(psms[:-1], psms[1:])]


def _consensus_chain(args):
    from .gibbs.sweep import run_chain

    model, cfg, seed, chain, D = args
    tr = run_chain(model, cfg, seed, chain=chain, monitor={"z"}, iterations=D, burn_in=0, thin=1)
    return tr["z"]


def consensus(model, cfg, W, D, seed, depth_grid=None, width_grid=None, threads=1, chain_ids=None):
    """Final draws of W short chains of depth D, their PSM and VI point estimate.

    MAD curves compare successive PSMs along the depth grid (all W chains)
    and along the width grid (depth D).
    """
    if W < 2 or D < 1:
        raise ValueError("consensus needs W >= 2 and D >= 1")
    chain_ids = list(range(W)) if chain_ids is None else list(chain_ids)
    jobs = [(model, cfg, seed, c, D) for c in chain_ids]
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            paths = list(pool.map(_consensus_chain, jobs))
    else:
        paths = [_consensus_chain(j) for j in jobs]
    paths = np.stack(paths)  # (W, D, n)
    final = paths[:, -1]
    P = psm(final)
    depth_grid = sorted(depth_grid or [])
    width_grid = sorted(width_grid or [])
    mad_depth = mad_curve([psm(paths[:, d - 1]) for d in depth_grid if 1 <= d <= D])
    mad_width = mad_curve([psm(final[:w]) for w in width_grid if 1 <= w <= W])
    return ConsensusResult(P, minimize_expected_vi(final, P), final, mad_depth, mad_width)


def posterior_allocation_probability(trace, model):
    """Average over stored draws of the allocation conditionals, shape (n, J)."""
    from .gibbs.state import state_from_draw
    from .gibbs.updates import allocation_log_probs

    out = np.zeros((model.data.n, model.J))
    L = len(trace)
    for i in range(L):
        out += np.exp(allocation_log_probs(state_from_draw(trace.draw(i), model), model))
    return out / max(L, 1)
