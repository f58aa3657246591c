"""Grouped datasets and the flattened view the sampler works on."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


@dataclass
class GroupedDataset:
    """D groups of responses with one covariate per observation.

    responses[d]: (n_d, G) counts or reals; covariates[d]: (n_d,) reals or
    1-based levels. With `lagged`, the first row of each group only serves
    as the lag input of the second.
    """

    responses: list
    covariates: list
    counts: bool = True
    lagged: bool = False
    categorical: bool = False
    group_ids: list = None
    obs_index: list = None

    def __post_init__(self):
        self.responses = [np.atleast_2d(np.asarray(r, dtype=float)) for r in self.responses]
        self.covariates = [np.asarray(c, dtype=float).ravel() for c in self.covariates]
        if not self.responses:
            raise ValueError("dataset has no groups")
        if len(self.responses) != len(self.covariates):
            raise ValueError("responses and covariates disagree on group count")
        G = self.responses[0].shape[1]
        for r, c in zip(self.responses, self.covariates):
            if r.shape[1] != G:
                raise ValueError("groups disagree on response dimension")
            if r.shape[0] != c.shape[0]:
                raise ValueError("covariate length does not match responses")
            if r.shape[0] == 0:
                raise ValueError("empty group")
            if not np.all(np.isfinite(c)) or not np.all(np.isfinite(r)):
                raise ValueError("non-finite values in dataset")
            if self.counts and (np.any(r < 0) or np.any(r != np.round(r))):
                raise ValueError("counts must be nonnegative integers")
            if self.categorical and (np.any(c < 1) or np.any(c != np.round(c))):
                raise ValueError("covariate levels must be integers >= 1")
        if self.group_ids is None:
            self.group_ids = list(range(1, len(self.responses) + 1))
        if self.obs_index is None:
            self.obs_index = [np.arange(1, r.shape[0] + 1) for r in self.responses]

    @property
    def D(self):
        return len(self.responses)

    @property
    def G(self):
        return self.responses[0].shape[1]

    @property
    def sizes(self):
        return [r.shape[0] for r in self.responses]


@dataclass
class ModelData:
    """Allocated observations stacked by group, with cached helpers."""

    y: np.ndarray
    x: np.ndarray
    group: np.ndarray
    D: int
    design: np.ndarray = None
    counts: bool = True
    levels: int = 0
    starts: np.ndarray = field(default=None, repr=False)
    log_y_fact: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.group = np.asarray(self.group, dtype=int)
        sizes = np.bincount(self.group, minlength=self.D)
        if np.any(np.diff(self.group) < 0):
            raise ValueError("observations must be sorted by group")
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.sizes = sizes
        if self.counts:
            self.log_y_fact = gammaln(self.y + 1.0)
        if self.levels:
            self.x_level = self.x.astype(int)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def G(self):
        return self.y.shape[1]

    def group_slices(self):
        return [slice(s, s + m) for s, m in zip(self.starts, self.sizes)]

    @classmethod
    def from_dataset(cls, ds, likelihood="nb"):
        ys, xs, gs, designs = [], [], [], []
        for d, (r, c) in enumerate(zip(ds.responses, ds.covariates)):
            if likelihood == "var":
                if r.shape[0] < 2:
                    raise ValueError("VAR groups need at least two observations")
                ys.append(r[1:])
                xs.append(c[1:])
                designs.append(np.hstack([np.ones((r.shape[0] - 1, 1)), r[:-1]]))
            else:
                ys.append(r)
                xs.append(c)
                designs.append(np.ones((r.shape[0], 1)))
            gs.append(np.full(ys[-1].shape[0], d))
        levels = int(max(c.max() for c in ds.covariates)) if ds.categorical else 0
        return cls(
            y=np.vstack(ys),
            x=np.concatenate(xs),
            group=np.concatenate(gs),
            D=ds.D,
            design=np.vstack(designs),
            counts=likelihood == "nb",
            levels=levels,
        )
