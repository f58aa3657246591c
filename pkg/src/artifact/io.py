"""Dataset CSV schema, truth sidecars, partition files and run manifests."""

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .gibbs.data import GroupedDataset

MANIFEST_SCHEMA_VERSION = 1


class InputError(ValueError):
    """Malformed user input; the CLI maps it to exit code 2."""


def write_dataset(ds, path):
    G = ds.G
    cov = "covariate_level" if ds.categorical else "covariate"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group_id", "obs_index", cov] + [f"y_{g + 1}" for g in range(G)])
        for gid, idx, y, x in zip(ds.group_ids, ds.obs_index, ds.responses, ds.covariates):
            for i in range(y.shape[0]):
                xv = int(x[i]) if ds.categorical else repr(float(x[i]))
                vals = [int(v) for v in y[i]] if ds.counts else [repr(float(v)) for v in y[i]]
                w.writerow([gid, int(idx[i]), xv] + vals)


def read_dataset(path, likelihood="nb"):
    """Parse the dataset CSV; groups keep first-appearance order, rows sort by obs_index."""
    if not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["group_id", "obs_index"] or len(header) < 4:
        raise InputError(f"{path}: header must start with group_id, obs_index, covariate, y_1")
    if header[2] not in ("covariate", "covariate_level"):
        raise InputError(f"{path}: third column must be 'covariate' or 'covariate_level'")
    ycols = header[3:]
    if ycols != [f"y_{g + 1}" for g in range(len(ycols))]:
        raise InputError(f"{path}: response columns must be y_1..y_G in order")
    categorical = header[2] == "covariate_level"
    counts = likelihood == "nb"
    groups = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        try:
            gid = row[0].strip()
            idx = int(row[1])
            x = float(row[2])
            y = [float(v) for v in row[3:]]
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from exc
        if not np.all(np.isfinite(y)) or not np.isfinite(x):
            raise InputError(f"{path}:{line}: non-finite value")
        if counts and any(v < 0 or v != int(v) for v in y):
            raise InputError(f"{path}:{line}: counts must be nonnegative integers")
        if categorical and (x < 1 or x != int(x)):
            raise InputError(f"{path}:{line}: covariate_level must be an integer >= 1")
        groups.setdefault(gid, []).append((idx, x, y))
    if not groups:
        raise InputError(f"{path}: dataset has no observations")
    ids, resp, cov, obs = [], [], [], []
    for gid, items in groups.items():
        items.sort(key=lambda t: t[0])
        idx = [t[0] for t in items]
        if len(set(idx)) != len(idx):
            raise InputError(f"{path}: duplicate obs_index in group {gid}")
        ids.append(_maybe_int(gid))
        obs.append(np.array(idx))
        cov.append(np.array([t[1] for t in items]))
        resp.append(np.array([t[2] for t in items]))
    try:
        return GroupedDataset(resp, cov, counts=counts, lagged=likelihood == "var",
                              categorical=categorical, group_ids=ids, obs_index=obs)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _maybe_int(s):
    try:
        return int(s)
    except ValueError:
        return s


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_truth(truth, path, scenario, seed):
    blob = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "scenario": scenario,
        "seed": int(seed),
        "labels": truth.labels.tolist(),
        "group": truth.group.tolist(),
        "params": _jsonable(truth.params),
    }
    with open(path, "w") as fh:
        json.dump(blob, fh, indent=1)


def read_truth(path):
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported truth schema")
    return blob


def write_partition(labels, model_data, ds, path):
    """Single-column labels (1-based) with group and observation keys."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group_id", "obs_index", "label"])
        k = 0
        for d, (gid, idx) in enumerate(zip(ds.group_ids, ds.obs_index)):
            # lagged datasets have no label for their first observation
            skip = len(idx) - model_data.sizes[d]
            for i in idx[skip:]:
                w.writerow([gid, int(i), int(labels[k]) + 1])
                k += 1


def read_partition(path, n=None):
    """0-based labels from a partition CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "label" not in rows[0]:
        raise InputError(f"{path}: expected a 'label' column")
    try:
        labels = np.array([int(r["label"]) for r in rows]) - 1
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if n is not None and len(labels) != n:
        raise InputError(f"{path}: {len(labels)} labels for {n} observations")
    if labels.min() < 0:
        raise InputError(f"{path}: labels must be >= 1")
    return labels


def write_matrix(M, path):
    np.savetxt(path, np.asarray(M), delimiter=",", fmt="%.10g")


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


@dataclass
class RunManifest:
    command: str
    config_digest: str = None
    seeds: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)
    finished: float = None

    def add(self, path):
        self.artifacts.append(os.path.basename(path))
        return path

    def write(self, out_dir):
        self.finished = time.time()
        blob = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "command": self.command,
            "config_digest": self.config_digest,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "artifacts": sorted(set(self.artifacts)),
            "extra": _jsonable(self.extra),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(self.started)),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(self.finished)),
        }
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(blob, fh, indent=1)
        return path


def read_manifest(out_dir):
    path = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(path):
        raise InputError(f"{out_dir}: no manifest.json")
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported manifest schema")
    return blob
