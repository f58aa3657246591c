"""Stored MCMC draws plus their on-disk container."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

TRACE_SCHEMA_VERSION = 1
SCALAR_BLOCKS = ("alpha", "alpha0", "s2", "m2", "alpha_phi2")


def snapshot(state, monitor=None):
    """Copy the monitored blocks of a chain state into plain arrays."""
    k = state.kernel
    out = {
        "z": state.z,
        "log_p": state.log_p,
        "log_q": state.log_q,
        "alpha": state.alpha,
        "alpha0": state.alpha0,
    }
    if k.family == "categorical":
        out["probs"] = k.probs
    else:
        out["center"] = k.center
        out["bandwidth"] = k.bandwidth
        out["r"], out["s2"], out["h"], out["m2"] = state.r, state.s2, state.h, state.m2
        if k.family == "periodic":
            out["period"] = k.period
    if state.mu is not None:
        out.update(mu=state.mu, phi=state.phi, beta=state.beta, b=state.b, alpha_phi2=state.alpha_phi2)
    if state.L is not None:
        out.update(L=state.L, Sigma=state.Sigma)
    if monitor is not None:
        out = {key: v for key, v in out.items() if key in monitor}
    return {key: np.array(v, dtype=float if key != "z" else int, copy=True) for key, v in out.items()}


@dataclass
class Trace:
    kernel: str
    likelihood: str
    draws: dict = field(default_factory=dict)
    iterations: list = field(default_factory=list)
    acceptance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def append(self, it, snap):
        self.iterations.append(int(it))
        for key, v in snap.items():
            self.draws.setdefault(key, []).append(v)

    def finalize(self):
        self.draws = {k: np.stack(v) if isinstance(v, list) else v for k, v in self.draws.items()}
        return self

    def __len__(self):
        return len(self.iterations)

    def __getitem__(self, key):
        return np.asarray(self.draws[key]) if not isinstance(self.draws[key], list) else np.stack(self.draws[key])

    def __contains__(self, key):
        return key in self.draws

    @property
    def J(self):
        return self["log_p"].shape[-1]

    def draw(self, i):
        return {k: self[k][i] for k in self.draws}

    def save(self, path):
        self.finalize()
        header = {
            "schema_version": TRACE_SCHEMA_VERSION,
            "kernel": self.kernel,
            "likelihood": self.likelihood,
            "acceptance": self.acceptance,
            "meta": self.meta,
        }
        arrays = {f"draw_{k}": v for k, v in self.draws.items()}
        np.savez_compressed(path, header=np.array(json.dumps(header)),
                            iterations=np.asarray(self.iterations, dtype=int), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as f:
            header = json.loads(str(f["header"]))
            if header.get("schema_version") != TRACE_SCHEMA_VERSION:
                raise ValueError(f"{path}: unsupported trace schema {header.get('schema_version')}")
            draws = {k[5:]: f[k] for k in f.files if k.startswith("draw_")}
            its = f["iterations"].tolist()
        return cls(header["kernel"], header["likelihood"], draws, its, header["acceptance"], header["meta"])

    def write_scalars(self, path):
        keys = [k for k in SCALAR_BLOCKS if k in self.draws]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "block", "value"])
            for k in keys:
                for it, v in zip(self.iterations, self[k]):
                    w.writerow([it, k, repr(float(v))])
