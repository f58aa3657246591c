"""Command-line interface: chdp <command> [options].

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io, partition, posterior, report, simgen
from .gibbs import ConfigError, ModelConfig, NumericalFailure, Trace, build_model, dump_config, load_config
from .gibbs.sweep import run_chain, run_postprocessing_chain
from .stochastic import RngStream

log = logging.getLogger("artifact")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _setup_logging():
    level = os.environ.get("CHDP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def _config(args):
    cfg = load_config(args.config) if args.config else ModelConfig()
    if args.truncation is not None:
        cfg = cfg.replace(J=args.truncation)
    return cfg


def _out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _path(out, name, manifest):
    return manifest.add(os.path.join(out, name))


def _seed(args, cfg=None):
    if args.seed is not None:
        return args.seed
    return cfg.seed if cfg is not None else 0


# commands ---------------------------------------------------------------------

def cmd_simulate(args):
    out = _out(args)
    seed = _seed(args)
    ds, truth = simgen.simulate(simgen.SimSpec(args.scenario, seed=seed))
    man = io.RunManifest("simulate", seeds=[seed], extra={"scenario": args.scenario})
    io.write_dataset(ds, _path(out, "data.csv", man))
    io.write_truth(truth, _path(out, "truth.json", man), args.scenario, seed)
    grid = np.linspace(0, 1, 101)
    rows = []
    for d in range(ds.D):
        w = truth.weights(grid, d)
        for j in range(w.shape[0]):
            rows += [(d + 1, j + 1, t, v) for t, v in zip(grid, w[j])]
    io.write_table(_path(out, "true_weights.csv", man), ["group", "component", "covariate", "probability"], rows)
    man.write(out)
    return EXIT_OK


def _load_inputs(args):
    cfg = _config(args)
    ds = io.read_dataset(args.data, cfg.likelihood)
    return cfg, ds, build_model(ds, cfg)


def _save_run_inputs(out, args, cfg, man):
    dump_config(cfg, _path(out, "config.yaml", man))
    man.config_digest = cfg.digest()
    man.inputs = {"data": os.path.abspath(args.data)}


def _write_trace(trace, out, man, stem):
    trace.save(_path(out, f"{stem}.npz", man))
    trace.write_scalars(_path(out, f"{stem}_scalars.csv", man))
    with open(_path(out, f"{stem}_acceptance.json", man), "w") as fh:
        json.dump(trace.acceptance, fh, indent=1, sort_keys=True)
    if len(trace):
        report.trace_plots(trace, _path(out, f"{stem}_trace.svg", man))


def _chains(args, fn):
    n = args.chains
    if args.threads > 1 and n > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(min(args.threads, n)) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(c) for c in range(n)]


class _FitChain:
    def __init__(self, model, cfg, seed):
        self.model, self.cfg, self.seed = model, cfg, seed

    def __call__(self, c):
        return run_chain(self.model, self.cfg, self.seed, chain=c)


class _PostChain(_FitChain):
    def __init__(self, model, cfg, seed, z):
        super().__init__(model, cfg, seed)
        self.z = z

    def __call__(self, c):
        return run_postprocessing_chain(self.model, self.cfg, self.z, self.seed, chain=c)


def cmd_fit(args):
    cfg, ds, model = _load_inputs(args)
    out = _out(args)
    seed = _seed(args, cfg)
    man = io.RunManifest("fit", seeds=[seed])
    _save_run_inputs(out, args, cfg, man)
    traces = _chains(args, _FitChain(model, cfg, seed))
    for c, tr in enumerate(traces):
        _write_trace(tr, out, man, f"trace_chain{c}")
    man.extra = {"chains": len(traces), "kind": "fit"}
    man.write(out)
    return EXIT_OK


def cmd_postprocess(args):
    cfg, ds, model = _load_inputs(args)
    out = _out(args)
    seed = _seed(args, cfg)
    z = io.read_partition(args.partition, model.data.n)
    if z.max() >= model.J:
        raise io.InputError(f"{args.partition}: labels exceed the truncation level J={model.J}")
    man = io.RunManifest("postprocess", seeds=[seed])
    _save_run_inputs(out, args, cfg, man)
    man.inputs["partition"] = os.path.abspath(args.partition)
    traces = _chains(args, _PostChain(model, cfg, seed, z))
    for c, tr in enumerate(traces):
        _write_trace(tr, out, man, f"trace_chain{c}")
    man.extra = {"chains": len(traces), "kind": "postprocess"}
    man.write(out)
    return EXIT_OK


def _grid(spec):
    try:
        return sorted({int(v) for v in spec.split(",") if v.strip()})
    except ValueError as exc:
        raise io.InputError(f"grid must be comma-separated integers: {spec!r}") from exc


def cmd_consensus(args):
    cfg, ds, model = _load_inputs(args)
    out = _out(args)
    seed = _seed(args, cfg)
    man = io.RunManifest("consensus", seeds=[seed])
    _save_run_inputs(out, args, cfg, man)
    dg, wg = _grid(args.depth_grid), _grid(args.width_grid)
    res = partition.consensus(model, cfg, args.width, args.depth, seed, depth_grid=dg, width_grid=wg,
                              threads=args.threads)
    io.write_matrix(res.psm, _path(out, "psm.csv", man))
    io.write_partition(res.partition, model.data, ds, _path(out, "partition.csv", man))
    io.write_table(_path(out, "mad_depth.csv", man), ["depth", "mad"], list(zip(dg[1:], res.mad_depth)))
    io.write_table(_path(out, "mad_width.csv", man), ["width", "mad"], list(zip(wg[1:], res.mad_width)))
    report.mad_curves(dg, res.mad_depth, wg, res.mad_width, _path(out, "mad.svg", man))
    report.psm_heatmap(res.psm, _path(out, "psm.svg", man))
    man.extra = {"W": args.width, "D": args.depth, "clusters": int(res.partition.max() + 1)}
    man.write(out)
    return EXIT_OK


def _load_run(trace_dir):
    """Model and concatenated trace of a fit or postprocess directory."""
    blob = io.read_manifest(trace_dir)
    cfg = load_config(os.path.join(trace_dir, "config.yaml"))
    ds = io.read_dataset(blob["inputs"]["data"], cfg.likelihood)
    model = build_model(ds, cfg)
    names = sorted(a for a in blob["artifacts"] if a.startswith("trace_chain") and a.endswith(".npz"))
    if not names:
        raise io.InputError(f"{trace_dir}: no trace files listed in the manifest")
    traces = [Trace.load(os.path.join(trace_dir, a)) for a in names]
    tr = traces[0]
    for other in traces[1:]:
        for k in tr.draws:
            tr.draws[k] = np.concatenate([tr.draws[k], other.draws[k]])
        tr.iterations += other.iterations
    if not len(tr):
        raise io.InputError(f"{trace_dir}: trace holds no stored draws")
    return blob, cfg, ds, model, tr


def cmd_summarize(args):
    blob, cfg, ds, model, tr = _load_run(args.trace_dir)
    out = _out(args)
    man = io.RunManifest("summarize", config_digest=cfg.digest(), inputs={"trace_dir": os.path.abspath(args.trace_dir)})
    Z = tr["z"]
    P = partition.psm(Z)
    point = partition.minimize_expected_vi(Z, P)
    io.write_matrix(P, _path(out, "psm.csv", man))
    io.write_partition(point, model.data, ds, _path(out, "partition.csv", man))
    alloc = partition.posterior_allocation_probability(tr, model)
    io.write_table(_path(out, "allocation_probabilities.csv", man),
                   ["row"] + [f"component_{j + 1}" for j in range(model.J)],
                   [[i + 1] + list(r) for i, r in enumerate(alloc)])
    summary = {"clusters": int(point.max() + 1), "expected_vi": partition.expected_vi(point, Z)}
    if args.truth:
        truth = io.read_truth(args.truth)
        labels = np.asarray(truth["labels"])
        summary["ari"] = partition.adjusted_rand_index(labels, point)
        summary["vi"] = partition.variation_of_information(labels, point)
        summary["vi_normalized"] = partition.variation_of_information(labels, point, normalized=True)
    with open(_path(out, "summary.json", man), "w") as fh:
        json.dump(summary, fh, indent=1)
    report.psm_heatmap(P, _path(out, "psm.svg", man))
    man.extra = summary
    man.write(out)
    return EXIT_OK


def cmd_predict(args):
    blob, cfg, ds, model, tr = _load_run(args.trace_dir)
    out = _out(args)
    man = io.RunManifest("predict", config_digest=cfg.digest(), inputs={"trace_dir": os.path.abspath(args.trace_dir)})
    d = model.data
    curves, rows, mean_rows = [], [], []
    for g, sl in enumerate(d.group_slices()):
        grid = posterior.default_grid(d.x[sl], args.grid_points)
        if model.cfg.kernel == "categorical":
            grid = np.arange(1, d.levels + 1, dtype=float)
        c = posterior.probability_curves(tr, g, grid)
        curves.append(c)
        for j in range(c.mean.shape[0]):
            rows += [(g + 1, j + 1, t, m, lo, hi) for t, m, lo, hi in zip(grid, c.mean[j], c.lower[j], c.upper[j])]
        if d.counts or model.cfg.likelihood == "gaussian":
            for t in grid:
                mean_rows.append([g + 1, t] + list(posterior.predictive_mean(tr, g, t)))
    io.write_table(_path(out, "probability_curves.csv", man),
                   ["group", "component", "covariate", "mean", "hpd_lower", "hpd_upper"], rows)
    occupied = np.unique(tr["z"])
    report.probability_curves(curves, _path(out, "probability_curves.svg", man), components=occupied)
    if mean_rows:
        io.write_table(_path(out, "predictive_mean.csv", man),
                       ["group", "covariate"] + [f"y_{k + 1}" for k in range(d.G)], mean_rows)
    if d.counts:
        lat = posterior.latent_count_mean(tr, model)
        io.write_table(_path(out, "latent_counts.csv", man), ["group", "row", "covariate"] + [f"y_{k + 1}" for k in range(d.G)],
                       [[d.group[i] + 1, i + 1, d.x[i]] + list(lat[i]) for i in range(d.n)])
        report.latent_counts(d.x, lat, d.group, _path(out, "latent_counts.svg", man))
    man.write(out)
    return EXIT_OK


def cmd_markers(args):
    blob, cfg, ds, model, tr = _load_run(args.trace_dir)
    if not model.data.counts:
        raise io.InputError("marker detection needs a negative binomial fit")
    out = _out(args)
    man = io.RunManifest("markers", config_digest=cfg.digest(), inputs={"trace_dir": os.path.abspath(args.trace_dir)})
    mk = posterior.marker_tail_probabilities(tr, args.tau0, args.omega0)
    summary = {"components": mk.components.tolist(), "diagnostic": mk.diagnostic}
    if not mk.diagnostic:
        de, a_m = posterior.flag_markers(mk.global_mean, args.efdr)
        dd, a_d = posterior.flag_markers(mk.global_dispersion, args.efdr)
        G = len(de)
        io.write_table(_path(out, "global_markers.csv", man),
                       ["gene", "tail_prob_mean", "tail_prob_dispersion", "abs_lfc_mean", "abs_lfc_dispersion", "de", "dd"],
                       [[g + 1, mk.global_mean[g], mk.global_dispersion[g], mk.mean_abs_lfc_mean[g],
                         mk.mean_abs_lfc_dispersion[g], int(de[g]), int(dd[g])] for g in range(G)])
        rows = []
        for k, j in enumerate(mk.components):
            lde, _ = posterior.flag_markers(mk.local_mean[k], args.efdr)
            ldd, _ = posterior.flag_markers(mk.local_dispersion[k], args.efdr)
            rows += [[j + 1, g + 1, mk.local_mean[k, g], mk.local_dispersion[k, g], int(lde[g]), int(ldd[g])]
                     for g in range(G)]
        io.write_table(_path(out, "local_markers.csv", man),
                       ["component", "gene", "tail_prob_mean", "tail_prob_dispersion", "de", "dd"], rows)
        summary.update(threshold_mean=a_m, threshold_dispersion=a_d, n_de=int(de.sum()), n_dd=int(dd.sum()))
    with open(_path(out, "markers.json", man), "w") as fh:
        json.dump(summary, fh, indent=1)
    man.extra = summary
    man.write(out)
    return EXIT_OK


def cmd_ppc(args):
    blob, cfg, ds, model, tr = _load_run(args.trace_dir)
    out = _out(args)
    seed = _seed(args, cfg)
    man = io.RunManifest("ppc", config_digest=cfg.digest(), seeds=[seed],
                         inputs={"trace_dir": os.path.abspath(args.trace_dir)})
    reps = posterior.ppc_replicates(tr, model, args.replicates, RngStream(seed, (7,)).generator())
    y = model.data.y
    obs = posterior.ppc_statistics(y)
    rep = posterior.ppc_statistics(reps)
    rows = []
    for g in range(y.shape[1]):
        row = [g + 1]
        for k in posterior.PPC_STATS:
            lo, hi = np.quantile(rep[k][:, g], [0.005, 0.995]) if len(reps) else (np.nan, np.nan)
            row += [obs[k][g], lo, hi]
        rows.append(row)
    header = ["gene"] + [f"{k}{s}" for k in posterior.PPC_STATS for s in ("", "_lo", "_hi")]
    io.write_table(_path(out, "ppc_statistics.csv", man), header, rows)
    summary = {"replicates": int(args.replicates)}
    if len(reps):
        cov, inside = posterior.ppc_coverage(y, reps)
        summary["coverage"] = cov
        summary.update({f"coverage_{k}": float(v.mean()) for k, v in inside.items()})
        report.ppc_bands(obs, rep, _path(out, "ppc.svg", man))
    with open(_path(out, "ppc_summary.json", man), "w") as fh:
        json.dump(summary, fh, indent=1)
    man.extra = summary
    man.write(out)
    return EXIT_OK


# parser -------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config seed)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for parallel chains")
    common.add_argument("--config", default=None, help="YAML run configuration")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--truncation", type=int, default=None, help="override the truncation level J")

    p = argparse.ArgumentParser(prog="chdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario")
    s.add_argument("--scenario", choices=simgen.SCENARIOS, required=True)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("fit", parents=[common], help="run full MCMC chains")
    s.add_argument("--data", required=True)
    s.add_argument("--chains", type=int, default=1)
    s.set_defaults(fn=cmd_fit)

    s = sub.add_parser("consensus", parents=[common], help="consensus clustering from short chains")
    s.add_argument("--data", required=True)
    s.add_argument("--width", type=int, default=100, help="number of chains W")
    s.add_argument("--depth", type=int, default=200, help="sweeps per chain D")
    s.add_argument("--depth-grid", default="", help="comma-separated depths for MAD curves")
    s.add_argument("--width-grid", default="", help="comma-separated widths for MAD curves")
    s.set_defaults(fn=cmd_consensus)

    s = sub.add_parser("postprocess", parents=[common], help="MCMC with allocations fixed")
    s.add_argument("--data", required=True)
    s.add_argument("--partition", required=True)
    s.add_argument("--chains", type=int, default=1)
    s.set_defaults(fn=cmd_postprocess)

    s = sub.add_parser("summarize", parents=[common], help="PSM, point partition, allocation probabilities")
    s.add_argument("--trace-dir", required=True)
    s.add_argument("--truth", default=None)
    s.set_defaults(fn=cmd_summarize)

    s = sub.add_parser("predict", parents=[common], help="probability curves, predictive means, latent counts")
    s.add_argument("--trace-dir", required=True)
    s.add_argument("--grid-points", type=int, default=posterior.GRID_POINTS)
    s.set_defaults(fn=cmd_predict)

    s = sub.add_parser("markers", parents=[common], help="marker genes by tail probabilities")
    s.add_argument("--trace-dir", required=True)
    s.add_argument("--tau0", type=float, default=2.5)
    s.add_argument("--omega0", type=float, default=2.5)
    s.add_argument("--efdr", type=float, default=0.05)
    s.set_defaults(fn=cmd_markers)

    s = sub.add_parser("ppc", parents=[common], help="posterior predictive checks")
    s.add_argument("--trace-dir", required=True)
    s.add_argument("--replicates", "-R", type=int, default=100)
    s.set_defaults(fn=cmd_ppc)
    return p


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except NumericalFailure as exc:
        print(f"chdp: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, io.InputError, FileNotFoundError, ValueError) as exc:
        print(f"chdp: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
