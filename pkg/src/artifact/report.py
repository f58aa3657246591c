"""SVG figures written beside the CSV outputs."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "chdp",
    "svg.fonttype": "none",
    "path.simplify": True,
}


def _figure(ncols=1, nrows=1, width=6.0):
    plt.rcParams.update(STYLE)
    return plt.subplots(nrows, ncols, figsize=(width, width * GOLDEN * nrows / max(ncols, 1) + 0.6),
                        squeeze=False)


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def probability_curves(curves, path, components=None, truth=None):
    """One panel per group with mean curve and HPD band per component."""
    fig, axes = _figure(ncols=len(curves), width=4.0 * len(curves))
    for d, (ax, c) in enumerate(zip(axes[0], curves)):
        comps = range(c.mean.shape[0]) if components is None else components
        for j in comps:
            line, = ax.plot(c.grid, c.mean[j], lw=1.2, label=f"component {j + 1}")
            ax.fill_between(c.grid, c.lower[j], c.upper[j], color=line.get_color(), alpha=0.2, lw=0)
        if truth is not None:
            for k, tv in enumerate(truth[d]):
                ax.plot(c.grid, tv, "k--", lw=0.8, label="truth" if k == 0 else None)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("covariate")
        ax.set_ylabel("probability")
        ax.set_title(f"group {d + 1}")
    axes[0][0].legend(frameon=False, fontsize=7)
    return _save(fig, path)


def mad_curves(depth_grid, mad_depth, width_grid, mad_width, path):
    fig, axes = _figure(ncols=2, width=8.0)
    for ax, grid, mad, lab in ((axes[0][0], depth_grid, mad_depth, "chain depth D"),
                               (axes[0][1], width_grid, mad_width, "chain width W")):
        if len(mad):
            ax.plot(grid[1:len(mad) + 1], mad, "o-", ms=3)
        ax.set_xlabel(lab)
        ax.set_ylabel("MAD between successive PSMs")
    return _save(fig, path)


def psm_heatmap(P, path):
    fig, axes = _figure(width=4.5)
    ax = axes[0][0]
    im = ax.imshow(P, vmin=0, vmax=1, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_xticks([])
    ax.set_yticks([])
    return _save(fig, path)


def trace_plots(trace, path, keys=("alpha", "alpha0", "s2", "m2", "alpha_phi2")):
    keys = [k for k in keys if k in trace]
    fig, axes = _figure(nrows=max(len(keys), 1), width=6.0)
    for ax, k in zip(axes[:, 0], keys):
        ax.plot(trace.iterations, trace[k], lw=0.6)
        ax.set_ylabel(k)
    axes[-1][0].set_xlabel("iteration")
    return _save(fig, path)


def ppc_bands(observed, replicate_stats, path, keys=("mean_log", "sd_log", "dropout")):
    """Observed per-gene statistics against the central 99% replicate band."""
    fig, axes = _figure(ncols=len(keys), width=4.0 * len(keys))
    for ax, k in zip(axes[0], keys):
        rep = replicate_stats[k]
        lo, hi = np.quantile(rep, [0.005, 0.995], axis=0)
        g = np.arange(rep.shape[1]) + 1
        ax.vlines(g, lo, hi, color="0.6", lw=2)
        ax.plot(g, observed[k], "o", color="C3", ms=3)
        ax.set_xlabel("gene")
        ax.set_title(k.replace("_", " "))
    return _save(fig, path)


def latent_counts(x, y, group, path, genes=None):
    genes = range(min(y.shape[1], 4)) if genes is None else genes
    genes = list(genes)
    fig, axes = _figure(ncols=len(genes), width=3.0 * len(genes))
    for ax, g in zip(axes[0], genes):
        for d in np.unique(group):
            k = group == d
            ax.plot(x[k], y[k, g], ".", ms=2, label=f"group {d + 1}")
        ax.set_xlabel("covariate")
        ax.set_title(f"gene {g + 1}")
    axes[0][0].set_ylabel("posterior mean latent count")
    axes[0][0].legend(frameon=False, fontsize=7)
    return _save(fig, path)
