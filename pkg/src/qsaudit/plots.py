"""Static SVG figures: heatmaps, spectra with MP overlay, Wasserstein triangles."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bitcore import Heatmap  # noqa: E402
from .spectral import MpParams, SpectralResult, bulk_edge, mp_density  # noqa: E402
from .transport import TrianglePlot  # noqa: E402

# reproducible SVG output: fixed element ids, no timestamp
plt.rcParams["svg.hashsalt"] = "qsaudit"
plt.rcParams["svg.fonttype"] = "none"
_SVG_META = {"Date": None, "Creator": "qsaudit"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def heatmap_svg(hm: Heatmap, path, title: str = "") -> Path:
    """Grayscale heatmap clipped to ``p1 +/- 3 sigma_cell``."""
    sigma = hm.cell_sigma()
    vmin, vmax = hm.p1 - 3 * sigma, hm.p1 + 3 * sigma
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    im = ax.imshow(hm.grid, cmap="gray", vmin=vmin, vmax=vmax, interpolation="nearest")
    cb = fig.colorbar(im, ax=ax)
    cb.set_label(f"mean of bit 1 (clipped to p1 ± 3σ, σ={sigma:.2e})")
    ax.set_xlabel("qubit index")
    ax.set_ylabel("row within slice")
    slices = "slice %d" % hm.single_slice if hm.single_slice is not None else f"{hm.blocks_used} slices"
    ax.set_title(f"{title}  p1={hm.p1:.5f}  ({slices})".strip())
    return _save(fig, path)


def heatmap_csv(hm: Heatmap, path) -> Path:
    path = Path(path)
    np.savetxt(path, hm.grid, delimiter=",", fmt="%.8f")
    return path


def spectrum_svg(res: SpectralResult, path, title: str = "") -> Path:
    fig, (ax_bulk, ax_top) = plt.subplots(1, 2, figsize=(10, 4))
    widths = np.diff(res.bin_edges)
    total = max(res.bulk.size, 1)
    ax_bulk.bar(res.bin_edges[:-1], res.counts / (total * widths), width=widths,
                align="edge", color="0.6", label="empirical bulk")
    grid = np.linspace(res.bin_edges[0], res.bin_edges[-1], 400)
    gamma = min(res.gamma, 1.0)
    # bulk of (1/4k) Y^T Y: MP law with variance 1/4
    ax_bulk.plot(grid, mp_density(grid, MpParams(0.25, gamma)), "k-", label="Marchenko-Pastur")
    ax_bulk.axvline(bulk_edge(gamma), color="k", ls=":", lw=1)
    ax_bulk.set_xlabel("eigenvalue")
    ax_bulk.set_ylabel("density")
    ax_bulk.legend()

    ax_top.hist(res.outliers, bins=60, color="tab:red", alpha=0.7)
    ax_top.axvline(res.n / 4, color="k", ls="--", lw=1, label="n/4")
    ax_top.axvline(res.mean_top, color="tab:blue", lw=1, label="mean outlier")
    ax_top.set_xlabel("largest eigenvalue per block")
    ax_top.legend()
    fig.suptitle(f"{title}  n={res.n} k={res.k} blocks={res.blocks} "
                 f"distance={res.signed_distance:+.4f}".strip())
    fig.tight_layout()
    return _save(fig, path)


def triangle_svg(tri: TrianglePlot, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    pts = np.vstack([tri.coordinates, tri.coordinates[:1]])
    ax.plot(pts[:, 0], pts[:, 1], "k-", lw=1)
    for (x, y), label, style in zip(tri.coordinates, tri.labels, ("ko", "rs", "b^")):
        ax.plot(x, y, style)
        ax.annotate(label, (x, y), textcoords="offset points", xytext=(4, 4))
    ax.set_aspect("equal", adjustable="datalim")
    note = " (degenerate)" if tri.degenerate else ""
    ax.set_title(f"{title}{note}".strip())
    ax.set_xlabel("W1")
    fig.tight_layout()
    return _save(fig, path)


def distance_curve_svg(keys, values, path, xlabel: str, labels=None, baseline: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(keys, values, "o-")
    if labels:
        for k, v, lab in zip(keys, values, labels):
            ax.annotate(lab, (k, v), fontsize=7, textcoords="offset points", xytext=(3, 3))
    if baseline is not None:
        ax.axhline(baseline, color="g", ls="-.", lw=1)
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("outlier distance from n/4")
    fig.tight_layout()
    return _save(fig, path)
