"""Marchenko-Pastur analysis of sliced bit-string matrices.

A dataset is cut into ``k x n`` blocks ``X`` and the spectrum of the
``n x n`` Gram matrix ``(1/k) X^T X`` is computed per block.  Writing
``Y = 2X - J`` splits that matrix into a centred Wishart part whose bulk
follows the Marchenko-Pastur law (scaled by 1/4) and a rank-one mean part
that produces one outlier eigenvalue near ``n/4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bitcore import BitMatrix, InsufficientRowsError, ones_probability

EIG_TOL = 1e-9
DEFAULT_GAMMA = 0.5
_BLOCKS_PER_BATCH = 512


@dataclass(frozen=True)
class MpParams:
    sigma2: float = 1.0
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def lower(self) -> float:
        return self.sigma2 * (1 - math.sqrt(self.gamma)) ** 2

    @property
    def upper(self) -> float:
        return self.sigma2 * (1 + math.sqrt(self.gamma)) ** 2


def mp_density(lam, params: MpParams):
    """Marchenko-Pastur density; zero outside ``[lower, upper]``.

    Accepts a scalar or an array of eigenvalues.
    """
    lam = np.asarray(lam, dtype=np.float64)
    lo, hi = params.lower, params.upper
    inside = (lam > lo) & (lam < hi)
    safe = np.where(inside, lam, 1.0)
    val = np.sqrt(np.clip((hi - safe) * (safe - lo), 0.0, None)) / (
        2 * math.pi * params.sigma2 * params.gamma * safe
    )
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def bulk_edge(gamma: float = DEFAULT_GAMMA) -> float:
    """Upper bulk edge of ``(1/k) X^T X`` for fair bits: ``(1 + sqrt(gamma))^2 / 4``."""
    return MpParams(1.0, gamma).upper / 4


def _as_float_block(block) -> np.ndarray:
    if isinstance(block, BitMatrix):
        block = block.to_array()
    arr = np.asarray(block, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("block must be a non-empty 2-D array")
    return arr


def _clamp(eigs: np.ndarray) -> np.ndarray:
    if eigs.size and eigs.min() < -EIG_TOL * max(1.0, float(np.abs(eigs).max())):
        raise ArithmeticError(f"Gram matrix eigenvalue {eigs.min():.3e} is negative")
    return np.maximum(eigs, 0.0)


def gram_eigenvalues(block) -> np.ndarray:
    """Ascending eigenvalues of ``(1/k) X^T X`` for a ``k x n`` 0/1 block."""
    x = _as_float_block(block)
    k = x.shape[0]
    gram = (x.T @ x) / k
    return _clamp(np.linalg.eigvalsh(gram))


def wishart_decomposition_check(block) -> float:
    """Max residual of ``X^T X / k == (Y^T Y + Y^T J + J^T Y + J^T J) / 4k`` with ``Y = 2X - J``."""
    x = _as_float_block(block)
    k = x.shape[0]
    j = np.ones_like(x)
    y = 2 * x - j
    lhs = (x.T @ x) / k
    rhs = (y.T @ y + y.T @ j + j.T @ y + j.T @ j) / (4 * k)
    return float(np.abs(lhs - rhs).max())


def predicted_top_eigenvalue(p1: float, n: int, k: int | None = None) -> float:
    """Expected outlier eigenvalue for i.i.d. Bernoulli(p1) entries.

    The population matrix ``E[(1/k) X^T X] = p1^2 J + p1(1-p1) I`` has top
    eigenvalue ``p1^2 (n-1) + p1``.  When ``k`` is given, the finite-sample
    spiked-covariance shift ``ell * gamma * s2 / (ell - s2)`` is added, which
    is what the per-block maxima actually average to.
    """
    s2 = p1 * (1 - p1)
    ell = p1 * p1 * (n - 1) + p1
    if k is None:
        return ell
    gamma = n / k
    return ell * (1 + gamma * s2 / (ell - s2))


@dataclass
class SpectralResult:
    n: int
    k: int
    blocks: int
    outliers: np.ndarray
    bulk: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    p1: float
    name: str = ""

    @property
    def gamma(self) -> float:
        return self.n / self.k

    @property
    def mean_top(self) -> float:
        return float(self.outliers.mean())

    @property
    def signed_distance(self) -> float:
        return self.mean_top - self.n / 4

    def mode_top(self, bins: int = 100) -> float:
        """Histogram-mode estimate of the outlier peak."""
        counts, edges = np.histogram(self.outliers, bins=bins)
        i = int(np.argmax(counts))
        return float(0.5 * (edges[i] + edges[i + 1]))

    def fraction_below(self, threshold: float) -> float:
        if self.bulk.size == 0:
            return float("nan")
        return float(np.count_nonzero(self.bulk <= threshold) / self.bulk.size)

    def to_table(self) -> str:
        lines = ["# bin_left\tbin_right\tcount"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            lines.append(f"{lo:.6f}\t{hi:.6f}\t{int(c)}")
        lines.append("# outliers")
        lines.extend(f"{v:.10f}" for v in self.outliers)
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "gamma": self.gamma,
            "blocks": self.blocks,
            "p1": self.p1,
            "mean_top": self.mean_top,
            "mode_top": self.mode_top(),
            "signed_distance": self.signed_distance,
            "bulk_edge": bulk_edge(min(self.gamma, 1.0)),
            "bulk_fraction_below_edge": self.fraction_below(bulk_edge(min(self.gamma, 1.0))),
            "predicted_top": predicted_top_eigenvalue(self.p1, self.n, self.k),
        }


def block_spectra(bm: BitMatrix, k: int) -> Iterable[np.ndarray]:
    """Yield ``(batch, n)`` arrays of ascending eigenvalues, one row per block."""
    n = bm.cols
    blocks = bm.rows // k
    for b0 in range(0, blocks, _BLOCKS_PER_BATCH):
        b1 = min(blocks, b0 + _BLOCKS_PER_BATCH)
        x = bm.to_array(b0 * k, b1 * k).astype(np.float64).reshape(b1 - b0, k, n)
        gram = np.matmul(x.transpose(0, 2, 1), x) / k
        yield _clamp(np.linalg.eigvalsh(gram))


def empirical_spectrum(
    bm: BitMatrix,
    gamma: float = DEFAULT_GAMMA,
    k: int | None = None,
    bins: int = 120,
) -> SpectralResult:
    """Per-block spectra of ``bm`` sliced into ``k = round(n / gamma)`` rows.

    The largest eigenvalue of each block is its outlier; the remaining
    ``n - 1`` are histogrammed on ``[0, 2 * bulk_edge]``.
    """
    n = bm.cols
    if k is None:
        k = int(round(n / gamma))
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > bm.rows:
        raise InsufficientRowsError(f"need at least k={k} rows for one block, have {bm.rows}")
    blocks = bm.rows // k

    tops, rest = [], []
    for eigs in block_spectra(bm, k):
        tops.append(eigs[:, -1])
        rest.append(eigs[:, :-1].ravel())
    outliers = np.concatenate(tops)
    bulk = np.concatenate(rest)
    edges = np.linspace(0.0, 2 * bulk_edge(min(n / k, 1.0)), bins + 1)
    counts, _ = np.histogram(bulk, bins=edges)
    return SpectralResult(
        n=n,
        k=k,
        blocks=blocks,
        outliers=outliers,
        bulk=bulk,
        bin_edges=edges,
        counts=counts,
        p1=ones_probability(bm),
        name=bm.meta.name,
    )


@dataclass(frozen=True)
class DistanceRow:
    key: int
    signed_distance: float
    name: str
    n: int
    m: int | None


def distance_curve(
    datasets: Sequence[BitMatrix], mode: str = "by-n", gamma: float = DEFAULT_GAMMA
) -> list[DistanceRow]:
    """Signed outlier distance from ``n/4`` per dataset, sorted by qubit count or cycle."""
    if mode not in ("by-n", "by-m"):
        raise ValueError("mode must be 'by-n' or 'by-m'")
    rows = []
    for bm in datasets:
        n, m = bm.meta.n or bm.cols, bm.meta.m
        key = n if mode == "by-n" else m
        if key is None:
            raise ValueError(f"dataset {bm.meta.name!r} has no cycle metadata")
        res = empirical_spectrum(bm, gamma)
        rows.append(DistanceRow(key, res.signed_distance, bm.meta.name, n, m))
    return sorted(rows, key=lambda r: (r.key, r.name))
