"""1-Wasserstein distances between bit-string datasets.

Each bit-string is read as an integer (qubit 0 most significant) and scaled
by ``2**-n`` onto ``[0, 1)``.  In one dimension the optimal coupling is the
monotone one, so the distance is the L1 gap between quantile functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bitcore import BitMatrix

MAX_TRANSPORT_QUBITS = 63
DEGENERATE_TOL = 1e-9


class InconsistentDistancesError(ValueError):
    pass


@dataclass
class TransportSample:
    values: np.ndarray
    source: str = ""
    n: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("values must be one-dimensional")

    def __len__(self) -> int:
        return self.values.size

    def sorted(self) -> np.ndarray:
        return np.sort(self.values, kind="stable")


def to_transport(bm: BitMatrix) -> TransportSample:
    n = bm.cols
    if n > MAX_TRANSPORT_QUBITS:
        raise ValueError(f"transport embedding supports n <= {MAX_TRANSPORT_QUBITS}")
    values = np.ldexp(bm.to_integers().astype(np.float64), -n)
    return TransportSample(values, bm.meta.name, n)


def _w1_equal(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).sum() / a.size)


def _w1_quantile(a: np.ndarray, b: np.ndarray) -> float:
    # Quantile breakpoints i/Ma and j/Mb on the common integer grid Ma*Mb.
    ma, mb = a.size, b.size
    cuts = np.union1d(np.arange(1, ma + 1, dtype=np.int64) * mb,
                      np.arange(1, mb + 1, dtype=np.int64) * ma)
    widths = np.diff(cuts, prepend=0)
    # interval (cut_{t-1}, cut_t] lies in quantile step ceil(cut_t / M) - 1
    ia = -(-cuts // mb) - 1
    ib = -(-cuts // ma) - 1
    total = (widths * np.abs(a[ia] - b[ib])).sum()
    return float(total / (ma * mb))


def wasserstein1(a: TransportSample, b: TransportSample) -> float:
    """W1 between the empirical distributions of two samples."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cannot compare an empty sample")
    sa, sb = a.sorted(), b.sorted()
    if sa.size == sb.size:
        return _w1_equal(sa, sb)
    return _w1_quantile(sa, sb)


def distance_matrix(samples: Sequence[TransportSample]) -> np.ndarray:
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    k = len(samples)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = wasserstein1(samples[i], samples[j])
    return out


def format_distance_matrix(labels: Sequence[str], matrix: np.ndarray) -> str:
    rows = ["\t" + "\t".join(labels)]
    for label, row in zip(labels, matrix):
        rows.append(label + "\t" + "\t".join(f"{v:.8f}" for v in row))
    return "\n".join(rows) + "\n"


def parse_distance_matrix(text: str) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    labels = lines[0].split("\t")[1:]
    matrix = np.array([[float(v) for v in ln.split("\t")[1:]] for ln in lines[1:]])
    return labels, matrix


@dataclass
class TrianglePlot:
    labels: tuple[str, str, str]
    coordinates: np.ndarray  # rows A, B, C
    edge_lengths: tuple[float, float, float]  # (AB, AC, BC)
    degenerate: bool = False


def triangle_embed(
    d_ab: float, d_ac: float, d_bc: float, labels=("A", "B", "C")
) -> TrianglePlot:
    """Place A at the origin, B on the +x axis and C in the upper half plane."""
    if min(d_ab, d_ac, d_bc) < 0:
        raise ValueError("distances must be non-negative")
    if d_ab == 0:
        if not math.isclose(d_ac, d_bc, rel_tol=0, abs_tol=DEGENERATE_TOL):
            raise InconsistentDistancesError(
                f"A and B coincide but d_ac={d_ac} differs from d_bc={d_bc}"
            )
        x, y2 = 0.0, d_ac * d_ac
    else:
        x = (d_ab * d_ab + d_ac * d_ac - d_bc * d_bc) / (2 * d_ab)
        y2 = d_ac * d_ac - x * x
    slack = min(d_ab + d_ac - d_bc, d_ab + d_bc - d_ac, d_ac + d_bc - d_ab)
    degenerate = d_ab == 0 or slack <= DEGENERATE_TOL
    if d_ab == 0:
        y = d_ac
    else:
        y = 0.0 if slack <= DEGENERATE_TOL else math.sqrt(max(0.0, y2))
    coords = np.array([[0.0, 0.0], [d_ab, 0.0], [x, y]])
    return TrianglePlot(tuple(labels), coords, (d_ab, d_ac, d_bc), degenerate)
