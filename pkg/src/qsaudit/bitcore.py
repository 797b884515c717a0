"""Packed bit-string datasets: ingestion, synthesis, slicing and bias statistics.

A dataset is an ``M x n`` binary array, one measured bit-string per row.
Rows are stored packed, ``ceil(n/8)`` bytes each, with bit ``j`` of a row in
bit ``j % 8`` of byte ``j // 8``.  Column 0 is qubit 0, which is also the
leftmost character of the text format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MAX_QUBITS = 64
ORIGINS = ("quantum-device", "simulator", "classical-uniform")

MAGIC = b"QSBM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")  # magic, version, n, M -> 16 bytes

# bits set per byte value
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)

# rows unpacked at once when streaming over a matrix
_CHUNK_ROWS = 1 << 16


class BitFormatError(ValueError):
    """Malformed bit-string file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(ValueError):
    pass


class InsufficientRowsError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetMeta:
    name: str = ""
    n: int | None = None
    m: int | None = None
    origin: str | None = None

    def __post_init__(self):
        if self.origin is not None and self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}; expected one of {ORIGINS}")


def _row_bytes(n: int) -> int:
    return (n + 7) // 8


class BitMatrix:
    """Immutable packed ``M x n`` binary matrix with dataset metadata."""

    __slots__ = ("_packed", "_n", "meta")

    def __init__(self, packed: np.ndarray, n: int, meta: DatasetMeta | None = None):
        if not 1 <= n <= MAX_QUBITS:
            raise ValueError(f"n must be in [1, {MAX_QUBITS}], got {n}")
        packed = np.asarray(packed, dtype=np.uint8)
        if packed.ndim != 2 or packed.shape[1] != _row_bytes(n):
            raise ValueError(f"packed data must have shape (M, {_row_bytes(n)})")
        if packed.shape[0] < 1:
            raise EmptyInputError("a BitMatrix needs at least one row")
        if n % 8 and np.any(packed[:, -1] >> (n % 8)):
            raise ValueError("padding bits beyond column n must be zero")
        if packed.flags.writeable:
            packed = packed.view()
            packed.flags.writeable = False
        self._packed = packed
        self._n = n
        meta = meta or DatasetMeta()
        if meta.n is None:
            meta = replace(meta, n=n)
        self.meta = meta

    @classmethod
    def from_array(cls, bits, meta: DatasetMeta | None = None) -> "BitMatrix":
        arr = np.asarray(bits)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array of bits")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("entries must be 0 or 1")
        packed = np.packbits(arr.astype(np.uint8), axis=1, bitorder="little")
        return cls(packed, arr.shape[1], meta)

    @property
    def rows(self) -> int:
        return self._packed.shape[0]

    @property
    def cols(self) -> int:
        return self._n

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self._n

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    def __len__(self) -> int:
        return self.rows

    def __repr__(self) -> str:
        return f"BitMatrix(M={self.rows}, n={self._n}, name={self.meta.name!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self._n == other._n and np.array_equal(self._packed, other._packed)

    __hash__ = None

    def to_array(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Unpack rows ``start:stop`` into a uint8 array of 0/1."""
        return np.unpackbits(
            self._packed[start:stop], axis=1, count=self._n, bitorder="little"
        )

    def row(self, i: int) -> np.ndarray:
        return self.to_array(i, i + 1)[0]

    def iter_chunks(self, rows_per_chunk: int = _CHUNK_ROWS) -> Iterator[np.ndarray]:
        for start in range(0, self.rows, rows_per_chunk):
            yield self.to_array(start, start + rows_per_chunk)

    def select(self, start: int, stop: int) -> "BitMatrix":
        """Rows ``start:stop`` as a view sharing the parent's storage."""
        return BitMatrix(self._packed[start:stop], self._n, self.meta)

    def to_integers(self) -> np.ndarray:
        """Each row as an unsigned integer, qubit 0 being the most significant bit."""
        weights = np.left_shift(np.uint64(1), np.arange(self._n - 1, -1, -1, dtype=np.uint64))
        out = np.empty(self.rows, dtype=np.uint64)
        pos = 0
        for chunk in self.iter_chunks():
            # exact integer accumulation, one column at a time
            acc = np.zeros(chunk.shape[0], dtype=np.uint64)
            for j in range(self._n):
                acc |= chunk[:, j].astype(np.uint64) * weights[j]
            out[pos : pos + chunk.shape[0]] = acc
            pos += chunk.shape[0]
        return out

    def with_meta(self, **changes) -> "BitMatrix":
        return BitMatrix(self._packed, self._n, replace(self.meta, **changes))


# --------------------------------------------------------------------------
# file formats


def _load_text(path: Path) -> tuple[np.ndarray, int]:
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    content: list[bytes] = []
    line_numbers: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if line:
            content.append(line)
            line_numbers.append(lineno)
    if not content:
        raise EmptyInputError(f"{path}: no bit-strings found")

    n = len(content[0])
    for line, lineno in zip(content, line_numbers):
        if len(line) != n:
            raise BitFormatError(
                f"expected {n} characters, found {len(line)}", line=lineno
            )
    if n > MAX_QUBITS:
        raise BitFormatError(f"bit-strings longer than {MAX_QUBITS} are not supported", line=1)

    chars = np.frombuffer(b"".join(content), dtype=np.uint8).reshape(len(content), n)
    bits = chars - ord("0")
    bad = bits > 1  # uint8 wraps characters below '0' too
    if bad.any():
        r, c = np.argwhere(bad)[0]
        ch = chr(chars[r, c])
        raise BitFormatError(f"illegal character {ch!r} at column {c + 1}", line=line_numbers[r])
    return np.packbits(bits, axis=1, bitorder="little"), n


def _load_packed(path: Path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            if not header:
                raise EmptyInputError(f"{path}: empty file")
            raise BitFormatError(f"{path}: truncated header")
        magic, version, n, m_rows = _HEADER.unpack(header)
        if magic != MAGIC:
            raise BitFormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise BitFormatError(f"{path}: unsupported version {version}")
        if not 1 <= n <= MAX_QUBITS:
            raise BitFormatError(f"{path}: invalid qubit count {n}")
        width = _row_bytes(n)
        body = np.frombuffer(fh.read(), dtype=np.uint8)
    if body.size != m_rows * width:
        raise BitFormatError(
            f"{path}: expected {m_rows * width} data bytes, found {body.size}"
        )
    if m_rows == 0:
        raise EmptyInputError(f"{path}: header declares zero rows")
    return body.reshape(m_rows, width).copy(), n


def _guess_format(path: Path) -> str:
    with open(path, "rb") as fh:
        return "packed-binary" if fh.read(4) == MAGIC else "text-lines"


def load_bitstrings(
    path, format: str | None = None, meta: DatasetMeta | None = None
) -> BitMatrix:
    """Read a dataset from ``path``.

    ``format`` is ``"text-lines"`` (one bit-string per line) or
    ``"packed-binary"``; when omitted it is sniffed from the magic bytes.
    """
    path = Path(path)
    format = format or _guess_format(path)
    if format == "text-lines":
        packed, n = _load_text(path)
    elif format == "packed-binary":
        packed, n = _load_packed(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    meta = meta or DatasetMeta(name=path.stem)
    return BitMatrix(packed, n, meta)


def save_bitstrings(bm: BitMatrix, path, format: str = "packed-binary") -> None:
    path = Path(path)
    if format == "packed-binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, bm.cols, bm.rows))
            fh.write(np.ascontiguousarray(bm.packed).tobytes())
    elif format == "text-lines":
        with open(path, "wb") as fh:
            for chunk in bm.iter_chunks():
                chars = (chunk + ord("0")).astype(np.uint8)
                lines = np.concatenate(
                    [chars, np.full((chars.shape[0], 1), ord("\n"), dtype=np.uint8)], axis=1
                )
                fh.write(lines.tobytes())
    else:
        raise ValueError(f"unknown format {format!r}")


# --------------------------------------------------------------------------
# synthesis


def generate_uniform(n: int, M: int, seed: int, meta: DatasetMeta | None = None) -> BitMatrix:
    """Fair i.i.d. bits from a seeded PCG64 generator."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"n must be in [1, {MAX_QUBITS}]")
    if M < 1:
        raise ValueError("M must be positive")
    rng = np.random.default_rng(seed)
    packed = rng.integers(0, 256, size=(M, _row_bytes(n)), dtype=np.uint8)
    if n % 8:
        packed[:, -1] &= (1 << (n % 8)) - 1
    meta = meta or DatasetMeta(name=f"uniform-n{n}-s{seed}", origin="classical-uniform")
    return BitMatrix(packed, n, meta)


def generate_biased(n: int, M: int, p1: float, seed: int, meta: DatasetMeta | None = None) -> BitMatrix:
    """I.i.d. bits equal to 1 with probability ``p1``."""
    rng = np.random.default_rng(seed)
    packed = np.empty((M, _row_bytes(n)), dtype=np.uint8)
    for start in range(0, M, _CHUNK_ROWS):
        stop = min(M, start + _CHUNK_ROWS)
        bits = (rng.random((stop - start, n)) < p1).astype(np.uint8)
        packed[start:stop] = np.packbits(bits, axis=1, bitorder="little")
    meta = meta or DatasetMeta(name=f"biased-n{n}-p{p1:g}-s{seed}", origin="simulator")
    return BitMatrix(packed, n, meta)


# --------------------------------------------------------------------------
# statistics


def ones_count(bm: BitMatrix) -> int:
    return int(_POPCOUNT[bm.packed].sum())


def ones_probability(bm: BitMatrix) -> float:
    """Fraction of 1-bits, from an exact integer count."""
    return ones_count(bm) / (bm.rows * bm.cols)


def column_counts(bm: BitMatrix) -> np.ndarray:
    counts = np.zeros(bm.cols, dtype=np.int64)
    for chunk in bm.iter_chunks():
        counts += chunk.sum(axis=0, dtype=np.int64)
    return counts


def column_means(bm: BitMatrix) -> np.ndarray:
    return column_counts(bm) / bm.rows


@dataclass
class Heatmap:
    grid: np.ndarray
    blocks_used: int
    p1: float
    single_slice: int | None = None

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    def cell_sigma(self) -> float:
        """Binomial standard deviation of one cell under a fair-coin null at ``p1``."""
        return float(np.sqrt(self.p1 * (1 - self.p1) / self.blocks_used))


def heatmap(bm: BitMatrix, single_slice: int | None = None) -> Heatmap:
    """Average of the consecutive ``n x n`` slices of ``bm`` (remainder rows dropped).

    With ``single_slice`` set, the grid is that one slice instead of the average.
    """
    n = bm.cols
    blocks = bm.rows // n
    if blocks < 1:
        raise InsufficientRowsError(f"heatmap needs at least n={n} rows, got {bm.rows}")
    p1 = ones_probability(bm)
    if single_slice is not None:
        if not 0 <= single_slice < blocks:
            raise IndexError(f"slice {single_slice} out of range [0, {blocks})")
        grid = bm.to_array(single_slice * n, (single_slice + 1) * n).astype(np.float64)
        return Heatmap(grid, 1, p1, single_slice)

    total = np.zeros((n, n), dtype=np.int64)
    per_chunk = max(1, _CHUNK_ROWS // n) * n
    used = blocks * n
    for start in range(0, used, per_chunk):
        chunk = bm.to_array(start, min(used, start + per_chunk))
        total += chunk.reshape(-1, n, n).sum(axis=0, dtype=np.int64)
    return Heatmap(total / blocks, blocks, p1)


def slice_blocks(bm: BitMatrix, k: int) -> list[BitMatrix]:
    """Consecutive non-overlapping ``k``-row views; the remainder is dropped."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > bm.rows:
        raise InsufficientRowsError(f"block size k={k} exceeds M={bm.rows}")
    return [bm.select(i * k, (i + 1) * k) for i in range(bm.rows // k)]


# --------------------------------------------------------------------------
# dataset registry


@dataclass
class RegistryEntry:
    name: str
    path: str
    n: int
    m: int | None = None
    origin: str | None = None
    cache: str | None = None
    sha256: str | None = None
    M: int | None = None


@dataclass
class Registry:
    path: Path
    entries: dict[str, RegistryEntry] = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "Registry":
        path = Path(path)
        if not path.exists():
            return cls(path)
        doc = json.loads(path.read_text())
        entries = {e["name"]: RegistryEntry(**e) for e in doc.get("datasets", [])}
        return cls(path, entries)

    def save(self) -> None:
        doc = {
            "version": 1,
            "datasets": [vars(e) for e in sorted(self.entries.values(), key=lambda e: e.name)],
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(doc, indent=2) + "\n")

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def get(self, name: str) -> RegistryEntry:
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"dataset {name!r} is not registered in {self.path}") from None

    def open(self, name: str) -> BitMatrix:
        e = self.get(name)
        meta = DatasetMeta(name=e.name, n=e.n, m=e.m, origin=e.origin)
        source = e.cache if e.cache and Path(e.cache).exists() else e.path
        return load_bitstrings(source, meta=meta)


def stack(matrices: Sequence[BitMatrix], meta: DatasetMeta | None = None) -> BitMatrix:
    """Row-concatenate datasets of equal width."""
    widths = {bm.cols for bm in matrices}
    if len(widths) != 1:
        raise ValueError(f"cannot stack matrices of widths {sorted(widths)}")
    packed = np.concatenate([bm.packed for bm in matrices], axis=0)
    return BitMatrix(packed, widths.pop(), meta or matrices[0].meta)
