"""NIST SP 800-22 rev. 1a statistical test battery.

Every test takes a :class:`BitStream` and returns a :class:`TestResult`.
Streams shorter than a test's recommended minimum make that test
non-applicable instead of failing it; pass ``relaxed=True`` to run the
statistic anyway (used for the short worked examples of the standard).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from .bitcore import BitMatrix

ALPHA = 0.01
RECOMMENDED_LENGTH = 1_000_000


@dataclass(frozen=True)
class BitStream:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size < 1:
            raise ValueError("a bit stream needs at least one bit")
        if bits.max() > 1:
            raise ValueError("bit stream entries must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, text: str) -> "BitStream":
        return cls(np.frombuffer(text.strip().encode(), dtype=np.uint8) - ord("0"))

    @property
    def length(self) -> int:
        return self.bits.size

    def __len__(self) -> int:
        return self.bits.size

    def reversed(self) -> "BitStream":
        return BitStream(self.bits[::-1].copy())


def stream_from_matrix(bm: BitMatrix, limit: int | None = None) -> BitStream:
    """Row-major concatenation of ``bm``, truncated to ``limit`` bits."""
    total = bm.rows * bm.cols
    if limit is not None:
        total = min(total, limit)
    rows = -(-total // bm.cols)
    return BitStream(bm.to_array(0, rows).ravel()[:total])


@dataclass
class TestResult:
    test_name: str
    p_values: list[float] = field(default_factory=list)
    sub_results: list[dict] = field(default_factory=list)
    applicable: bool = True
    statistic: float | None = None
    note: str = ""

    __test__ = False  # not a pytest class

    @property
    def passed(self) -> bool:
        return self.applicable and all(p >= ALPHA for p in self.p_values)

    @property
    def p_value(self) -> float:
        return self.p_values[0]

    def to_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "p_values": list(self.p_values),
            "sub_results": self.sub_results,
            "applicable": self.applicable,
            "passed": self.passed,
            "statistic": self.statistic,
            "note": self.note,
        }


def _not_applicable(name: str, why: str) -> TestResult:
    return TestResult(name, applicable=False, note=why)


def _too_short(name: str, s: BitStream, minimum: int, relaxed: bool) -> TestResult | None:
    if s.length < minimum and not relaxed:
        return _not_applicable(name, f"needs at least {minimum} bits, got {s.length}")
    return None


def _igamc(a: float, x: float) -> float:
    return float(gammaincc(a, x))


def _pm1(s: BitStream) -> np.ndarray:
    return 2 * s.bits.astype(np.int64) - 1


def _window_values(bits: np.ndarray, m: int) -> np.ndarray:
    """Integer value of every length-``m`` window, first bit most significant."""
    count = bits.size - m + 1
    out = np.zeros(count, dtype=np.int64)
    for i in range(m):
        out = (out << 1) | bits[i : i + count]
    return out


# --------------------------------------------------------------------------
# 1. frequency


def frequency_monobit(s: BitStream, relaxed: bool = False) -> TestResult:
    name = "Frequency (Monobit)"
    if (r := _too_short(name, s, 100, relaxed)) is not None:
        return r
    total = int(_pm1(s).sum())
    p = float(erfc(abs(total) / math.sqrt(2 * s.length)))
    return TestResult(name, [p], statistic=float(total))


# 2. block frequency


def block_frequency(s: BitStream, block_len: int = 128, relaxed: bool = False) -> TestResult:
    name = "Frequency within a Block"
    if (r := _too_short(name, s, max(100, block_len), relaxed)) is not None:
        return r
    blocks = s.length // block_len
    if blocks < 1:
        return _not_applicable(name, "no complete block")
    pi = s.bits[: blocks * block_len].reshape(blocks, block_len).mean(axis=1)
    chi2 = float(4 * block_len * ((pi - 0.5) ** 2).sum())
    return TestResult(name, [_igamc(blocks / 2, chi2 / 2)], statistic=chi2)


# 3. runs


def runs_test(s: BitStream, relaxed: bool = False) -> TestResult:
    name = "Runs"
    if (r := _too_short(name, s, 100, relaxed)) is not None:
        return r
    n = s.length
    pi = s.bits.sum() / n
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return TestResult(name, [0.0], note="frequency prerequisite failed")
    v_obs = 1 + int(np.count_nonzero(s.bits[1:] != s.bits[:-1]))
    num = abs(v_obs - 2 * n * pi * (1 - pi))
    den = 2 * math.sqrt(2 * n) * pi * (1 - pi)
    return TestResult(name, [float(erfc(num / den))], statistic=float(v_obs))


# 4. longest run of ones in a block

_LONGEST_RUN_TABLE = (
    # min n, block length, category bounds (lowest, highest), class probabilities
    (750_000, 10_000, (10, 16), (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, (4, 9), (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 4), (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_runs(blocks: np.ndarray) -> np.ndarray:
    nb, m = blocks.shape
    padded = np.zeros((nb, m + 2), dtype=np.int8)
    padded[:, 1:-1] = blocks
    d = np.diff(padded.ravel())
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    longest = np.zeros(nb, dtype=np.int64)
    np.maximum.at(longest, starts // (m + 2), ends - starts)
    return longest


def longest_run_of_ones(s: BitStream, relaxed: bool = False) -> TestResult:
    name = "Longest Run of Ones in a Block"
    for min_n, m, (lo, hi), probs in _LONGEST_RUN_TABLE:
        if s.length >= min_n:
            break
    else:
        if not relaxed:
            return _not_applicable(name, f"needs at least 128 bits, got {s.length}")
    nblocks = s.length // m
    if nblocks < 1:
        return _not_applicable(name, "no complete block")
    longest = _longest_runs(s.bits[: nblocks * m].reshape(nblocks, m))
    v = np.bincount(np.clip(longest, lo, hi) - lo, minlength=hi - lo + 1)
    expected = nblocks * np.asarray(probs)
    chi2 = float(((v - expected) ** 2 / expected).sum())
    return TestResult(name, [_igamc((len(probs) - 1) / 2, chi2 / 2)], statistic=chi2)


# 5. binary matrix rank


def gf2_rank(rows: list[int]) -> int:
    """Rank over GF(2) of a matrix given as row bitmasks."""
    basis: list[int] = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
            basis.sort(reverse=True)
    return len(basis)


def _rank_probability(r: int, m: int, q: int) -> float:
    log2p = r * (q + m - r) - m * q
    prod = 1.0
    for i in range(r):
        prod *= (1 - 2.0 ** (i - q)) * (1 - 2.0 ** (i - m)) / (1 - 2.0 ** (i - r))
    return 2.0**log2p * prod


def binary_matrix_rank(s: BitStream, rows: int = 32, cols: int = 32, relaxed: bool = False) -> TestResult:
    name = "Binary Matrix Rank"
    size = rows * cols
    if (r := _too_short(name, s, 38 * size, relaxed)) is not None:
        return r
    count = s.length // size
    if count < 1:
        return _not_applicable(name, "no complete matrix")
    mats = s.bits[: count * size].reshape(count, rows, cols)
    weights = 1 << np.arange(cols - 1, -1, -1, dtype=np.int64)
    masks = (mats.astype(np.int64) * weights).sum(axis=2)
    full = m1 = 0
    for mat in masks:
        rank = gf2_rank([int(v) for v in mat])
        if rank == min(rows, cols):
            full += 1
        elif rank == min(rows, cols) - 1:
            m1 += 1
    p_full = _rank_probability(min(rows, cols), rows, cols)
    p_m1 = _rank_probability(min(rows, cols) - 1, rows, cols)
    p_rest = 1 - p_full - p_m1
    rest = count - full - m1
    chi2 = (
        (full - p_full * count) ** 2 / (p_full * count)
        + (m1 - p_m1 * count) ** 2 / (p_m1 * count)
        + (rest - p_rest * count) ** 2 / (p_rest * count)
    )
    return TestResult(name, [math.exp(-chi2 / 2)], statistic=chi2)


# 6. discrete Fourier transform


def dft_spectral(s: BitStream, relaxed: bool = False) -> TestResult:
    name = "Discrete Fourier Transform (Spectral)"
    if (r := _too_short(name, s, 1000, relaxed)) is not None:
        return r
    n = s.length
    modulus = np.abs(np.fft.fft(_pm1(s).astype(np.float64)))[: n // 2]
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2
    n1 = int(np.count_nonzero(modulus < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4)
    return TestResult(name, [float(erfc(abs(d) / math.sqrt(2)))], statistic=d)


# 7. non-overlapping template matching


@lru_cache(maxsize=None)
def aperiodic_templates(m: int) -> tuple[str, ...]:
    """All length-``m`` templates with no proper self-overlap, in lexical order."""
    out = []
    for v in range(1 << m):
        t = format(v, f"0{m}b")
        if all(t[j:] != t[: m - j] for j in range(1, m)):
            out.append(t)
    return tuple(out)


def _count_non_overlapping(positions: np.ndarray, m: int) -> int:
    count, next_free = 0, -1
    for p in positions.tolist():
        if p >= next_free:
            count += 1
            next_free = p + m
    return count


def non_overlapping_template(
    s: BitStream,
    m: int = 9,
    templates: tuple[str, ...] | None = None,
    blocks: int = 8,
    relaxed: bool = False,
) -> TestResult:
    """One p-value per template; the default template is ``0...01``."""
    name = "Non-Overlapping Template Matching"
    if (r := _too_short(name, s, blocks * (1 << m), relaxed)) is not None:
        return r
    if templates is None:
        templates = ("0" * (m - 1) + "1",)
    block_len = s.length // blocks
    if block_len < m:
        return _not_applicable(name, "blocks shorter than the template")
    mu = (block_len - m + 1) / 2**m
    var = block_len * (1 / 2**m - (2 * m - 1) / 2 ** (2 * m))
    windows = [
        _window_values(s.bits[j * block_len : (j + 1) * block_len], m) for j in range(blocks)
    ]
    pvals, subs = [], []
    for t in templates:
        if len(t) != m:
            raise ValueError(f"template {t!r} does not have length {m}")
        target = int(t, 2)
        counts = [_count_non_overlapping(np.flatnonzero(w == target), m) for w in windows]
        chi2 = float(sum((c - mu) ** 2 for c in counts) / var)
        p = _igamc(blocks / 2, chi2 / 2)
        pvals.append(p)
        subs.append({"template": t, "counts": counts, "chi2": chi2, "p_value": p})
    return TestResult(name, pvals, subs, statistic=subs[0]["chi2"])


# 8. overlapping template matching

_OVERLAPPING_PI = (0.364091, 0.185659, 0.139381, 0.100571, 0.0704323, 0.139865)


def overlapping_template(
    s: BitStream, m: int = 9, block_len: int = 1032, relaxed: bool = False
) -> TestResult:
    name = "Overlapping Template Matching"
    if (r := _too_short(name, s, RECOMMENDED_LENGTH, relaxed)) is not None:
        return r
    nblocks = s.length // block_len
    if nblocks < 1:
        return _not_applicable(name, "no complete block")
    blocks = s.bits[: nblocks * block_len].reshape(nblocks, block_len)
    w = np.ones((nblocks, block_len - m + 1), dtype=bool)
    for i in range(m):
        w &= blocks[:, i : i + block_len - m + 1].astype(bool)
    hits = w.sum(axis=1)
    v = np.bincount(np.minimum(hits, 5), minlength=6)
    expected = nblocks * np.asarray(_OVERLAPPING_PI)
    chi2 = float(((v - expected) ** 2 / expected).sum())
    return TestResult(name, [_igamc(5 / 2, chi2 / 2)], statistic=chi2)


# 9. Maurer's universal statistical test

_MAURER_EXPECTED = {
    1: (0.7326495, 0.690), 2: (1.5374383, 1.338), 3: (2.4016068, 1.901),
    4: (3.3112247, 2.358), 5: (4.2534266, 2.705), 6: (5.2177052, 2.954),
    7: (6.1962507, 3.125), 8: (7.1836656, 3.238), 9: (8.1764248, 3.311),
    10: (9.1723243, 3.356), 11: (10.170032, 3.384), 12: (11.168765, 3.401),
    13: (12.168070, 3.410), 14: (13.167693, 3.416), 15: (14.167488, 3.419),
    16: (15.167379, 3.421),
}
_MAURER_MIN_LENGTH = (
    (1_059_061_760, 16), (496_435_200, 15), (231_669_760, 14), (107_560_960, 13),
    (49_643_520, 12), (22_753_280, 11), (10_342_400, 10), (4_654_080, 9),
    (2_068_480, 8), (904_960, 7), (387_840, 6),
)


def maurer_statistic(bits: np.ndarray, L: int, Q: int) -> float:
    """Average log2 distance between repeated ``L``-bit blocks after ``Q`` warm-up blocks."""
    nblocks = bits.size // L
    vals = _window_values(bits[: nblocks * L], L)[::L]
    idx = np.arange(1, nblocks + 1)
    order = np.argsort(vals, kind="stable")
    sv, si = vals[order], idx[order]
    prev = np.zeros_like(si)
    same = sv[1:] == sv[:-1]
    prev[1:][same] = si[:-1][same]
    test = si > Q
    return float(np.log2(si[test] - prev[test]).sum() / (nblocks - Q))


def maurer_universal(s: BitStream, L: int | None = None, Q: int | None = None, relaxed: bool = False) -> TestResult:
    name = "Maurer's Universal Statistical"
    if L is None:
        for min_n, L in _MAURER_MIN_LENGTH:
            if s.length >= min_n:
                break
        else:
            return _not_applicable(name, f"needs at least 387840 bits, got {s.length}")
    if Q is None:
        Q = 10 * 2**L
    nblocks = s.length // L
    K = nblocks - Q
    if K < 1:
        return _not_applicable(name, "not enough blocks after initialisation")
    fn = maurer_statistic(s.bits, L, Q)
    expected, variance = _MAURER_EXPECTED[L]
    c = 0.7 - 0.8 / L + (4 + 32 / L) * K ** (-3 / L) / 15
    sigma = c * math.sqrt(variance / K)
    p = float(erfc(abs(fn - expected) / (math.sqrt(2) * sigma)))
    return TestResult(name, [p], statistic=fn, sub_results=[{"L": L, "Q": Q, "K": K}])


# 10. linear complexity


def berlekamp_massey(bits) -> int:
    """Linear complexity of a 0/1 sequence over GF(2)."""
    c, b = 1, 1  # connection polynomials as bitmasks, bit i = coefficient of x^i
    L, shift = 0, 1
    window = 0  # bit i holds s[N - i]
    for N, bit in enumerate(bits):
        window = (window << 1) | int(bit)
        if (c & window).bit_count() & 1:
            t = c
            c ^= b << shift
            if 2 * L <= N:
                L, b, shift = N + 1 - L, t, 1
                continue
        shift += 1
    return L


_LC_PI = (0.010417, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833)


def linear_complexity(s: BitStream, block_len: int = 500, relaxed: bool = False) -> TestResult:
    name = "Linear Complexity"
    if (r := _too_short(name, s, RECOMMENDED_LENGTH, relaxed)) is not None:
        return r
    M = block_len
    nblocks = s.length // M
    if nblocks < 1:
        return _not_applicable(name, "no complete block")
    mu = M / 2 + (9 + (-1) ** (M + 1)) / 36 - (M / 3 + 2 / 9) / 2**M
    blocks = s.bits[: nblocks * M].reshape(nblocks, M)
    sign = (-1) ** M
    t = np.array([sign * (berlekamp_massey(b.tolist()) - mu) + 2 / 9 for b in blocks])
    edges = [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5]
    v = np.bincount(np.searchsorted(edges, t, side="left"), minlength=7)
    expected = nblocks * np.asarray(_LC_PI)
    chi2 = float(((v - expected) ** 2 / expected).sum())
    return TestResult(name, [_igamc(3, chi2 / 2)], statistic=chi2)


# 11. serial


def _pattern_counts(bits: np.ndarray, m: int) -> np.ndarray:
    ext = np.concatenate([bits, bits[: m - 1]]).astype(np.int64)
    return np.bincount(_window_values(ext, m), minlength=1 << m)


def _psi2(bits: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    counts = _pattern_counts(bits, m).astype(np.float64)
    n = bits.size
    return float((2**m / n) * (counts**2).sum() - n)


def serial(s: BitStream, m: int = 16, relaxed: bool = False) -> TestResult:
    name = "Serial"
    min_len = 1 << (m + 3)  # m < floor(log2 n) - 2
    if (r := _too_short(name, s, min_len, relaxed)) is not None:
        return r
    psi_m, psi_m1, psi_m2 = (_psi2(s.bits, m - i) for i in range(3))
    d1 = psi_m - psi_m1
    d2 = psi_m - 2 * psi_m1 + psi_m2
    p1 = _igamc(2 ** (m - 2), d1 / 2)
    p2 = _igamc(2 ** (m - 3), d2 / 2)
    return TestResult(
        name, [p1, p2], statistic=d1,
        sub_results=[{"del_psi2": d1, "p_value": p1}, {"del2_psi2": d2, "p_value": p2}],
    )


# 12. approximate entropy


def _phi(bits: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    c = _pattern_counts(bits, m) / bits.size
    c = c[c > 0]
    return float((c * np.log(c)).sum())


def approximate_entropy(s: BitStream, m: int = 10, relaxed: bool = False) -> TestResult:
    name = "Approximate Entropy"
    min_len = 1 << (m + 6)  # m < floor(log2 n) - 5
    if (r := _too_short(name, s, min_len, relaxed)) is not None:
        return r
    n = s.length
    apen = _phi(s.bits, m) - _phi(s.bits, m + 1)
    chi2 = 2 * n * (math.log(2) - apen)
    return TestResult(name, [_igamc(2 ** (m - 1), chi2 / 2)], statistic=chi2)


# 13. cumulative sums


def _cusum_p(z: int, n: int) -> float:
    sq = math.sqrt(n)
    k1 = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
    k2 = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
    s1 = (norm.cdf((4 * k1 + 1) * z / sq) - norm.cdf((4 * k1 - 1) * z / sq)).sum()
    s2 = (norm.cdf((4 * k2 + 3) * z / sq) - norm.cdf((4 * k2 + 1) * z / sq)).sum()
    return float(min(1.0, max(0.0, 1 - s1 + s2)))


def cumulative_sums(s: BitStream, mode: str = "forward", relaxed: bool = False) -> TestResult:
    if mode not in ("forward", "reverse"):
        raise ValueError("mode must be 'forward' or 'reverse'")
    name = f"Cumulative Sums ({mode.capitalize()})"
    if (r := _too_short(name, s, 100, relaxed)) is not None:
        return r
    x = _pm1(s)
    if mode == "reverse":
        x = x[::-1]
    z = int(np.abs(np.cumsum(x)).max())
    if z == 0:
        return TestResult(name, [1.0], statistic=0.0)
    return TestResult(name, [_cusum_p(z, s.length)], statistic=float(z))


def _cusum_both(s: BitStream, relaxed: bool = False) -> TestResult:
    fwd = cumulative_sums(s, "forward", relaxed)
    rev = cumulative_sums(s, "reverse", relaxed)
    if not fwd.applicable:
        return TestResult("Cumulative Sums", applicable=False, note=fwd.note)
    return TestResult(
        "Cumulative Sums",
        fwd.p_values + rev.p_values,
        [{"mode": "forward", "z": fwd.statistic, "p_value": fwd.p_value},
         {"mode": "reverse", "z": rev.statistic, "p_value": rev.p_value}],
    )


# 14./15. random excursions


def _excursion_walk(s: BitStream) -> tuple[np.ndarray, np.ndarray, int]:
    walk = np.cumsum(_pm1(s))
    zeros = walk == 0
    cycles = int(zeros.sum()) + (1 if walk[-1] != 0 else 0)
    # cycle index of each step; a zero closes the cycle it belongs to
    cycle_id = np.concatenate([[0], np.cumsum(zeros)[:-1]])
    return walk, cycle_id, cycles


def _min_cycles(n: int) -> float:
    return max(0.005 * math.sqrt(n), 500)


def _excursion_pi(x: int) -> np.ndarray:
    ax = abs(x)
    q = 1 - 1 / (2 * ax)
    pi = [1 - 1 / (2 * ax)]
    pi += [(1 / (4 * x * x)) * q ** (k - 1) for k in range(1, 5)]
    pi.append((1 / (2 * ax)) * q**4)
    return np.array(pi)


def random_excursions(s: BitStream, relaxed: bool = False) -> TestResult:
    name = "Random Excursions"
    if (r := _too_short(name, s, RECOMMENDED_LENGTH, relaxed)) is not None:
        return r
    walk, cycle_id, J = _excursion_walk(s)
    if J < _min_cycles(s.length) and not relaxed:
        return _not_applicable(name, f"only {J} cycles; at least 500 required")
    pvals, subs = [], []
    for x in (-4, -3, -2, -1, 1, 2, 3, 4):
        visits = np.bincount(cycle_id[walk == x], minlength=J)[:J]
        nu = np.bincount(np.minimum(visits, 5), minlength=6)
        expected = J * _excursion_pi(x)
        chi2 = float(((nu - expected) ** 2 / expected).sum())
        p = _igamc(2.5, chi2 / 2)
        pvals.append(p)
        subs.append({"state": x, "chi2": chi2, "p_value": p, "nu": nu.tolist()})
    return TestResult(name, pvals, subs, statistic=float(J))


def random_excursions_variant(s: BitStream, relaxed: bool = False) -> TestResult:
    name = "Random Excursions Variant"
    if (r := _too_short(name, s, RECOMMENDED_LENGTH, relaxed)) is not None:
        return r
    walk, _, J = _excursion_walk(s)
    if J < _min_cycles(s.length) and not relaxed:
        return _not_applicable(name, f"only {J} cycles; at least 500 required")
    pvals, subs = [], []
    for x in [*range(-9, 0), *range(1, 10)]:
        count = int(np.count_nonzero(walk == x))
        p = float(erfc(abs(count - J) / math.sqrt(2 * J * (4 * abs(x) - 2))))
        pvals.append(p)
        subs.append({"state": x, "count": count, "p_value": p})
    return TestResult(name, pvals, subs, statistic=float(J))


# --------------------------------------------------------------------------
# battery

BATTERY: tuple[tuple[str, Callable[[BitStream], TestResult]], ...] = (
    ("01", frequency_monobit),
    ("02", block_frequency),
    ("03", runs_test),
    ("04", longest_run_of_ones),
    ("05", binary_matrix_rank),
    ("06", dft_spectral),
    ("07", non_overlapping_template),
    ("08", overlapping_template),
    ("09", maurer_universal),
    ("10", linear_complexity),
    ("11", serial),
    ("12", approximate_entropy),
    ("13", _cusum_both),
    ("14", random_excursions),
    ("15", random_excursions_variant),
)


@dataclass
class BatteryReport:
    results: list[TestResult]
    stream_length: int
    source: str = ""

    @property
    def verdict(self) -> str:
        ok = all(r.passed for r in self.results if r.applicable)
        return "Random" if ok else "Nonrandom"

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "stream_length": self.stream_length,
            "verdict": self.verdict,
            "alpha": ALPHA,
            "results": [r.to_dict() for r in self.results],
        }

    def to_text(self) -> str:
        def concl(p):
            return "Random" if p >= ALPHA else "Non-Random"

        lines = []
        if self.source:
            lines.append(f"Test Data File: {self.source}")
            lines.append("")
        lines.append(f"{'Type of Test':<52}{'P-Value':<24}Conclusion")
        # the two cumulative-sums directions get their own numbers, as in the published tables
        number = 0
        for r in self.results:
            number += 1
            label = f"{number:02d}. {r.test_name} Test"
            if not r.applicable:
                lines.append(f"{label:<52}{'-':<24}Not applicable ({r.note})")
                if r.test_name == "Cumulative Sums":
                    number += 1
            elif r.test_name == "Cumulative Sums":
                for i, sub in enumerate(r.sub_results):
                    lab = f"{number + i:02d}. Cumulative Sums ({sub['mode'].capitalize()}) Test"
                    lines.append(f"{lab:<52}{sub['p_value']!r:<24}{concl(sub['p_value'])}")
                number += 1
            elif r.test_name == "Random Excursions":
                lines.append(f"{label}:")
                lines.append(f"{'':16}{'State':<12}{'Chi Squared':<24}{'P-Value':<24}Conclusion")
                for sub in r.sub_results:
                    lines.append(f"{'':16}{sub['state']:<+12d}{sub['chi2']!r:<24}{sub['p_value']!r:<24}{concl(sub['p_value'])}")
            elif r.test_name == "Random Excursions Variant":
                lines.append(f"{label}:")
                lines.append(f"{'':16}{'State':<12}{'COUNTS':<24}{'P-Value':<24}Conclusion")
                for sub in r.sub_results:
                    lines.append(f"{'':16}{sub['state']:<+12d}{sub['count']:<24d}{sub['p_value']!r:<24}{concl(sub['p_value'])}")
            elif len(r.p_values) > 1:
                lines.append(f"{label}:")
                for p in r.p_values:
                    lines.append(f"{'':52}{p!r:<24}{concl(p)}")
            else:
                lines.append(f"{label:<52}{r.p_value!r:<24}{concl(r.p_value)}")
        lines.append("")
        lines.append(f"Verdict: {self.verdict}")
        return "\n".join(lines) + "\n"


def run_battery(s: BitStream, source: str = "") -> BatteryReport:
    """All fifteen tests with default parameters."""
    if s.length < RECOMMENDED_LENGTH:
        warnings.warn(
            f"stream of {s.length} bits is shorter than the recommended {RECOMMENDED_LENGTH}",
            stacklevel=2,
        )
    results = [fn(s) for _, fn in BATTERY]
    return BatteryReport(results, s.length, source)


# --------------------------------------------------------------------------
# multi-stream analysis (proportion of passing sequences, p-value uniformity)

UNIFORMITY_ALPHA = 1e-4
MIN_UNIFORMITY_STREAMS = 55


@dataclass
class ProportionRow:
    test_name: str
    streams: int
    passed: int
    uniformity_p: float | None

    @property
    def proportion(self) -> float:
        return self.passed / self.streams if self.streams else float("nan")

    def proportion_range(self) -> tuple[float, float]:
        """Acceptance band ``(1-alpha) +/- 3 sqrt(alpha(1-alpha)/s)``."""
        p = 1 - ALPHA
        half = 3 * math.sqrt(p * (1 - p) / self.streams)
        return p - half, p + half

    @property
    def proportion_ok(self) -> bool:
        return self.streams > 0 and self.proportion >= self.proportion_range()[0]

    @property
    def uniformity_ok(self) -> bool | None:
        return None if self.uniformity_p is None else self.uniformity_p >= UNIFORMITY_ALPHA


@dataclass
class SubstreamReport:
    rows: list[ProportionRow]
    substreams: int
    substream_length: int
    source: str = ""

    @property
    def verdict(self) -> str:
        ok = all(r.proportion_ok and r.uniformity_ok is not False for r in self.rows if r.streams)
        return "Random" if ok else "Nonrandom"

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "substreams": self.substreams,
            "substream_length": self.substream_length,
            "verdict": self.verdict,
            "rows": [
                {"test_name": r.test_name, "streams": r.streams, "passed": r.passed,
                 "proportion": r.proportion, "proportion_ok": r.proportion_ok,
                 "uniformity_p": r.uniformity_p, "uniformity_ok": r.uniformity_ok}
                for r in self.rows
            ],
        }

    def to_text(self) -> str:
        lines = [f"Substreams: {self.substreams} x {self.substream_length} bits"
                 + (f" from {self.source}" if self.source else ""), ""]
        lines.append(f"{'Test':<44}{'Proportion':<14}{'Uniformity P':<16}Conclusion")
        for r in self.rows:
            if not r.streams:
                lines.append(f"{r.test_name:<44}{'-':<14}{'-':<16}Not applicable")
                continue
            unif = "-" if r.uniformity_p is None else f"{r.uniformity_p:.6f}"
            concl = "Random" if r.proportion_ok and r.uniformity_ok is not False else "Non-Random"
            lines.append(f"{r.test_name:<44}{f'{r.passed}/{r.streams}':<14}{unif:<16}{concl}")
        lines.append("")
        lines.append(f"Verdict: {self.verdict}")
        return "\n".join(lines) + "\n"


def uniformity_p_value(p_values) -> float:
    """Chi-squared test of p-values over ten equal bins, ``igamc(9/2, chi2/2)``."""
    p = np.asarray(p_values, dtype=float)
    counts = np.bincount(np.minimum((p * 10).astype(int), 9), minlength=10)
    expected = p.size / 10
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    return _igamc(4.5, chi2 / 2)


def _sub_labels(r: TestResult) -> list[str]:
    if r.test_name == "Cumulative Sums":
        return ["Cumulative Sums (Forward)", "Cumulative Sums (Reverse)"]
    if r.test_name == "Random Excursions":
        return [f"Random Excursions (x={s['state']:+d})" for s in r.sub_results]
    if r.test_name == "Random Excursions Variant":
        return [f"Random Excursions Variant (x={s['state']:+d})" for s in r.sub_results]
    if len(r.p_values) > 1:
        return [f"{r.test_name} #{i + 1}" for i in range(len(r.p_values))]
    return [r.test_name]


def substream_analysis(s: BitStream, count: int, source: str = "") -> SubstreamReport:
    """Run the battery on ``count`` equal consecutive substreams and aggregate.

    Each p-value position (template, excursion state, cusum mode) is its own
    row.  Uniformity is only assessed with at least 55 contributing streams.
    """
    if count < 1:
        raise ValueError("count must be positive")
    length = s.length // count
    if length < 1:
        raise ValueError("stream too short for that many substreams")
    collected: dict[str, list[float]] = {}
    order: list[str] = []
    for i in range(count):
        part = BitStream(s.bits[i * length:(i + 1) * length])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = run_battery(part)
        for r in report.results:
            labels = _sub_labels(r) if r.applicable else [r.test_name]
            for label in labels:
                if label not in collected:
                    collected[label] = []
                    order.append(label)
            if r.applicable:
                for label, p in zip(labels, r.p_values):
                    collected[label].append(p)
    rows = []
    for label in order:
        ps = collected[label]
        # placeholder row of a test that was applicable on other substreams
        if not ps and any(lab.startswith((label + " (", label + " #")) for lab in order):
            continue
        unif = uniformity_p_value(ps) if len(ps) >= MIN_UNIFORMITY_STREAMS else None
        rows.append(ProportionRow(label, len(ps), sum(p >= ALPHA for p in ps), unif))
    return SubstreamReport(rows, count, length, source)
