"""Desk-scale random-circuit sampling.

Circuits follow the supremacy-style layout: each cycle applies a random
layer of ``sqrt(X)``, ``sqrt(Y)``, ``sqrt(W)`` gates (never repeating a
qubit's previous choice) and then fSim gates on one class of grid couplers;
a final random single-qubit layer precedes measurement.

Amplitude index convention: qubit 0 is the most significant bit, matching
:meth:`BitMatrix.to_integers`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bitcore import BitMatrix, DatasetMeta

MAX_SIM_QUBITS = 24
NORM_TOL = 1e-10
SINGLE_QUBIT_GATES = ("sqrt_x", "sqrt_y", "sqrt_w")
DEFAULT_THETA = math.pi / 2
DEFAULT_PHI = math.pi / 6
DEFAULT_SEQUENCE = "ABCDCDAB"


class CapacityError(ValueError):
    pass


_I2 = np.eye(2, dtype=complex)
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_W = (_PAULI["X"] + _PAULI["Y"]) / math.sqrt(2)
_SQRT = {
    "sqrt_x": (_I2 - 1j * _PAULI["X"]) / math.sqrt(2),
    "sqrt_y": (_I2 - 1j * _PAULI["Y"]) / math.sqrt(2),
    "sqrt_w": (_I2 - 1j * _W) / math.sqrt(2),
}


def fsim(theta: float, phi: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, -1j * s, 0],
            [0, -1j * s, c, 0],
            [0, 0, 0, np.exp(-1j * phi)],
        ],
        dtype=complex,
    )


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    adjoint: bool = False

    def matrix(self) -> np.ndarray:
        if self.name in _SQRT:
            u = _SQRT[self.name]
        elif self.name in _PAULI:
            u = _PAULI[self.name]
        elif self.name == "fsim":
            u = fsim(*self.params)
        else:
            raise ValueError(f"unknown gate {self.name!r}")
        return u.conj().T if self.adjoint else u

    def inverse(self) -> "Gate":
        return Gate(self.name, self.qubits, self.params, not self.adjoint)


@dataclass(frozen=True)
class Circuit:
    n: int
    moments: tuple[tuple[Gate, ...], ...]

    @property
    def gates(self) -> list[Gate]:
        return [g for moment in self.moments for g in moment]

    def inverse(self) -> "Circuit":
        return Circuit(
            self.n,
            tuple(tuple(g.inverse() for g in reversed(mo)) for mo in reversed(self.moments)),
        )

    def __len__(self) -> int:
        return len(self.gates)


# --------------------------------------------------------------------------
# circuit description


def grid_couplers(rows: int, cols: int) -> dict[str, list[tuple[int, int]]]:
    """Four disjoint coupler classes of a ``rows x cols`` grid.

    A/B are horizontal couplers starting in even/odd columns, C/D vertical
    couplers starting in even/odd rows.  Qubit ``(r, c)`` has index ``r*cols + c``.
    """
    classes: dict[str, list[tuple[int, int]]] = {"A": [], "B": [], "C": [], "D": []}
    for r in range(rows):
        for c in range(cols):
            q = r * cols + c
            if c + 1 < cols:
                classes["A" if c % 2 == 0 else "B"].append((q, q + 1))
            if r + 1 < rows:
                classes["C" if r % 2 == 0 else "D"].append((q, q + cols))
    return classes


def grid_shape(n: int) -> tuple[int, int]:
    """Most square ``rows x cols`` factorisation of ``n`` with rows <= cols."""
    rows = max(r for r in range(1, math.isqrt(n) + 1) if n % r == 0)
    return rows, n // rows


@dataclass
class CircuitSpec:
    n: int
    m: int
    patterns: dict[str, list[tuple[int, int]]]
    pattern_sequence: list[str] = field(default_factory=lambda: list(DEFAULT_SEQUENCE))
    theta: float = DEFAULT_THETA
    phi: float = DEFAULT_PHI
    seed: int = 0

    def __post_init__(self):
        self.patterns = {k: [tuple(e) for e in v] for k, v in self.patterns.items()}
        self.pattern_sequence = list(self.pattern_sequence)
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.m < 0:
            raise ValueError("m must be non-negative")
        for label, edges in self.patterns.items():
            used: set[int] = set()
            for a, b in edges:
                if not (0 <= a < self.n and 0 <= b < self.n) or a == b:
                    raise ValueError(f"pattern {label}: invalid edge ({a}, {b})")
                if a in used or b in used:
                    raise ValueError(f"pattern {label}: edges must be disjoint")
                used.update((a, b))
        if self.m and not self.pattern_sequence:
            raise ValueError("pattern sequence is empty")
        used_labels = {self.pattern_sequence[i % len(self.pattern_sequence)]
                       for i in range(min(self.m, len(self.pattern_sequence)))}
        missing = used_labels - set(self.patterns)
        if missing:
            raise ValueError(f"pattern sequence uses undefined labels {sorted(missing)}")

    @classmethod
    def grid(cls, rows: int, cols: int, m: int, seed: int = 0, **kwargs) -> "CircuitSpec":
        return cls(rows * cols, m, grid_couplers(rows, cols), seed=seed, **kwargs)

    @property
    def topology(self) -> list[tuple[int, int]]:
        return sorted({e for edges in self.patterns.values() for e in edges})

    def to_json(self) -> str:
        doc = asdict(self)
        doc["patterns"] = {k: [list(e) for e in v] for k, v in self.patterns.items()}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CircuitSpec":
        return cls(**json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "CircuitSpec":
        return cls.from_json(Path(path).read_text())


def _single_layer(rng: np.random.Generator, previous: list[int] | None, n: int) -> list[int]:
    if previous is None:
        return rng.integers(0, 3, size=n).tolist()
    # one of the two gates different from the previous choice
    step = rng.integers(1, 3, size=n)
    return ((np.asarray(previous) + step) % 3).tolist()


def build_random_circuit(spec: CircuitSpec) -> Circuit:
    rng = np.random.default_rng(spec.seed)
    moments: list[tuple[Gate, ...]] = []
    prev = None
    for cycle in range(spec.m):
        choice = _single_layer(rng, prev, spec.n)
        moments.append(tuple(Gate(SINGLE_QUBIT_GATES[c], (q,)) for q, c in enumerate(choice)))
        label = spec.pattern_sequence[cycle % len(spec.pattern_sequence)]
        if spec.patterns[label]:
            moments.append(
                tuple(Gate("fsim", (a, b), (spec.theta, spec.phi)) for a, b in spec.patterns[label])
            )
        prev = choice
    final = _single_layer(rng, prev, spec.n)
    moments.append(tuple(Gate(SINGLE_QUBIT_GATES[c], (q,)) for q, c in enumerate(final)))
    return Circuit(spec.n, tuple(moments))


def apply_gate_noise(circuit: Circuit, rate: float, seed) -> Circuit:
    """One Pauli-trajectory realisation of symmetric gate noise.

    After every gate, each qubit it touched independently receives a uniformly
    chosen X, Y or Z with probability ``rate``.
    """
    if not 0 <= rate <= 0.5:
        raise ValueError("rate must lie in [0, 0.5]")
    if rate == 0:
        return circuit
    rng = np.random.default_rng(seed)
    moments: list[tuple[Gate, ...]] = []
    for moment in circuit.moments:
        moments.append(moment)
        errors = []
        for g in moment:
            for q in g.qubits:
                if rng.random() < rate:
                    errors.append(Gate("XYZ"[rng.integers(0, 3)], (q,)))
        if errors:
            moments.append(tuple(errors))
    return Circuit(circuit.n, tuple(moments))


# --------------------------------------------------------------------------
# simulation


@dataclass
class StateVector:
    amplitudes: np.ndarray

    @property
    def n(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        amps = np.zeros(2**n, dtype=complex)
        amps[0] = 1
        return cls(amps)


def _apply(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    u = gate.matrix()
    if len(gate.qubits) == 1:
        (q,) = gate.qubits
        view = psi.reshape(2**q, 2, 2 ** (n - q - 1))
        return np.einsum("ab,ibj->iaj", u, view).reshape(-1)
    a, b = gate.qubits
    tensor = psi.reshape((2,) * n)
    out = np.tensordot(u.reshape(2, 2, 2, 2), tensor, axes=([2, 3], [a, b]))
    return np.moveaxis(out, (0, 1), (a, b)).reshape(-1)


def simulate(circuit: Circuit, initial: StateVector | None = None, check_norm: bool = True) -> StateVector:
    """Statevector ``U |0>`` (or ``U |initial>``)."""
    n = circuit.n
    if n > MAX_SIM_QUBITS:
        raise CapacityError(f"{n} qubits exceeds the simulator limit of {MAX_SIM_QUBITS}")
    psi = StateVector.zero(n).amplitudes if initial is None else initial.amplitudes.copy()
    for moment in circuit.moments:
        for gate in moment:
            psi = _apply(psi, gate, n)
        if check_norm:
            drift = abs(np.vdot(psi, psi).real - 1)
            if drift > NORM_TOL:
                raise ArithmeticError(f"norm drifted by {drift:.2e}")
    return StateVector(psi)


def bits_to_index(x: Sequence[int] | str) -> int:
    if isinstance(x, str):
        return int(x, 2)
    idx = 0
    for b in x:
        idx = (idx << 1) | int(b)
    return idx


def ideal_probability(state: StateVector, x: Sequence[int] | str) -> float:
    if len(x) != state.n:
        raise ValueError(f"bit-string has {len(x)} bits, state has {state.n} qubits")
    return float(abs(state.amplitudes[bits_to_index(x)]) ** 2)


# --------------------------------------------------------------------------
# sampling


@dataclass
class NoiseSpec:
    """Per-qubit readout flips ``p(0->1)``, ``p(1->0)`` and a per-gate Pauli rate."""

    p01: float | Sequence[float] = 0.0
    p10: float | Sequence[float] = 0.0
    gate_pauli_rate: float = 0.0

    def __post_init__(self):
        for name in ("p01", "p10"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any((arr < 0) | (arr > 0.5)):
                raise ValueError(f"{name} probabilities must lie in [0, 0.5]")
        if not 0 <= self.gate_pauli_rate <= 0.5:
            raise ValueError("gate_pauli_rate must lie in [0, 0.5]")

    def readout(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        p01 = np.broadcast_to(np.asarray(self.p01, dtype=float), (n,))
        p10 = np.broadcast_to(np.asarray(self.p10, dtype=float), (n,))
        return p01, p10

    @property
    def is_noiseless(self) -> bool:
        return (
            not np.any(np.asarray(self.p01)) and not np.any(np.asarray(self.p10))
            and self.gate_pauli_rate == 0
        )


def indices_to_bits(indices: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    return ((indices.astype(np.uint64)[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)


def apply_readout(bits: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    p01, p10 = noise.readout(bits.shape[1])
    if not (p01.any() or p10.any()):
        return bits
    flip_p = np.where(bits == 1, p10, p01)
    flips = rng.random(bits.shape) < flip_p
    return bits ^ flips.astype(np.uint8)


def sample(
    state: StateVector,
    M: int,
    seed,
    noise: NoiseSpec | None = None,
    meta: DatasetMeta | None = None,
) -> BitMatrix:
    """``M`` inverse-CDF draws from ``|amplitude|^2`` followed by readout flips."""
    rng = np.random.default_rng(seed)
    n = state.n
    cdf = np.cumsum(state.probabilities())
    u = rng.random(M) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    bits = indices_to_bits(idx, n)
    if noise is not None:
        bits = apply_readout(bits, noise, rng)
    return BitMatrix.from_array(bits, meta or DatasetMeta(name="simulated", n=n, origin="simulator"))


def sample_uniform(n: int, M: int, seed, meta: DatasetMeta | None = None) -> BitMatrix:
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(M, n), dtype=np.uint8)
    return BitMatrix.from_array(bits, meta or DatasetMeta(name="uniform", n=n, origin="classical-uniform"))


def sample_circuit(
    circuit: Circuit,
    M: int,
    seed: int,
    noise: NoiseSpec | None = None,
    trajectories: int = 50,
    meta: DatasetMeta | None = None,
) -> BitMatrix:
    """Samples from ``circuit`` with optional gate noise spread over Pauli trajectories."""
    noise = noise or NoiseSpec()
    if noise.gate_pauli_rate == 0:
        return sample(simulate(circuit), M, seed, noise, meta)
    seeds = np.random.SeedSequence(seed).spawn(2 * trajectories)
    shares = np.full(trajectories, M // trajectories)
    shares[: M % trajectories] += 1
    parts = []
    for t in range(trajectories):
        if shares[t] == 0:
            continue
        noisy = apply_gate_noise(circuit, noise.gate_pauli_rate, seeds[2 * t])
        parts.append(sample(simulate(noisy), int(shares[t]), seeds[2 * t + 1], noise).to_array())
    bits = np.concatenate(parts, axis=0)
    return BitMatrix.from_array(bits, meta or DatasetMeta(name="simulated", n=circuit.n, origin="simulator"))


# --------------------------------------------------------------------------
# cross-entropy benchmarking


@dataclass
class XebEstimate:
    value: float
    std_error: float
    M: int

    def to_dict(self) -> dict:
        return asdict(self)


def xeb_fidelity(samples: BitMatrix, state: StateVector) -> XebEstimate:
    """Linear XEB ``2^n <p(x)> - 1`` over the sampled bit-strings."""
    n = state.n
    if samples.cols != n:
        raise ValueError(f"samples have {samples.cols} qubits, state has {n}")
    probs = state.probabilities()[samples.to_integers().astype(np.int64)]
    M = probs.size
    scaled = (2.0**n) * probs
    value = float(scaled.mean() - 1)
    std = float(scaled.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return XebEstimate(value, std, M)


def pooled_xeb(estimates: Sequence[XebEstimate]) -> XebEstimate:
    """Sample-weighted mean of per-instance estimates."""
    total = sum(e.M for e in estimates)
    value = sum(e.value * e.M for e in estimates) / total
    var = sum((e.std_error * e.M) ** 2 for e in estimates) / total**2
    return XebEstimate(value, math.sqrt(var), total)
