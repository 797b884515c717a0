import math

import numpy as np
import pytest
from scipy import stats

from qsaudit import qsim
from qsaudit.bitcore import column_means, ones_probability
from qsaudit.qsim import (
    CapacityError,
    Circuit,
    CircuitSpec,
    Gate,
    NoiseSpec,
    StateVector,
    apply_gate_noise,
    build_random_circuit,
    fsim,
    ideal_probability,
    sample,
    sample_circuit,
    sample_uniform,
    simulate,
    xeb_fidelity,
)

# CircuitSpec(2, 1, {"A": [(0, 1)]}, seed=11), recorded once and frozen
GOLDEN_N2_M1 = [
    ("sqrt_x", (0,)),
    ("sqrt_x", (1,)),
    ("fsim", (0, 1)),
    ("sqrt_w", (0,)),
    ("sqrt_y", (1,)),
]

LINE3 = {"A": [(0, 1)], "B": [(1, 2)], "C": [(2, 0)]}


def _bit(index, q, n):
    return (index >> (n - 1 - q)) & 1


def dense_unitary(gate, n):
    """Full 2^n x 2^n matrix of one gate, filled entry by entry."""
    u = gate.matrix()
    qs = gate.qubits
    dim = 2**n
    full = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            if any(_bit(i, q, n) != _bit(j, q, n) for q in range(n) if q not in qs):
                continue
            row = sum(_bit(i, q, n) << (len(qs) - 1 - k) for k, q in enumerate(qs))
            col = sum(_bit(j, q, n) << (len(qs) - 1 - k) for k, q in enumerate(qs))
            full[i, j] = u[row, col]
    return full


def dense_state(circuit):
    total = np.eye(2**circuit.n, dtype=complex)
    for gate in circuit.gates:
        total = dense_unitary(gate, circuit.n) @ total
    return total[:, 0]


class TestGates:
    @pytest.mark.parametrize("name", ["sqrt_x", "sqrt_y", "sqrt_w", "X", "Y", "Z"])
    def test_unitary(self, name):
        u = Gate(name, (0,)).matrix()
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-15)

    @pytest.mark.parametrize("name,pauli", [
        ("sqrt_x", [[0, 1], [1, 0]]),
        ("sqrt_y", [[0, -1j], [1j, 0]]),
    ])
    def test_square_root_of_pauli(self, name, pauli):
        u = Gate(name, (0,)).matrix()
        # (I - iP)/sqrt2 squares to -iP
        np.testing.assert_allclose(u @ u, -1j * np.asarray(pauli), atol=1e-15)

    def test_sqrt_x_entries(self):
        np.testing.assert_allclose(
            Gate("sqrt_x", (0,)).matrix(), np.array([[1, -1j], [-1j, 1]]) / math.sqrt(2), atol=1e-15)

    def test_fsim_defaults(self):
        u = fsim(math.pi / 2, math.pi / 6)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-15)
        assert u[1, 2] == pytest.approx(-1j)
        assert u[3, 3] == pytest.approx(np.exp(-1j * math.pi / 6))
        assert u[0, 0] == 1

    def test_fsim_zero_is_identity(self):
        np.testing.assert_allclose(fsim(0, 0), np.eye(4), atol=1e-15)

    def test_inverse_gate(self):
        g = Gate("fsim", (0, 1), (0.3, 0.7))
        np.testing.assert_allclose(g.inverse().matrix() @ g.matrix(), np.eye(4), atol=1e-15)

    def test_unknown_gate(self):
        with pytest.raises(ValueError):
            Gate("cz", (0, 1)).matrix()


class TestCircuitConstruction:
    def test_zero_cycles(self):
        c = build_random_circuit(CircuitSpec(4, 0, {}))
        assert len(c.moments) == 1
        assert [g.qubits for g in c.gates] == [(0,), (1,), (2,), (3,)]

    def test_golden_gate_list(self):
        c = build_random_circuit(CircuitSpec(2, 1, {"A": [(0, 1)]}, seed=11))
        assert [(g.name, g.qubits) for g in c.gates] == GOLDEN_N2_M1
        assert c.gates[2].params == (math.pi / 2, math.pi / 6)

    def test_no_repeated_single_qubit_gate(self):
        violations = 0
        for seed in range(1000):
            c = build_random_circuit(CircuitSpec.grid(2, 3, m=6, seed=seed))
            layers = [mo for mo in c.moments if len(mo[0].qubits) == 1]
            for prev, cur in zip(layers, layers[1:]):
                violations += sum(a.name == b.name for a, b in zip(prev, cur))
        assert violations == 0

    def test_all_three_gates_used(self):
        c = build_random_circuit(CircuitSpec.grid(3, 4, m=14, seed=0))
        assert {g.name for g in c.gates} == {"sqrt_x", "sqrt_y", "sqrt_w", "fsim"}

    def test_pattern_sequence_order(self):
        spec = CircuitSpec.grid(3, 4, m=8, seed=0)
        c = build_random_circuit(spec)
        two_qubit = [mo for mo in c.moments if len(mo[0].qubits) == 2]
        for label, mo in zip("ABCDCDAB", two_qubit):
            assert [g.qubits for g in mo] == spec.patterns[label]

    def test_grid_couplers_disjoint_and_complete(self):
        classes = qsim.grid_couplers(3, 4)
        edges = [e for v in classes.values() for e in v]
        assert len(edges) == len(set(edges)) == 3 * 3 + 2 * 4
        for v in classes.values():
            qubits = [q for e in v for q in e]
            assert len(qubits) == len(set(qubits))

    def test_grid_shape(self):
        assert qsim.grid_shape(12) == (3, 4)
        assert qsim.grid_shape(7) == (1, 7)

    @pytest.mark.parametrize("patterns", [
        {"A": [(0, 0)]},
        {"A": [(0, 1), (1, 2)]},
        {"A": [(0, 5)]},
    ])
    def test_invalid_patterns(self, patterns):
        with pytest.raises(ValueError):
            CircuitSpec(3, 1, patterns)

    def test_undefined_label(self):
        with pytest.raises(ValueError):
            CircuitSpec(3, 2, {"A": [(0, 1)]}, pattern_sequence=["A", "B"])

    def test_json_round_trip(self, tmp_path):
        spec = CircuitSpec.grid(2, 3, m=5, seed=9)
        spec.save(tmp_path / "c.json")
        again = CircuitSpec.load(tmp_path / "c.json")
        assert again == spec
        assert build_random_circuit(again).gates == build_random_circuit(spec).gates


class TestSimulation:
    def test_empty_circuit(self):
        psi = simulate(Circuit(3, ())).amplitudes
        np.testing.assert_array_equal(psi, np.eye(8)[0])

    def test_sqrt_x_single_qubit(self):
        psi = simulate(Circuit(1, ((Gate("sqrt_x", (0,)),),))).amplitudes
        np.testing.assert_allclose(psi, np.array([1, -1j]) / math.sqrt(2), atol=1e-15)
        np.testing.assert_allclose(np.abs(psi) ** 2, [0.5, 0.5], atol=1e-15)

    def test_qubit_zero_is_most_significant(self):
        psi = simulate(Circuit(3, ((Gate("X", (0,)),),))).amplitudes
        assert psi[0b100] == 1

    @pytest.mark.parametrize("seed", range(50))
    def test_three_qubits_against_dense_unitary(self, seed):
        rng = np.random.default_rng(seed)
        spec = CircuitSpec(3, int(rng.integers(1, 7)), LINE3, pattern_sequence=list("ABC"),
                           theta=float(rng.uniform(0, math.pi)), phi=float(rng.uniform(0, math.pi)),
                           seed=seed)
        circuit = apply_gate_noise(build_random_circuit(spec), 0.2, seed)
        np.testing.assert_allclose(simulate(circuit).amplitudes, dense_state(circuit), atol=1e-12)

    def test_reversed_qubit_order_on_two_qubit_gate(self):
        g = Gate("fsim", (2, 0), (0.4, 1.1))
        c = Circuit(3, ((Gate("sqrt_x", (0,)), Gate("sqrt_y", (2,))), (g,)))
        np.testing.assert_allclose(simulate(c).amplitudes, dense_state(c), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_inverse_round_trip(self, seed):
        c = build_random_circuit(CircuitSpec.grid(2, 4, m=10, seed=seed))
        state = simulate(c)
        back = simulate(c.inverse(), initial=state).amplitudes
        assert abs(back[0] - 1) <= 1e-9
        assert np.abs(back[1:]).max() <= 1e-9

    def test_capacity(self):
        with pytest.raises(CapacityError):
            simulate(Circuit(qsim.MAX_SIM_QUBITS + 1, ()))

    def test_ideal_probability(self):
        assert ideal_probability(StateVector.zero(4), "0000") == 1.0
        uniform = StateVector(np.full(16, 0.25, dtype=complex))
        assert ideal_probability(uniform, [1, 0, 1, 1]) == pytest.approx(1 / 16)

    def test_porter_thomas_second_moment(self):
        # deep random circuits: 2^n sum p^2 -> 2 on average
        values = []
        for seed in range(10):
            p = simulate(build_random_circuit(CircuitSpec.grid(3, 4, m=14, seed=seed))).probabilities()
            values.append(2**12 * np.sum(p**2))
        assert np.mean(values) == pytest.approx(2.0, abs=0.1)


class TestSampling:
    def test_zero_state_noise_free(self):
        bm = sample(StateVector.zero(5), 1000, seed=0)
        assert bm.shape == (1000, 5)
        assert ones_probability(bm) == 0.0

    def test_readout_flip_on_one_qubit(self):
        M = 50_000
        bm = sample(StateVector.zero(4), M, seed=1, noise=NoiseSpec(p01=[0, 0, 0.1, 0]))
        means = column_means(bm)
        assert abs(means[2] - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / M)
        np.testing.assert_array_equal(means[[0, 1, 3]], 0)

    def test_goodness_of_fit(self):
        state = simulate(build_random_circuit(CircuitSpec.grid(2, 5, m=10, seed=3)))
        M = 100_000
        counts = np.bincount(sample(state, M, seed=4).to_integers().astype(np.int64), minlength=1024)
        expected = state.probabilities() * M
        keep = expected >= 5
        obs = np.append(counts[keep], counts[~keep].sum())
        exp = np.append(expected[keep], expected[~keep].sum())
        exp *= obs.sum() / exp.sum()
        assert stats.chisquare(obs, exp).pvalue >= 1e-3

    def test_deterministic(self):
        state = simulate(build_random_circuit(CircuitSpec.grid(2, 3, m=4, seed=0)))
        assert sample(state, 500, seed=5) == sample(state, 500, seed=5)

    def test_uniform_sampler(self):
        bm = sample_uniform(12, 20_000, seed=0)
        assert bm.meta.origin == "classical-uniform"
        assert abs(ones_probability(bm) - 0.5) < 0.005

    def test_invalid_noise(self):
        with pytest.raises(ValueError):
            NoiseSpec(p01=0.7)
        with pytest.raises(ValueError):
            NoiseSpec(gate_pauli_rate=-0.1)


class TestGateNoise:
    def test_rate_zero_unchanged(self):
        c = build_random_circuit(CircuitSpec.grid(2, 2, m=3, seed=0))
        assert apply_gate_noise(c, 0.0, seed=1) is c

    def test_same_seed_same_paulis(self):
        c = build_random_circuit(CircuitSpec.grid(2, 3, m=5, seed=0))
        a, b = apply_gate_noise(c, 0.1, seed=7), apply_gate_noise(c, 0.1, seed=7)
        assert a == b
        assert len(a) > len(c)
        assert {g.name for g in a.gates} - {g.name for g in c.gates} <= {"X", "Y", "Z"}

    def test_insertion_rate(self):
        c = build_random_circuit(CircuitSpec.grid(3, 4, m=14, seed=0))
        touched = sum(len(g.qubits) for g in c.gates)
        inserted = np.mean([len(apply_gate_noise(c, 0.05, s)) - len(c) for s in range(40)])
        assert inserted == pytest.approx(0.05 * touched, rel=0.1)

    def test_noisy_sampling_deterministic(self):
        c = build_random_circuit(CircuitSpec.grid(2, 3, m=4, seed=0))
        noise = NoiseSpec(gate_pauli_rate=0.05)
        a = sample_circuit(c, 1000, seed=3, noise=noise, trajectories=7)
        assert a == sample_circuit(c, 1000, seed=3, noise=noise, trajectories=7)
        assert a.rows == 1000


class TestXeb:
    def test_all_zero_samples_on_zero_state(self):
        bm = sample(StateVector.zero(3), 100, seed=0)
        est = xeb_fidelity(bm, StateVector.zero(3))
        assert est.value == 2**3 - 1
        assert est.std_error == 0

    def test_ideal_and_uniform_limits(self):
        state = simulate(build_random_circuit(CircuitSpec.grid(2, 4, m=12, seed=1)))
        ideal = xeb_fidelity(sample(state, 50_000, seed=2), state)
        uniform = xeb_fidelity(sample_uniform(8, 50_000, seed=3), state)
        # the expectation of the ideal estimator is 2^n sum p^2 - 1
        expected = 2**8 * np.sum(state.probabilities() ** 2) - 1
        assert abs(ideal.value - expected) <= 4 * ideal.std_error
        assert abs(uniform.value) <= 4 * uniform.std_error

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            xeb_fidelity(sample_uniform(3, 10, seed=0), StateVector.zero(4))

    def test_pooled(self):
        a = qsim.XebEstimate(1.0, 0.1, 100)
        b = qsim.XebEstimate(0.0, 0.1, 300)
        pooled = qsim.pooled_xeb([a, b])
        assert pooled.value == pytest.approx(0.25)
        assert pooled.M == 400


@pytest.fixture(scope="module")
def deep_state():
    return simulate(build_random_circuit(CircuitSpec.grid(3, 4, m=14, seed=0)))


class TestReadoutBias:
    def test_one_to_zero_dominant_lowers_p1(self, deep_state):
        bm = sample(deep_state, 100_000, seed=1, noise=NoiseSpec(p01=0.01, p10=0.031))
        assert ones_probability(bm) < 0.5

    def test_zero_to_one_dominant_raises_p1(self, deep_state):
        bm = sample(deep_state, 100_000, seed=1, noise=NoiseSpec(p01=0.031, p10=0.01))
        assert ones_probability(bm) > 0.5
