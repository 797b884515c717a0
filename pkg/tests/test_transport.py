import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qsaudit.bitcore import BitMatrix, DatasetMeta, generate_biased, generate_uniform
from qsaudit.transport import (
    InconsistentDistancesError,
    TransportSample,
    distance_matrix,
    format_distance_matrix,
    parse_distance_matrix,
    to_transport,
    triangle_embed,
    wasserstein1,
)

values = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30)


def _s(v):
    return TransportSample(np.asarray(v, dtype=float))


class TestEmbedding:
    @pytest.mark.parametrize("row,expected", [
        ([1, 0], 0.5),
        ([0, 0, 0], 0.0),
        ([1] * 8, 255 / 256),
        ([0, 1, 1], 3 / 8),
    ])
    def test_values(self, row, expected):
        assert to_transport(BitMatrix.from_array([row])).values[0] == expected

    def test_exact_for_wide_rows(self):
        row = [1] * 56
        assert to_transport(BitMatrix.from_array([row])).values[0] == (2**56 - 1) / 2**56

    def test_carries_source(self):
        bm = generate_uniform(4, 3, seed=0, meta=DatasetMeta(name="x"))
        sample = to_transport(bm)
        assert (sample.source, sample.n, len(sample)) == ("x", 4, 3)


class TestWasserstein:
    def test_hand_example(self):
        assert wasserstein1(_s([0, 1]), _s([1, 1])) == 0.5

    def test_self_distance(self):
        a = to_transport(generate_uniform(10, 500, seed=0))
        assert wasserstein1(a, a) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            wasserstein1(_s([]), _s([0.5]))

    @given(values, values)
    @settings(max_examples=150, deadline=None)
    def test_against_scipy(self, a, b):
        expected = stats.wasserstein_distance(a, b)
        assert wasserstein1(_s(a), _s(b)) == pytest.approx(expected, abs=1e-12)

    @given(values, values)
    @settings(max_examples=100, deadline=None)
    def test_symmetry_exact(self, a, b):
        assert wasserstein1(_s(a), _s(b)) == wasserstein1(_s(b), _s(a))

    @given(values, st.integers(2, 4))
    @settings(max_examples=60, deadline=None)
    def test_replication_invariance(self, a, r):
        # duplicating every element leaves the empirical distribution unchanged
        b = [0.3, 0.9]
        assert wasserstein1(_s(a * r), _s(b)) == pytest.approx(wasserstein1(_s(a), _s(b)), abs=1e-12)

    @given(values, values, st.floats(-1, 1))
    @settings(max_examples=60, deadline=None)
    def test_translation_equals_shift(self, a, b, c):
        shifted = wasserstein1(_s(np.add(a, c)), _s(np.add(b, c)))
        assert shifted == pytest.approx(wasserstein1(_s(a), _s(b)), abs=1e-12)

    def test_pure_shift(self):
        a = np.linspace(0, 0.5, 11)
        assert wasserstein1(_s(a), _s(a + 0.25)) == pytest.approx(0.25, abs=1e-15)

    def test_triangle_inequality_random_triples(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b, c = (_s(rng.random(rng.integers(1, 40))) for _ in range(3))
            ab, bc, ac = wasserstein1(a, b), wasserstein1(b, c), wasserstein1(a, c)
            assert ac <= ab + bc + 1e-12

    def test_two_uniform_samples_close(self):
        a = to_transport(generate_uniform(20, 100_000, seed=1))
        b = to_transport(generate_uniform(20, 100_000, seed=2))
        assert wasserstein1(a, b) <= 0.01

    def test_bias_moves_distance(self):
        u = to_transport(generate_uniform(12, 20_000, seed=1))
        biased = to_transport(generate_biased(12, 20_000, 0.3, seed=2))
        assert wasserstein1(u, biased) > 0.1


class TestDistanceMatrix:
    def test_identical(self):
        a = _s([0.1, 0.2])
        np.testing.assert_array_equal(distance_matrix([a, a]), np.zeros((2, 2)))

    def test_metric_properties(self):
        samples = [to_transport(generate_biased(10, 2000 + 100 * i, p, seed=i))
                   for i, p in enumerate([0.4, 0.5, 0.6])]
        d = distance_matrix(samples)
        np.testing.assert_array_equal(d, d.T)
        np.testing.assert_array_equal(np.diag(d), 0)
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    assert d[i, k] <= d[i, j] + d[j, k] + 1e-12

    def test_needs_two(self):
        with pytest.raises(ValueError):
            distance_matrix([_s([0.0])])

    def test_text_round_trip(self):
        d = np.array([[0, 0.25, 0.5], [0.25, 0, 0.125], [0.5, 0.125, 0]])
        labels, parsed = parse_distance_matrix(format_distance_matrix(["a", "b", "c"], d))
        assert labels == ["a", "b", "c"]
        np.testing.assert_array_equal(parsed, d)


class TestTriangle:
    def test_right_triangle(self):
        tri = triangle_embed(3, 4, 5)
        np.testing.assert_allclose(tri.coordinates, [[0, 0], [3, 0], [0, 4]], atol=1e-12)
        assert not tri.degenerate

    def test_equilateral(self):
        tri = triangle_embed(1, 1, 1)
        np.testing.assert_allclose(tri.coordinates[2], [0.5, math.sqrt(3) / 2], atol=1e-12)

    def test_collinear(self):
        tri = triangle_embed(2, 1, 1)
        assert tri.degenerate
        np.testing.assert_allclose(tri.coordinates[2], [1.0, 0.0], atol=1e-12)

    def test_coincident_a_b(self):
        tri = triangle_embed(0, 0.3, 0.3)
        assert tri.degenerate
        np.testing.assert_allclose(tri.coordinates[2], [0.0, 0.3])

    def test_inconsistent(self):
        with pytest.raises(InconsistentDistancesError):
            triangle_embed(0, 0.3, 0.4)

    def test_negative(self):
        with pytest.raises(ValueError):
            triangle_embed(-1, 1, 1)

    @given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1))
    @settings(max_examples=100, deadline=None)
    def test_recovers_edge_lengths(self, ab, ac, bc):
        if max(ab, ac, bc) > (ab + ac + bc) / 2 - 1e-6:
            return
        c = triangle_embed(ab, ac, bc).coordinates
        assert np.linalg.norm(c[1] - c[0]) == pytest.approx(ab, abs=1e-9)
        assert np.linalg.norm(c[2] - c[0]) == pytest.approx(ac, abs=1e-9)
        assert np.linalg.norm(c[2] - c[1]) == pytest.approx(bc, abs=1e-9)
        assert c[2, 1] >= 0
