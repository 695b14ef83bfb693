import numpy as np
import pytest

from nahmlab import fixtures, model, torus
from nahmlab.errors import ValidationError

SIGMA = [np.array([[0, 1], [1, 0]], dtype=complex),
         np.array([[0, -1j], [1j, 0]], dtype=complex),
         np.array([[1, 0], [0, -1]], dtype=complex)]


class TestValidateModelSolution:
    def test_pauli_triple_valid(self):
        # Oracle: hand commutator [N2, N3] for N_i = -(i/2) sigma_i.
        nn = np.stack([-0.5j * s for s in SIGMA])
        comm = nn[1] @ nn[2] - nn[2] @ nn[1]
        assert np.allclose(comm, nn[0], atol=1e-15)
        ms = model.validate_model_solution(np.zeros((3, 2, 2), dtype=complex), nn)
        assert ms.rank == 2

    def test_diagonal_gamma_flat_valid(self):
        gamma = np.stack([2j * np.pi * np.diag([0.1, 0.7]) for _ in range(3)])
        ms = model.validate_model_solution(gamma, np.zeros_like(gamma))
        assert ms.is_flat()

    def test_noncommuting_gamma_rejected(self):
        gamma = np.stack([1j * SIGMA[0], 1j * SIGMA[1], np.zeros((2, 2), dtype=complex)])
        with pytest.raises(ValidationError) as exc:
            model.validate_model_solution(gamma, np.zeros_like(gamma))
        assert any("[Gamma_1,Gamma_2]" in name for name, _ in exc.value.violations)

    def test_nonskew_rejected(self):
        gamma = np.stack([np.eye(2, dtype=complex) for _ in range(3)])
        with pytest.raises(ValidationError) as exc:
            model.validate_model_solution(gamma, np.zeros_like(gamma))
        assert any("skew-Hermitian" in name for name, _ in exc.value.violations)

    def test_broken_su2_relation_rejected(self):
        nn = np.stack([-0.5j * s for s in SIGMA])
        nn[0] = 2 * nn[0]
        with pytest.raises(ValidationError):
            model.validate_model_solution(np.zeros((3, 2, 2), dtype=complex), nn)


class TestSu2Weights:
    def test_trivial_rank3(self):
        w = model.su2_weights(np.zeros((3, 3, 3), dtype=complex))
        assert w.weights == (1, 1, 1)

    def test_spin_half_casimir(self):
        nn = fixtures.su2_generators(2)
        cas = -(nn[0] @ nn[0] + nn[1] @ nn[1] + nn[2] @ nn[2])
        assert np.allclose(cas, 0.75 * np.eye(2))
        assert model.su2_weights(nn).weights == (2,)

    def test_spin_half_plus_trivial(self):
        nn = np.zeros((3, 3, 3), dtype=complex)
        nn[:, :2, :2] = fixtures.su2_generators(2)
        assert model.su2_weights(nn).weights == (2, 1)

    def test_random_partitions_recovered(self, rng):
        # Jordan and Casimir routes are cross-asserted inside; the external
        # oracle is the partition used to build the representation.
        for _ in range(200):
            r = int(rng.integers(1, 9))
            part = fixtures._random_partition(rng, r)
            nn = fixtures.rep_from_partition(part)
            q = fixtures.random_unitary(rng, r)
            nn = np.stack([q @ nn[i] @ q.conj().T for i in range(3)])
            assert model.su2_weights(nn).weights == tuple(sorted(part, reverse=True))


class TestSpectrumSet:
    def test_zero_gamma(self, cubic):
        ms = model.validate_model_solution(np.zeros((3, 4, 4), dtype=complex),
                                           np.zeros((3, 4, 4), dtype=complex))
        ss = model.spectrum_set(ms, cubic)
        assert len(ss.points) == 1
        assert ss.points[0].multiplicity == 4
        assert np.allclose(ss.points[0].point.coeffs, 0)

    def test_diagonal_readoff(self, cubic):
        a = (0.15, 0.25, 0.35)
        b = (0.65, 0.75, 0.85)
        ms = fixtures.flat_model([a, b])
        ss = model.spectrum_set(ms, cubic)
        locs = sorted(tuple(np.round(p.point.coeffs, 10)) for p in ss.points)
        assert locs == [a, b]

    def test_lattice_shift_invariance(self, cubic):
        ms = fixtures.flat_model([(0.2, 0.3, 0.4)])
        shifted = ms.gamma.copy()
        shifted[0] += 2j * np.pi * np.eye(1)  # shift by a dual lattice vector
        ms2 = model.validate_model_solution(shifted, ms.nn)
        s1 = model.spectrum_set(ms, cubic)
        s2 = model.spectrum_set(ms2, cubic)
        assert np.allclose(s1.points[0].point.coeffs, s2.points[0].point.coeffs)

    def test_gauge_invariance(self, cubic, rng):
        for _ in range(10):
            ms = fixtures.random_model_solution(rng, 4, conjugate=False)
            q = fixtures.random_unitary(rng, 4)
            conj = np.stack([q @ ms.gamma[i] @ q.conj().T for i in range(3)])
            ms2 = model.validate_model_solution(conj, np.stack(
                [q @ ms.nn[i] @ q.conj().T for i in range(3)]))
            s1 = model.spectrum_set(ms, cubic)
            s2 = model.spectrum_set(ms2, cubic)
            locs1 = sorted(tuple(np.round(p.point.coeffs, 8)) for p in s1.points)
            locs2 = sorted(tuple(np.round(p.point.coeffs, 8)) for p in s2.points)
            assert locs1 == locs2

    def test_quotient_injectivity_violation_rejected(self, cubic):
        gamma = np.zeros((3, 2, 2), dtype=complex)
        gamma[0] = 2j * np.pi * np.diag([0.0, 1.0])  # distinct raw, equal reduced
        ms = model.validate_model_solution(gamma, np.zeros_like(gamma))
        with pytest.raises(ValidationError):
            model.spectrum_set(ms, cubic)


class TestSingularitySet:
    def test_flat_zero_both_sides(self, cubic):
        ms = model.validate_model_solution(np.zeros((3, 2, 2), dtype=complex),
                                           np.zeros((3, 2, 2), dtype=complex))
        sing = model.singularity_set(ms, ms, cubic)
        assert len(sing.points) == 1
        assert np.allclose(sing.points[0].point.coeffs, 0)

    def test_disjoint_union(self, cubic):
        plus = fixtures.flat_model([(0.2, 0.2, 0.2)])
        minus = fixtures.flat_model([(0.6, 0.6, 0.6)])
        sing = model.singularity_set(plus, minus, cubic)
        assert len(sing.points) == 2
        pts = {tuple(np.round(p.point.coeffs, 8)) for p in sing.points}
        assert pts == {(0.2, 0.2, 0.2), (0.6, 0.6, 0.6)}
        for p in sing.points:
            assert (p.plus_nn is None) != (p.minus_nn is None)

    def test_twist_translates_set(self, cubic, cubic_dual):
        plus = fixtures.flat_model([(0.2, 0.3, 0.4)])
        minus = fixtures.flat_model([(0.7, 0.1, 0.5)])
        xi0 = torus.reduce([0.15, 0.05, 0.25], cubic_dual)
        sing = model.singularity_set(plus, minus, cubic)
        sing_tw = model.singularity_set(model.twist(plus, xi0), model.twist(minus, xi0), cubic)
        expected = sorted(
            tuple(np.round(torus.reduce(p.point.coeffs - xi0.coeffs, cubic_dual).coeffs, 8))
            for p in sing.points)
        got = sorted(tuple(np.round(p.point.coeffs, 8)) for p in sing_tw.points)
        assert expected == got

    def test_rank_mismatch(self, cubic):
        plus = fixtures.flat_model([(0.1, 0.1, 0.1)])
        minus = fixtures.flat_model([(0.1, 0.1, 0.1), (0.5, 0.5, 0.5)])
        with pytest.raises(ValidationError):
            model.singularity_set(plus, minus, cubic)

    def test_total_weight_bookkeeping(self, cubic, rng):
        for _ in range(5):
            plus = fixtures.random_model_solution(rng, 5)
            minus = fixtures.random_model_solution(rng, 5)
            sing = model.singularity_set(plus, minus, cubic)
            assert sum(p.plus_mult for p in sing.points) == 5
            assert sum(p.minus_mult for p in sing.points) == 5
            for p in sing.points:
                if p.plus_nn is not None:
                    assert p.weights_plus().total == p.plus_mult


class TestTwist:
    def test_zero_twist_identity(self, cubic_dual):
        ms = fixtures.spin_half_model()
        tw = model.twist(ms, torus.reduce([0, 0, 0], cubic_dual))
        assert np.array_equal(tw.gamma, ms.gamma)
        assert np.array_equal(tw.nn, ms.nn)

    def test_dual_lattice_twist_preserves_spectrum(self, cubic, cubic_dual):
        ms = fixtures.flat_model([(0.3, 0.4, 0.5)])
        # A dual lattice vector has integer coefficients; reduce() sends it to
        # 0, so twist by the raw covector directly.
        raw = model.ModelSolution(
            gamma=ms.gamma - 2j * np.pi * np.array([1.0, 0.0, 0.0])[:, None, None]
            * np.eye(1)[None, :, :],
            nn=ms.nn)
        s1 = model.spectrum_set(ms, cubic)
        s2 = model.spectrum_set(raw, cubic)
        assert np.allclose(s1.points[0].point.coeffs, s2.points[0].point.coeffs)

    def test_twist_shifts_spectrum(self, cubic, cubic_dual):
        ms = fixtures.flat_model([(0.5, 0.6, 0.7)])
        xi = torus.reduce([0.2, 0.2, 0.2], cubic_dual)
        tw = model.twist(ms, xi)
        s = model.spectrum_set(tw, cubic)
        assert np.allclose(s.points[0].point.coeffs, [0.3, 0.4, 0.5])
