import numpy as np
import pytest

from nahmlab import dirac, fixtures, flow, serialize, torus
from nahmlab.errors import GapError


def flat_curve(points, t_max=8.0, grid_n=201):
    return flow.constant_curve(fixtures.flat_model(points), t_max=t_max, grid_n=grid_n)


class TestCliffordModel:
    def test_relations_exact(self, clifford):
        eye = np.eye(2)
        for i in range(3):
            for j in range(3):
                anti = clifford.c[i] @ clifford.c[j] + clifford.c[j] @ clifford.c[i]
                target = -2.0 * eye if i == j else np.zeros((2, 2))
                assert np.array_equal(anti, target)

    def test_block_structure(self, clifford):
        dt = clifford.clif_dt()
        assert np.array_equal(dt[:2, 2:], -np.eye(2))
        assert np.array_equal(dt[2:, :2], np.eye(2))
        for i in range(3):
            dx = clifford.clif_dx(i)
            assert np.array_equal(dx[:2, 2:], clifford.c[i])
            assert np.array_equal(dx[2:, :2], clifford.c[i])
            assert np.array_equal(dx[:2, :2], np.zeros((2, 2)))


class TestBuildModeOperator:
    def test_flat_rank1_eigenvalues(self, clifford, cubic_dual):
        curve = flat_curve([(0.0, 0.0, 0.0)])
        xi = torus.reduce([0.2, 0.3, 0.1], cubic_dual)
        op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
        ev = np.sort(np.linalg.eigvalsh(op.d_at_sample(curve.a[0])))
        expect = 2 * np.pi * np.linalg.norm(xi.covector())
        assert np.allclose(ev, [-expect, expect])

    def test_hermiticity_random(self, clifford, cubic_dual, rng):
        ms = fixtures.random_model_solution(rng, 3)
        curve = fixtures.spectral_flow_curve(t_max=6.0, grid_n=61)
        xi = torus.reduce([0.23, 0.17, 0.31], cubic_dual)
        op = dirac.build_mode_operator(curve, (1, -1, 0), xi, clifford)
        for k in (0, 30, 60):
            d = op.d_at_sample(curve.a[k])
            assert np.linalg.norm(d - d.conj().T) < 1e-12
        d = dirac._assemble(clifford.c, ms.at(2.0), np.array([0.3, -0.4, 0.9]))
        assert np.linalg.norm(d - d.conj().T) < 1e-12 * max(1, np.linalg.norm(d))

    def test_simultaneous_label_shift_invariance(self, clifford, cubic_dual):
        curve = flat_curve([(0.0, 0.0, 0.0)])
        xi = torus.reduce([0.2, 0.3, 0.1], cubic_dual)
        op1 = dirac.build_mode_operator(curve, (1, 0, 0), xi, clifford)
        # Shifting n and xi by the same dual lattice vector leaves n - xi
        # unchanged: compare against the raw (unreduced) twist coefficients.
        shift_direct = cubic_dual.covector(np.array([2.0, 0, 0]) - (xi.coeffs + np.array([1.0, 0, 0])))
        assert np.allclose(op1.shift, shift_direct)

    def test_gap_error_at_spectrum(self, clifford, cubic_dual):
        curve = flat_curve([(0.25, 0.0, 0.0)])
        xi = torus.reduce([0.25, 0.0, 0.0], cubic_dual)
        with pytest.raises(GapError):
            dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)


class TestModeKernel:
    def test_flat_rank1_no_kernel(self, clifford, cubic_dual):
        curve = flat_curve([(0.0, 0.0, 0.0)])
        xi = torus.reduce([0.2, 0.3, 0.1], cubic_dual)
        for n in ((0, 0, 0), (1, 0, 0), (0, -1, 0)):
            op = dirac.build_mode_operator(curve, n, xi, clifford)
            kern = dirac.mode_kernel(op)
            assert kern.dim == 0

    def test_stable_subspace_dimension(self, clifford, cubic_dual):
        # Hermitian limits of commuting data have symmetric spectrum: the
        # decaying family at +infinity has dimension r.
        for pts, rank in ([[(0.3, 0.1, 0.7)], 1], [[(0.3, 0.1, 0.7), (0.9, 0.5, 0.2)], 2]):
            curve = flat_curve(pts)
            xi = torus.reduce([0.11, 0.77, 0.44], cubic_dual)
            op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
            d_plus = op.d_limit(+1)
            w = np.linalg.eigvalsh(d_plus)
            assert int(np.sum(w < 0)) == rank

    def test_spectral_flow_kernel(self, clifford, cubic_dual):
        curve = fixtures.spectral_flow_curve(t_max=12.0, grid_n=961)
        xi = torus.reduce([0.15, 0.0, 0.0], cubic_dual)
        op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
        kern = dirac.mode_kernel(op)
        assert kern.dim == 1
        assert not kern.uncertain
        gram = kern.l2_gram()
        assert np.max(np.abs(gram - np.eye(1))) < 1e-8

    def test_kernel_satisfies_ode(self, clifford, cubic_dual):
        curve = fixtures.spectral_flow_curve(t_max=12.0, grid_n=1921)
        xi = torus.reduce([0.2, 0.0, 0.0], cubic_dual)
        op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
        kern = dirac.mode_kernel(op)
        g = curve.grid
        h = g[1] - g[0]
        f = kern.basis[0]
        worst = 0.0
        for k in range(5, len(g) - 5, 50):
            deriv = (f[k + 1] - f[k - 1]) / (2 * h)
            d = op.d_at_sample(curve.a[k])
            worst = max(worst, float(np.linalg.norm(deriv - d @ f[k])))
        scale = float(np.max(np.linalg.norm(f, axis=1)))
        assert worst < 5e-4 * max(scale, 1.0)

    def test_gram_refinement_consistency(self, clifford, cubic_dual):
        # The quadrature+tails Gram must be stable under grid refinement.
        vals = []
        for n_grid in (961, 1921):
            curve = fixtures.spectral_flow_curve(t_max=12.0, grid_n=n_grid)
            xi = torus.reduce([0.2, 0.0, 0.0], cubic_dual)
            op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
            kern = dirac.mode_kernel(op)
            vals.append(complex(dirac.l2_moment(kern, weight_t=True)[0, 0]))
        assert abs(vals[0] - vals[1]) < 1e-6 * max(1.0, abs(vals[1]))


class TestSliceEnergy:
    def test_empty_kernel(self, clifford, cubic_dual):
        curve = flat_curve([(0.0, 0.0, 0.0)])
        xi = torus.reduce([0.3, 0.0, 0.0], cubic_dual)
        op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
        prof = dirac.slice_energy(dirac.mode_kernel(op))
        assert prof.density.size == 0

    def test_monotone_beyond_radius_and_rate(self, clifford, cubic_dual):
        curve = fixtures.spectral_flow_curve(t_max=14.0, grid_n=1401)
        d = 0.1
        xi = torus.reduce([d, 0.0, 0.0], cubic_dual)
        op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
        kern = dirac.mode_kernel(op)
        prof = dirac.slice_energy(kern)
        g = curve.grid
        f = prof.density
        sel = g > prof.monotonicity_radius
        assert np.all(np.diff(f[sel]) < 0)
        sel = g < -prof.monotonicity_radius
        assert np.all(np.diff(f[sel]) > 0)
        # The F-decay rate is twice the one-sided gap; the reported kappa is
        # the slower side, here 2 * 2 pi d.
        assert prof.kappa == pytest.approx(4 * np.pi * d, rel=0.05)
        assert prof.kappa >= 0.9 * prof.expected_rate

    def test_rate_scales_linearly_with_distance(self, clifford, cubic_dual):
        ratios = []
        for d in (0.05, 0.1, 0.2):
            curve = fixtures.spectral_flow_curve(t_max=14.0, grid_n=1401)
            xi = torus.reduce([d, 0.0, 0.0], cubic_dual)
            op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
            prof = dirac.slice_energy(dirac.mode_kernel(op))
            ratios.append(prof.kappa / d)
        assert max(ratios) / min(ratios) < 1.5


class TestTotalKernel:
    def test_flat_rank1_total_zero(self, clifford, cubic_dual):
        curve = flat_curve([(0.0, 0.0, 0.0)])
        xi = torus.reduce([0.3, 0.2, 0.1], cubic_dual)
        tk = dirac.total_kernel(curve, xi, clifford)
        assert tk.total_dim == 0
        assert tk.weitzenboeck_ok
        assert tk.certified_tail

    def test_flat_rank2_total_zero_generic(self, clifford, cubic_dual):
        curve = flat_curve([(0.2, 0.3, 0.4), (0.7, 0.8, 0.6)])
        for coeffs in ([0.45, 0.1, 0.9], [0.05, 0.55, 0.35]):
            tk = dirac.total_kernel(curve, torus.reduce(coeffs, cubic_dual), clifford)
            assert tk.total_dim == 0
            assert tk.weitzenboeck_ok

    def test_stable_under_extra_shell(self, clifford, cubic_dual):
        curve = fixtures.spectral_flow_curve(t_max=12.0, grid_n=721)
        xi = torus.reduce([0.2, 0.0, 0.0], cubic_dual)
        t0 = dirac.total_kernel(curve, xi, clifford)
        t1 = dirac.total_kernel(curve, xi, clifford, extra_shells=1)
        assert t0.total_dim == t1.total_dim == 1
        assert len(t1.kernels) > len(t0.kernels)

    def test_xi_in_singular_set_rejected(self, clifford, cubic_dual):
        curve = flat_curve([(0.25, 0.0, 0.0)])
        with pytest.raises(GapError):
            dirac.total_kernel(curve, torus.reduce([0.25, 0.0, 0.0], cubic_dual), clifford)

    def test_locally_constant_rank_on_path(self, clifford, cubic_dual):
        curve = flat_curve([(0.2, 0.3, 0.4), (0.7, 0.8, 0.6)])
        dims = []
        for s in np.linspace(0.05, 0.45, 5):
            xi = torus.reduce([s, 0.1, 0.9], cubic_dual)
            dims.append(dirac.total_kernel(curve, xi, clifford).total_dim)
        assert len(set(dims)) == 1

    def test_cache_roundtrip(self, clifford, cubic_dual, tmp_path):
        curve = fixtures.spectral_flow_curve(t_max=10.0, grid_n=501)
        xi = torus.reduce([0.2, 0.0, 0.0], cubic_dual)
        cache = dirac.KernelCache(str(tmp_path / "kc"))
        t0 = dirac.total_kernel(curve, xi, clifford, cache=cache)
        t1 = dirac.total_kernel(curve, xi, clifford, cache=cache)
        assert t0.total_dim == t1.total_dim
        for n in t0.kernels:
            k0, k1 = t0.kernels[n], t1.kernels[n]
            assert k0.dim == k1.dim
            if k0.dim:
                assert np.array_equal(k0.basis, k1.basis)

    def test_kernel_cache_detects_corruption(self, clifford, cubic_dual, tmp_path):
        curve = fixtures.spectral_flow_curve(t_max=10.0, grid_n=501)
        xi = torus.reduce([0.2, 0.0, 0.0], cubic_dual)
        cache = dirac.KernelCache(str(tmp_path / "kc"))
        dirac.total_kernel(curve, xi, clifford, cache=cache)
        import os
        victims = [p for p in os.listdir(cache.root)]
        path = os.path.join(cache.root, victims[0])
        with open(path, "r+b") as fh:
            fh.seek(80)
            fh.write(b"corrupt")
        key = victims[0].rsplit(".", 1)[0]
        assert cache.load(key) is None


class TestSerialization:
    def test_mode_kernel_text_roundtrip(self, clifford, cubic_dual):
        curve = fixtures.spectral_flow_curve(t_max=10.0, grid_n=501)
        xi = torus.reduce([0.2, 0.0, 0.0], cubic_dual)
        op = dirac.build_mode_operator(curve, (0, 0, 0), xi, clifford)
        kern = dirac.mode_kernel(op)
        text = serialize.mode_kernel_to_text(kern)
        back = serialize.mode_kernel_from_text(text, op, -1)
        assert back.dim == kern.dim
        assert np.array_equal(back.basis, kern.basis)
        assert np.array_equal(back.tail_plus.rates, kern.tail_plus.rates)
