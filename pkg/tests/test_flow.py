import numpy as np
import pytest

from nahmlab import fixtures, flow, model, serialize
from nahmlab.errors import BlowUpError, CertificationError, ValidationError


class TestNahmRhs:
    def test_commuting_triple_vanishes(self):
        a = np.stack([2j * np.pi * np.diag([0.1, 0.4]) for _ in range(3)])
        assert np.allclose(flow.nahm_rhs(a), 0)

    def test_model_family_derivative(self, rng):
        # Oracle: d/dt (Gamma + N/t) = -N/t^2 must equal the right-hand side,
        # by [Gamma, N] = 0 and N_i = [N_j, N_k].
        ms = fixtures.random_model_solution(rng, 4)
        for t in (1.0, 2.5, -3.0, 17.0):
            a = ms.at(t)
            rhs = flow.nahm_rhs(a)
            assert np.max(np.abs(rhs - (-ms.nn / t ** 2))) < 1e-12

    def test_swap_antisymmetry(self, rng):
        a = np.stack([rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
                      for _ in range(3)])
        a = 0.5 * (a - np.conj(np.swapaxes(a, -1, -2)))
        swapped = np.stack([a[0], a[2], a[1]])
        f = flow.nahm_rhs(a)
        g = flow.nahm_rhs(swapped)
        assert np.allclose(g[0], -f[0])
        assert np.allclose(g[1], -f[2])
        assert np.allclose(g[2], -f[1])


class TestIntegrate:
    def test_constant_commuting(self):
        a0 = np.stack([2j * np.pi * np.diag([0.3, 0.8]) for _ in range(3)])
        seg = flow.integrate(a0, 0.0, 2.0, tol=1e-10)
        assert np.max(np.abs(seg.values - a0[None])) < 1e-12

    def test_model_solution_reproduced(self, rng):
        # Single spectrum cluster: around N/t the linearized flow grows only
        # polynomially, so long-span reproduction is meaningful.  Multi-cluster
        # constant data is an unstable equilibrium (real eigenvalues +-|gap| of
        # the linearization) and amplifies rounding noise exponentially.
        ms = fixtures.random_model_solution(rng, 3, n_clusters=1)
        seg = flow.integrate(ms.at(1.0), 1.0, 10.0, tol=1e-11)
        err = np.max(np.abs(seg.at_end() - ms.at(10.0)))
        assert err < 1e-8

    def test_multi_cluster_short_span(self, rng):
        ms = fixtures.random_model_solution(rng, 3)
        seg = flow.integrate(ms.at(1.0), 1.0, 2.0, tol=1e-11)
        err = np.max(np.abs(seg.at_end() - ms.at(2.0)))
        assert err < 1e-9

    def test_blowup_detected_against_scalar_reference(self):
        # A_i = f e_i reduces to f' = -f^2 with pole at t = -1/f(0).
        f0 = -2.0
        a0 = f0 * fixtures.su2_generators(2)
        with pytest.raises(BlowUpError) as exc:
            flow.integrate(a0, 0.0, 2.0, tol=1e-10)
        assert abs(exc.value.t_last - (-1.0 / f0)) < 0.02

    def test_zero_span_rejected(self):
        a0 = np.zeros((3, 1, 1), dtype=complex)
        with pytest.raises(ValueError):
            flow.integrate(a0, 1.0, 1.0)


class TestSpectralInvariants:
    def test_constant_data(self):
        a0 = np.stack([2j * np.pi * np.diag([0.3, 0.8]) for _ in range(3)])
        seg = flow.integrate(a0, 0.0, 1.0, tol=1e-9)
        _, drift = flow.spectral_invariants(seg)
        assert drift < 1e-12

    def test_random_su2_drift(self, rng):
        for _ in range(8):
            a0 = 0.35 * fixtures.rep_from_partition([2])
            pert = rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2))
            a0 = a0 + 0.05 * (pert - np.conj(np.swapaxes(pert, -1, -2)))
            try:
                seg = flow.integrate(a0, 0.0, 1.0, tol=1e-9)
            except BlowUpError:
                continue
            _, drift = flow.spectral_invariants(seg)
            assert drift < 100 * 1e-6

    def test_model_solution_shifted_eigenvalues(self, rng):
        # Eigenvalues of B - (Gamma_2 + i Gamma_3) - (N_2 + i N_3)/t vanish in
        # drift: B(t) of the model family is exactly that closed form.
        ms = fixtures.random_model_solution(rng, 3, conjugate=False)
        ts = np.linspace(1.0, 5.0, 21)
        vals = np.stack([ms.at(t) for t in ts])
        ref = (ms.gamma[1] + 1j * ms.gamma[2])
        for k, t in enumerate(ts):
            b = vals[k, 1] + 1j * vals[k, 2]
            resid = b - ref - (ms.nn[1] + 1j * ms.nn[2]) / t
            assert np.max(np.abs(resid)) < 1e-13


class TestNahmCurve:
    def test_tail_consistency_enforced(self):
        ms = fixtures.flat_model([(0.2, 0.2, 0.2)])
        grid = np.linspace(-5, 5, 11)
        a = np.broadcast_to(ms.gamma, (11, 3, 1, 1)).copy()
        a[-1] += 0.1j
        with pytest.raises(ValidationError):
            flow.NahmCurve(grid=grid, a=a, minus=ms, plus=ms)

    def test_serialization_roundtrip_exact(self):
        curve = fixtures.spectral_flow_curve(t_max=6.0, grid_n=31)
        text = serialize.curve_to_text(curve)
        back = serialize.curve_from_text(text)
        assert np.array_equal(back.grid, curve.grid)
        assert np.array_equal(back.a, curve.a)
        assert np.array_equal(back.minus.gamma, curve.minus.gamma)
        # Round-trip of the serialized text is bit-identical.
        assert serialize.curve_to_text(back) == text


class TestAsdResidual:
    def test_model_samples_within_stencil_error(self):
        ms = fixtures.spin_half_model((0.3, 0.3, 0.3))
        grid = np.linspace(4.0, 12.0, 401)
        h = grid[1] - grid[0]
        a = np.stack([ms.at(t) for t in grid])
        curve = flow.NahmCurve(grid=grid, a=a, minus=ms, plus=ms)
        res = flow.asd_residual(curve)
        # Second-order stencil on f ~ 1/t: error <= h^2/6 sup|f'''| at t >= 4.
        bound = h * h * np.max(np.abs(ms.nn)) * 6.0 / 4.0 ** 4
        assert np.max(res[1:-1]) < 10 * bound

    def test_constant_noncommuting(self):
        nn = fixtures.su2_generators(2)
        grid = np.linspace(-3, 3, 7)
        a = np.broadcast_to(nn, (7, 3, 2, 2)).copy()
        flat = model.validate_model_solution(np.zeros((3, 2, 2), complex),
                                             np.zeros((3, 2, 2), complex))
        curve = flow.NahmCurve(grid=grid, a=a, minus=flat, plus=flat, tail_tol=np.inf)
        res = flow.asd_residual(curve)
        expected = max(np.linalg.norm(nn[i]) for i in range(3))
        assert abs(np.max(res) - expected) < 1e-12


class TestSolveHeteroclinic:
    def test_constant_solution(self):
        ms = fixtures.flat_model([(0.2, 0.3, 0.4), (0.6, 0.7, 0.8)])
        res = flow.solve_heteroclinic(ms, ms, t_max=6.0, grid_n=31, tol=1e-8)
        assert res.found
        assert np.max(flow.asd_residual(res.curve)) <= 1e-8
        assert np.max(np.abs(res.curve.a - ms.gamma[None])) < 1e-8

    def test_perturbed_guess_converges_back(self, rng):
        ms = fixtures.flat_model([(0.2, 0.3, 0.4), (0.6, 0.7, 0.8)])
        grid = np.linspace(-6.0, 6.0, 31)
        guess = np.broadcast_to(ms.gamma, (31, 3, 2, 2)).copy()
        bump = np.exp(-grid ** 2)
        pert = rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2))
        pert = 0.02 * (pert - np.conj(np.swapaxes(pert, -1, -2)))
        guess = guess + bump[:, None, None, None] * pert[None]
        res = flow.solve_heteroclinic(ms, ms, t_max=6.0, grid_n=31, tol=1e-8,
                                      initial_guess=guess)
        assert res.found
        assert np.max(np.abs(res.curve.a - ms.gamma[None])) < 1e-6

    def test_generic_mismatch_reports_not_found(self):
        spin = fixtures.spin_half_model()
        res = flow.solve_heteroclinic(spin, spin, t_max=8.0, grid_n=41, tol=1e-8)
        assert not res.found
        assert len(res.residual_history) >= 1

    def test_rank_mismatch_error(self):
        a = fixtures.flat_model([(0.1, 0.1, 0.1)])
        b = fixtures.flat_model([(0.1, 0.1, 0.1), (0.5, 0.5, 0.5)])
        with pytest.raises(ValidationError):
            flow.solve_heteroclinic(a, b, t_max=6.0, grid_n=11, tol=1e-8)


class TestCurvatureEnergy:
    def test_flat_curve_zero(self, cubic):
        ms = fixtures.flat_model([(0.2, 0.3, 0.4)])
        curve = flow.constant_curve(ms, t_max=6.0, grid_n=61)
        assert flow.curvature_energy(curve, cubic) < 1e-20

    def test_tail_closed_form_vs_quadrature(self, rng):
        # Oracle: numerical quadrature of the tail integrand on [T, T_big]
        # against the closed form difference of 1/t^3 antiderivatives.
        ms = fixtures.random_model_solution(rng, 3, conjugate=False)
        t0, t1 = 5.0, 400.0
        quad = flow.model_tail_energy_quadrature(ms, t0, t1, n=40001)
        nsq = sum(float(np.linalg.norm(ms.nn[i])) ** 2 for i in range(3))
        closed = 2.0 * nsq * (1.0 / (3 * t0 ** 3) - 1.0 / (3 * t1 ** 3))
        assert abs(quad - closed) < 1e-8

    def test_pointwise_energy_identity_on_model(self, rng):
        # sum ||F_ti||^2 = sum ||F_ij||^2 pointwise on exact curves.
        ms = fixtures.random_model_solution(rng, 4)
        for t in (2.0, 5.0, 9.0):
            a = ms.at(t)
            deriv = -ms.nn / t ** 2
            lhs = sum(float(np.linalg.norm(deriv[i])) ** 2 for i in range(3))
            comms = [a[0] @ a[1] - a[1] @ a[0], a[1] @ a[2] - a[2] @ a[1],
                     a[2] @ a[0] - a[0] @ a[2]]
            rhs = sum(float(np.linalg.norm(c)) ** 2 for c in comms)
            assert abs(lhs - rhs) < 1e-10 * max(1.0, lhs)

    def test_refuses_noncertified(self):
        curve = fixtures.spectral_flow_curve(t_max=8.0, grid_n=201)
        with pytest.raises(CertificationError):
            flow.curvature_energy(curve, fixtures.cubic_lattice(), residual_tol=1e-8)


class TestAsymptoticFit:
    def test_synthetic_rates_recovered(self):
        ms = fixtures.flat_model([(0.15, 0.0, 0.0), (0.6, 0.0, 0.0)])
        grid = np.linspace(-30.0, 30.0, 601)
        center_dir = 1j * np.diag([1.0, -1.0])
        perp_dir = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
        a = np.broadcast_to(ms.gamma, (601, 3, 2, 2)).copy()
        for k, t in enumerate(grid):
            a[k, 0] += np.abs(t) ** -1.5 * center_dir if abs(t) > 1 else center_dir
            a[k, 1] += np.exp(-0.7 * abs(t)) * perp_dir
        curve = flow.NahmCurve(grid=grid, a=a, minus=ms, plus=ms, tail_tol=np.inf)
        fit = flow.asymptotic_fit(curve, +1)
        assert abs(fit.center_rate - 1.5) < 0.05
        assert abs(fit.perp_rate - 0.7) < 0.05
        assert fit.nonconstant_residual == 0.0
