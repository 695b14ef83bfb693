"""The matrix flow dA_i/dt = -[A_j, A_k]: integration, invariants, boundary-value solves.

Curves live on a finite grid [-T, T]; beyond the grid they are governed by the
exact model tails Gamma +- N/t.  The flow is stiff near poles (the generic
fate of nonabelian initial data), so the integrator detects step underflow and
reports blow-up instead of grinding on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.sparse

from ._core import dp45_step, nahm_rhs_triple
from .errors import BlowUpError, CertificationError, ValidationError
from .model import ModelSolution
from .torus import Lattice3

DEFAULT_TAIL_TOL = 1e-8
# Step underflow threshold relative to the requested span.
BLOWUP_STEP_FRACTION = 1e-12

DEFAULT_T = 20.0
DEFAULT_GRID_N = 2001


def nahm_rhs(a) -> np.ndarray:
    """Right-hand side (-[A2,A3], -[A3,A1], -[A1,A2]) of the flow."""
    return nahm_rhs_triple(np.asarray(a, dtype=complex))


def model_curve_residual(ms: ModelSolution, ts) -> np.ndarray:
    """Pointwise flow residual of the exact family Gamma + N/t (analytic derivative)."""
    out = np.empty(len(ts))
    for idx, t in enumerate(np.asarray(ts, dtype=float)):
        a = ms.at(t)
        deriv = -ms.nn / (t * t)
        rhs = nahm_rhs_triple(a)
        out[idx] = max(np.linalg.norm(deriv[i] - rhs[i]) for i in range(3))
    return out


@dataclass(frozen=True, eq=False)
class FlowSegment:
    """Output of an adaptive integration: accepted times and samples."""

    ts: np.ndarray          # (n,)
    values: np.ndarray      # (n, 3, r, r)

    def at_end(self) -> np.ndarray:
        return self.values[-1]


def integrate(a0, t0: float, t1: float, tol: float = 1e-9,
              max_steps: int = 2_000_000) -> FlowSegment:
    """Adaptive Dormand-Prince integration of the flow from t0 to t1.

    Local error per step is kept below tol; the skew-Hermitian part is
    re-projected after each accepted step.  Step underflow raises BlowUpError
    carrying the last valid time.
    """
    if t0 == t1:
        raise ValueError("t0 and t1 must differ")
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.asarray(a0, dtype=complex).copy()
    span = t1 - t0
    direction = 1.0 if span > 0 else -1.0
    h = span / 100.0
    t = t0
    ts = [t0]
    vals = [a.copy()]
    steps = 0
    while (t1 - t) * direction > 0:
        if abs(h) < BLOWUP_STEP_FRACTION * abs(span):
            raise BlowUpError(t)
        if (t + h - t1) * direction > 0:
            h = t1 - t
        a_new, err = dp45_step(a, h)
        if not np.isfinite(err):
            h *= 0.2
            continue
        factor = 0.9 * (tol / err) ** 0.2 if err > 0 else 5.0
        if err <= tol:
            t += h
            a = a_new
            ts.append(t)
            vals.append(a.copy())
            # Never shrink after an accepted step; a rejection will shrink.
            h *= min(5.0, max(1.0, factor))
        else:
            h *= min(1.0, max(0.2, factor))
        steps += 1
        if steps > max_steps:
            raise BlowUpError(t, "step budget exhausted")
    return FlowSegment(ts=np.asarray(ts), values=np.asarray(vals))


@dataclass(frozen=True, eq=False)
class NahmCurve:
    """Sampled matrix triple on [-T, T] with model-solution tails.

    grid: strictly increasing times, a: samples of shape (n, 3, r, r),
    minus/plus: the tails governing t <= grid[0] and t >= grid[-1].
    """

    grid: np.ndarray
    a: np.ndarray
    minus: ModelSolution
    plus: ModelSolution
    tail_tol: float = DEFAULT_TAIL_TOL

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        arr = np.asarray(self.a, dtype=complex)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "a", arr)
        if g.ndim != 1 or len(g) < 3 or np.any(np.diff(g) <= 0):
            raise ValidationError([("grid not strictly increasing", 0.0)])
        if arr.shape[:2] != (len(g), 3) or arr.shape[2] != arr.shape[3]:
            raise ValidationError([("sample array shape mismatch", 0.0)])
        bad = []
        skew = max(
            float(np.linalg.norm(arr[k, i] + arr[k, i].conj().T))
            for k in range(len(g)) for i in range(3)
        )
        if skew > 1e-10 * max(1.0, float(np.max(np.abs(arr)))):
            bad.append(("samples not skew-Hermitian", skew))
        for ms, idx, name in ((self.minus, 0, "minus"), (self.plus, -1, "plus")):
            t_end = g[idx]
            res = max(np.linalg.norm(arr[idx, i] - ms.at(t_end)[i]) for i in range(3))
            if res > self.tail_tol:
                bad.append((f"{name} tail inconsistent at t={t_end:g}", res))
        if bad:
            raise ValidationError(bad)

    @property
    def rank(self) -> int:
        return self.a.shape[2]

    @property
    def t_end(self) -> float:
        return float(self.grid[-1])

    def sample(self, t: float) -> np.ndarray:
        """Curve value at any time: grid interpolation inside, model tails outside."""
        g = self.grid
        if t <= g[0]:
            return self.minus.at(t)
        if t >= g[-1]:
            return self.plus.at(t)
        k = int(np.searchsorted(g, t)) - 1
        w = (t - g[k]) / (g[k + 1] - g[k])
        return (1 - w) * self.a[k] + w * self.a[k + 1]

    def derivative_stencil(self) -> np.ndarray:
        """Second-order gradient of the samples along the grid."""
        return np.gradient(self.a, self.grid, axis=0)

    def sup_norms(self) -> tuple[float, float]:
        """(sup_t sum_i ||A_i(t)||_op, sup_t sum_i ||dA_i/dt||_op) over grid and tails."""
        a_op = 0.0
        for k in range(len(self.grid)):
            a_op = max(a_op, sum(np.linalg.norm(self.a[k, i], 2) for i in range(3)))
        deriv = self.derivative_stencil()
        d_op = 0.0
        for k in range(len(self.grid)):
            d_op = max(d_op, sum(np.linalg.norm(deriv[k, i], 2) for i in range(3)))
        # Tails only shrink both quantities (1/t and 1/t^2 envelopes).
        return a_op, d_op


def constant_curve(ms: ModelSolution, t_max: float = DEFAULT_T,
                   grid_n: int = DEFAULT_GRID_N) -> NahmCurve:
    """The exact constant curve of a flat (N = 0) model solution."""
    if not ms.is_flat():
        raise ValidationError([("constant curve needs N = 0", float(np.linalg.norm(ms.nn)))])
    grid = np.linspace(-t_max, t_max, grid_n)
    a = np.broadcast_to(ms.gamma, (grid_n, 3, ms.rank, ms.rank)).copy()
    return NahmCurve(grid=grid, a=a, minus=ms, plus=ms)


def curve_from_samples(grid, samples, minus: ModelSolution, plus: ModelSolution,
                       tail_tol: float = DEFAULT_TAIL_TOL) -> NahmCurve:
    return NahmCurve(grid=np.asarray(grid, float), a=np.asarray(samples, complex),
                     minus=minus, plus=plus, tail_tol=tail_tol)


def asd_residual(curve: NahmCurve) -> np.ndarray:
    """Pointwise max_i || dA_i/dt + [A_j, A_k] || on the grid (stencil derivative)."""
    deriv = curve.derivative_stencil()
    out = np.empty(len(curve.grid))
    for k in range(len(curve.grid)):
        rhs = nahm_rhs_triple(curve.a[k])
        out[k] = max(np.linalg.norm(deriv[k, i] - rhs[i]) for i in range(3))
    return out


def spectral_invariants(curve_or_segment) -> tuple[np.ndarray, float]:
    """Eigenvalues of B(t) = A_2(t) + i A_3(t) per sample and their max drift.

    For exact flows B evolves by dB/dt = -i [A_1, B], so the spectrum is a
    conserved quantity; the reported drift is the max deviation from the first
    sample after lexicographic matching.
    """
    vals = curve_or_segment.values if isinstance(curve_or_segment, FlowSegment) else curve_or_segment.a
    n = vals.shape[0]
    r = vals.shape[2]
    eigs = np.empty((n, r), dtype=complex)
    for k in range(n):
        b = vals[k, 1] + 1j * vals[k, 2]
        e = np.linalg.eigvals(b)
        eigs[k] = e[np.lexsort((e.imag, e.real))]
    drift = float(np.max(np.abs(eigs - eigs[0]))) if n else 0.0
    return eigs, drift


# ---------------------------------------------------------------------------
# Linearization at a commuting triple and its invariant subspaces


def _u_basis(r: int) -> list[np.ndarray]:
    """Orthonormal real basis of u(r) for <X, Y> = Re tr(X^dagger Y)."""
    out = []
    for a in range(r):
        e = np.zeros((r, r), dtype=complex)
        e[a, a] = 1j
        out.append(e)
    s = 1.0 / np.sqrt(2.0)
    for a in range(r):
        for b in range(a + 1, r):
            e = np.zeros((r, r), dtype=complex)
            e[a, b] = s
            e[b, a] = -s
            out.append(e)
            e = np.zeros((r, r), dtype=complex)
            e[a, b] = 1j * s
            e[b, a] = 1j * s
            out.append(e)
    return out


def _triple_to_vec(a: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    return np.array([
        float(np.real(np.trace(e.conj().T @ a[i])))
        for i in range(3) for e in basis
    ])


def _vec_to_triple(x: np.ndarray, basis: list[np.ndarray], r: int) -> np.ndarray:
    d = len(basis)
    a = np.zeros((3, r, r), dtype=complex)
    for i in range(3):
        for b, e in enumerate(basis):
            a[i] += x[i * d + b] * e
    return a


def linearized_flow_matrix(ms: ModelSolution, basis=None) -> np.ndarray:
    """Matrix of eps_i -> -[eps_j, Gamma_k] - [Gamma_j, eps_k] on u(r)^3."""
    r = ms.rank
    basis = basis or _u_basis(r)
    d = len(basis)
    g = ms.gamma
    mat = np.zeros((3 * d, 3 * d))
    perms = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
    for (i, j, k) in perms:
        for bj, e in enumerate(basis):
            img = -(e @ g[k] - g[k] @ e)
            col = _triple_to_vec(np.stack([img if q == i else np.zeros_like(img) for q in range(3)]), basis)
            mat[:, j * d + bj] += col
        for bk, e in enumerate(basis):
            img = -(g[j] @ e - e @ g[j])
            col = _triple_to_vec(np.stack([img if q == i else np.zeros_like(img) for q in range(3)]), basis)
            mat[:, k * d + bk] += col
    return mat


def boundary_subspaces(ms: ModelSolution, threshold_rel: float = 1e-8):
    """(stable, unstable, center) orthonormal real bases of the linearized flow at Gamma."""
    basis = _u_basis(ms.rank)
    mat = linearized_flow_matrix(ms, basis)
    scale = max(1.0, float(np.linalg.norm(ms.gamma)))
    thresh = threshold_rel * scale
    evals, evecs = np.linalg.eig(mat)
    groups = {"stable": [], "unstable": [], "center": []}
    for idx in range(len(evals)):
        lam = evals[idx]
        v = evecs[:, idx]
        key = "center" if abs(lam.real) <= thresh else ("unstable" if lam.real > 0 else "stable")
        groups[key].append(np.real(v))
        if abs(lam.imag) > thresh:
            groups[key].append(np.imag(v))

    def orth(cols):
        if not cols:
            return np.zeros((mat.shape[0], 0))
        m = np.column_stack(cols)
        q, s, _ = np.linalg.svd(m, full_matrices=False)
        keep = int(np.sum(s > 1e-10 * max(1.0, s[0])))
        return q[:, :keep]

    return orth(groups["stable"]), orth(groups["unstable"]), orth(groups["center"]), basis


@dataclass(frozen=True, eq=False)
class HeteroclinicResult:
    curve: NahmCurve | None
    residual_history: tuple[float, ...]
    converged: bool
    message: str

    @property
    def found(self) -> bool:
        return self.converged and self.curve is not None


def solve_heteroclinic(minus: ModelSolution, plus: ModelSolution, t_max: float,
                       grid_n: int, tol: float = 1e-8,
                       initial_guess: np.ndarray | None = None,
                       max_iter: int = 40) -> HeteroclinicResult:
    """Collocation solve of the flow on [-T, T] with model boundary data.

    Hermite-Simpson (Lobatto IIIA, 4th order) residuals plus boundary rows
    confining the endpoint deviations from Gamma +- N/(+-T) to the linearized
    unstable (left) and stable (right) subspaces.  Success is certified by the
    pointwise grid residual alone; failures return the residual history.
    """
    if minus.rank != plus.rank:
        raise ValidationError([("rank mismatch", 0.0)])
    r = minus.rank
    for ms in (minus, plus):
        gaps = _nonzero_gamma_gap(ms)
        if gaps is not None and np.linalg.norm(ms.nn) / t_max >= 0.1 * gaps:
            raise ValidationError([
                ("T too small: ||N||/T must be < 0.1 * min nonzero Gamma gap", gaps)
            ])

    grid = np.linspace(-t_max, t_max, grid_n)
    h = grid[1] - grid[0]
    basis = _u_basis(r)
    d = len(basis)

    _, unstable_m, _, _ = boundary_subspaces(minus)
    stable_p, _, _, _ = boundary_subspaces(plus)

    def complement(q):
        full = np.eye(3 * d)
        if q.shape[1] == 0:
            return full
        proj = full - q @ q.T
        u, s, _ = np.linalg.svd(proj)
        keep = int(np.sum(s > 1e-10))
        return u[:, :keep]

    left_rows = complement(unstable_m).T
    right_rows = complement(stable_p).T

    a_left = minus.at(grid[0])
    a_right = plus.at(grid[-1])

    if initial_guess is None:
        # Linear blend of the two tail samples.
        w = (grid - grid[0]) / (grid[-1] - grid[0])
        guess = (1 - w)[:, None, None, None] * a_left + w[:, None, None, None] * a_right
    else:
        guess = np.asarray(initial_guess, dtype=complex)

    x0 = np.concatenate([_triple_to_vec(guess[k], basis) for k in range(grid_n)])

    def unpack(x):
        return np.stack([_vec_to_triple(x[k * 3 * d:(k + 1) * 3 * d], basis, r)
                         for k in range(grid_n)])

    def residual_vec(x):
        a = unpack(x)
        rows = []
        f = np.stack([nahm_rhs_triple(a[k]) for k in range(grid_n)])
        for k in range(grid_n - 1):
            mid = 0.5 * (a[k] + a[k + 1]) + (h / 8.0) * (f[k] - f[k + 1])
            fmid = nahm_rhs_triple(mid)
            res = a[k + 1] - a[k] - (h / 6.0) * (f[k] + 4.0 * fmid + f[k + 1])
            rows.append(_triple_to_vec(res, basis))
        rows.append(left_rows @ _triple_to_vec(a[0] - a_left, basis))
        rows.append(right_rows @ _triple_to_vec(a[-1] - a_right, basis))
        return np.concatenate(rows)

    nvar = grid_n * 3 * d
    nres = (grid_n - 1) * 3 * d + left_rows.shape[0] + right_rows.shape[0]
    sparsity = scipy.sparse.lil_matrix((nres, nvar), dtype=np.int8)
    for k in range(grid_n - 1):
        sparsity[k * 3 * d:(k + 1) * 3 * d, k * 3 * d:(k + 2) * 3 * d] = 1
    sparsity[(grid_n - 1) * 3 * d:(grid_n - 1) * 3 * d + left_rows.shape[0], :3 * d] = 1
    sparsity[nres - right_rows.shape[0]:, nvar - 3 * d:] = 1

    history = []

    def record(x):
        history.append(float(np.linalg.norm(residual_vec(x))))

    record(x0)
    try:
        sol = scipy.optimize.least_squares(
            residual_vec, x0, jac_sparsity=sparsity, method="trf",
            xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_iter * 3,
        )
        record(sol.x)
        a = unpack(sol.x)
    except Exception as exc:  # noqa: BLE001 - optimizer failure is a report, not a crash
        return HeteroclinicResult(curve=None, residual_history=tuple(history),
                                  converged=False, message=f"optimizer failed: {exc}")

    try:
        curve = NahmCurve(grid=grid, a=a, minus=minus, plus=plus,
                          tail_tol=max(10 * tol, DEFAULT_TAIL_TOL,
                                       float(np.linalg.norm(minus.nn) + np.linalg.norm(plus.nn)) / t_max ** 2 * 10 + 10 * tol))
    except ValidationError as exc:
        return HeteroclinicResult(curve=None, residual_history=tuple(history),
                                  converged=False, message=f"tail inconsistency: {exc}")

    res = asd_residual(curve)
    if float(np.max(res)) <= tol:
        return HeteroclinicResult(curve=curve, residual_history=tuple(history),
                                  converged=True, message="certified")
    return HeteroclinicResult(curve=None, residual_history=tuple(history),
                              converged=False,
                              message=f"residual {float(np.max(res)):.3e} above tol {tol:.3e}")


def _nonzero_gamma_gap(ms: ModelSolution) -> float | None:
    """Smallest nonzero gap between joint Gamma eigenvalue covectors, or None if flat Gamma."""
    evs = []
    for i in range(3):
        evs.append(np.sort(np.linalg.eigvalsh(-1j * ms.gamma[i])))
    evs = np.stack(evs, axis=1)
    gaps = []
    for a in range(evs.shape[0]):
        for b in range(a + 1, evs.shape[0]):
            g = float(np.linalg.norm(evs[a] - evs[b]))
            if g > 1e-12:
                gaps.append(g)
    return min(gaps) if gaps else None


def curvature_energy(curve: NahmCurve, l: Lattice3, residual_tol: float = 1e-6) -> float:
    """Total curvature norm ||F||^2 of the curve as a connection, tails in closed form.

    Refuses when the flow residual exceeds residual_tol, since the value is
    only an instanton energy for (near-)exact curves.
    """
    res = float(np.max(asd_residual(curve)))
    if res > residual_tol:
        raise CertificationError(
            f"flow residual {res:.3e} exceeds {residual_tol:.3e}; energy undefined")
    deriv = curve.derivative_stencil()
    n = len(curve.grid)
    integrand = np.empty(n)
    for k in range(n):
        s = sum(float(np.linalg.norm(deriv[k, i])) ** 2 for i in range(3))
        a1, a2, a3 = curve.a[k]
        s += float(np.linalg.norm(a1 @ a2 - a2 @ a1)) ** 2
        s += float(np.linalg.norm(a2 @ a3 - a3 @ a2)) ** 2
        s += float(np.linalg.norm(a3 @ a1 - a1 @ a3)) ** 2
        integrand[k] = s
    bulk = float(np.trapezoid(integrand, curve.grid))
    t_hi = curve.grid[-1]
    t_lo = -curve.grid[0]
    tail = 2.0 * sum(float(np.linalg.norm(curve.plus.nn[i])) ** 2 for i in range(3)) / (3.0 * t_hi ** 3)
    tail += 2.0 * sum(float(np.linalg.norm(curve.minus.nn[i])) ** 2 for i in range(3)) / (3.0 * t_lo ** 3)
    return l.volume() * (bulk + tail)


def model_tail_energy_quadrature(ms: ModelSolution, t0: float, t1: float, n: int = 20001) -> float:
    """Numerical check value for the closed-form tail integral on [t0, t1]."""
    ts = np.linspace(t0, t1, n)
    vals = np.empty(n)
    for idx, t in enumerate(ts):
        a = ms.at(t)
        deriv = -ms.nn / (t * t)
        s = sum(float(np.linalg.norm(deriv[i])) ** 2 for i in range(3))
        a1, a2, a3 = a
        s += float(np.linalg.norm(a1 @ a2 - a2 @ a1)) ** 2
        s += float(np.linalg.norm(a2 @ a3 - a3 @ a2)) ** 2
        s += float(np.linalg.norm(a3 @ a1 - a1 @ a3)) ** 2
        vals[idx] = s
    return float(scipy.integrate.simpson(vals, x=ts))


@dataclass(frozen=True)
class AsymptoticFit:
    """Measured decay rates of the deviation from the model tails.

    center_rate is a power-law exponent (expected > 1), perp_rate an
    exponential rate (expected > 0); rates are +inf when the deviation is
    below numerical floor.  The non-invariant component is structurally zero.
    """

    center_rate: float
    perp_rate: float
    nonconstant_residual: float = 0.0
    center_profile: tuple = field(default=(), repr=False)
    perp_profile: tuple = field(default=(), repr=False)


def _center_projector(ms: ModelSolution):
    basis = _u_basis(ms.rank)
    d = len(basis)
    rows = []
    for e in basis:
        img = np.stack([ms.gamma[i] @ e - e @ ms.gamma[i] for i in range(3)])
        rows.append(np.concatenate([
            np.array([float(np.real(np.trace(f.conj().T @ img[i]))) for f in basis])
            for i in range(3)
        ]))
    m = np.stack(rows, axis=1)  # maps u(r) -> u(r)^3 commutator images
    u, s, vt = np.linalg.svd(m)
    null = int(np.sum(s <= 1e-10 * max(1.0, s[0] if len(s) else 1.0)))
    center = vt[len(s) - null:].T if null else np.zeros((d, 0))
    return basis, center


def asymptotic_fit(curve: NahmCurve, side: int = +1, floor: float = 1e-13) -> AsymptoticFit:
    """Fit decay rates of eps(t) = A(t) - (Gamma + N/t) on the outer quarter of a tail."""
    ms = curve.plus if side > 0 else curve.minus
    basis, center = _center_projector(ms)
    g = curve.grid
    if side > 0:
        sel = g >= 0.75 * g[-1]
    else:
        sel = g <= 0.75 * g[0]
    ts = g[sel]
    eps_c, eps_p = [], []
    for k in np.nonzero(sel)[0]:
        t = g[k]
        eps = curve.a[k] - ms.at(t)
        v = np.array([float(np.real(np.trace(e.conj().T @ eps[i])))
                      for i in range(3) for e in basis])
        d = len(basis)
        c_norm2 = 0.0
        for i in range(3):
            vi = v[i * d:(i + 1) * d]
            ci = center.T @ vi if center.shape[1] else np.zeros(0)
            c_norm2 += float(ci @ ci)
        tot = float(v @ v)
        eps_c.append(np.sqrt(c_norm2))
        eps_p.append(np.sqrt(max(0.0, tot - c_norm2)))
    eps_c = np.asarray(eps_c)
    eps_p = np.asarray(eps_p)

    def power_rate(vals):
        mask = vals > floor
        if np.sum(mask) < 3:
            return float("inf")
        x = np.log(np.abs(ts[mask]))
        y = np.log(vals[mask])
        slope = np.polyfit(x, y, 1)[0]
        return float(-slope)

    def exp_rate(vals):
        mask = vals > floor
        if np.sum(mask) < 3:
            return float("inf")
        y = np.log(vals[mask])
        slope = np.polyfit(ts[mask], y, 1)[0]
        return float(-slope * side)

    return AsymptoticFit(center_rate=power_rate(eps_c), perp_rate=exp_rate(eps_p),
                         center_profile=tuple(eps_c), perp_profile=tuple(eps_p))
