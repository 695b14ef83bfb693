"""Per-Fourier-mode Dirac ODE operators and their L^2 kernels.

For a twisted curve the half-spinor operators reduce, mode by mode, to
f' = +- D_n(t) f with the Hermitian generator

    D_n(t) = sum_i c_i (x) (A_i(t) + 2 pi i (n_i - xi_i) Id),

 c_i = i sigma_i acting on the 2-dimensional torus spinor space.  L^2 kernels
are found by marching orthonormal frames of the decaying solution families in
from both ends and intersecting them in the middle (principal angles); bases
are completed with closed-form exponential tails and L^2-orthonormalized.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from ._core import march_frames
from .errors import GapError, NumericalError
from .flow import NahmCurve
from .model import singularity_set
from .torus import DualTorusPoint, enumerate_modes

PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)

ANGLE_TOL_DEFAULT = 1e-6
ANGLE_TOL_UNCERTAIN = 1e-4
GAP_MIN_DEFAULT = 1e-6


@dataclass(frozen=True, eq=False)
class CliffordModel:
    """Torus Clifford generators c_i and the 4-block structure they sit in."""

    c: np.ndarray  # (3, 2, 2)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        object.__setattr__(self, "c", c)
        eye = np.eye(2)
        for i in range(3):
            for j in range(3):
                anti = c[i] @ c[j] + c[j] @ c[i]
                target = -2.0 * eye if i == j else np.zeros((2, 2))
                if not np.array_equal(anti, target):
                    raise NumericalError(f"Clifford relation violated at ({i},{j})")

    def clif_dt(self) -> np.ndarray:
        z = np.zeros((2, 2), dtype=complex)
        eye = np.eye(2, dtype=complex)
        return np.block([[z, -eye], [eye, z]])

    def clif_dx(self, i: int) -> np.ndarray:
        z = np.zeros((2, 2), dtype=complex)
        return np.block([[z, self.c[i]], [self.c[i], z]])


def default_clifford() -> CliffordModel:
    return CliffordModel(c=np.stack([1j * PAULI[i] for i in range(3)]))


def _assemble(c: np.ndarray, a: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """D = sum_i c_i (x) (A_i + 2 pi i shift_i Id) for one sample."""
    r = a.shape[1]
    eye = np.eye(r, dtype=complex)
    d = np.zeros((2 * r, 2 * r), dtype=complex)
    for i in range(3):
        d += np.kron(c[i], a[i] + 2j * np.pi * shift[i] * eye)
    return d


def _assemble_stack(c: np.ndarray, a_stack: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Vectorized _assemble over a stack of samples of shape (n, 3, r, r)."""
    n, _, r, _ = a_stack.shape
    eye = np.eye(r, dtype=complex)
    aug = a_stack + 2j * np.pi * shift[None, :, None, None] * eye[None, None, :, :]
    d = np.einsum("iab,kicd->kacbd", c, aug).reshape(n, 2 * r, 2 * r)
    return d


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """One Fourier mode of the reduced Dirac problem along a curve."""

    curve: NahmCurve
    n: tuple[int, int, int]
    xi: DualTorusPoint
    cm: CliffordModel
    shift: np.ndarray          # Euclidean components of n - xi
    gap_minus: float
    gap_plus: float
    tail_correction: float     # bound on the neglected N/t part of the limits

    @property
    def size(self) -> int:
        return 2 * self.curve.rank

    def d_at_sample(self, a_sample: np.ndarray) -> np.ndarray:
        return _assemble(self.cm.c, a_sample, self.shift)

    def d_limit(self, side: int, frozen_t: float | None = None) -> np.ndarray:
        ms = self.curve.plus if side > 0 else self.curve.minus
        a = ms.at(frozen_t) if frozen_t is not None else ms.gamma
        return _assemble(self.cm.c, a, self.shift)

    @property
    def gap(self) -> float:
        return min(self.gap_minus, self.gap_plus)


def build_mode_operator(curve: NahmCurve, n, xi: DualTorusPoint, cm: CliffordModel,
                        min_gap: float = GAP_MIN_DEFAULT) -> ModeOperator:
    """Assemble D_n along the curve; rejects xi too close to a twisted spectrum point."""
    n = tuple(int(v) for v in n)
    shift = xi.dual.covector(np.asarray(n, dtype=float) - xi.coeffs)
    op_gaps = []
    for ms in (curve.minus, curve.plus):
        d = _assemble(cm.c, ms.gamma, shift)
        herm = float(np.linalg.norm(d - d.conj().T))
        if herm > 1e-12 * max(1.0, float(np.linalg.norm(d))):
            raise NumericalError(f"mode operator not Hermitian (residual {herm:.3e})")
        op_gaps.append(float(np.min(np.abs(np.linalg.eigvalsh(d)))))
    gap_minus, gap_plus = op_gaps
    if min(gap_minus, gap_plus) <= min_gap:
        raise GapError(
            f"mode {n}: limit gap {min(gap_minus, gap_plus):.3e} at xi={xi.coeffs}; "
            "treat the sample as singular")
    t_end = curve.t_end
    corr = max(
        sum(float(np.linalg.norm(curve.plus.nn[i], 2)) for i in range(3)),
        sum(float(np.linalg.norm(curve.minus.nn[i], 2)) for i in range(3)),
    ) / t_end
    return ModeOperator(curve=curve, n=n, xi=xi, cm=cm, shift=shift,
                        gap_minus=gap_minus, gap_plus=gap_plus, tail_correction=corr)


@dataclass(frozen=True, eq=False)
class TailData:
    """Closed-form exponential continuation of a kernel element beyond one grid end."""

    t_end: float
    rates: np.ndarray          # eigenvalues of the frozen end operator
    vectors: np.ndarray        # corresponding orthonormal eigenvectors (columns)
    coeffs: np.ndarray         # (dim, m) coefficients of each basis element


@dataclass(frozen=True, eq=False)
class ModeKernel:
    """Orthonormal basis of L^2 solutions of f' = s D_n(t) f for one mode."""

    op: ModeOperator
    sign: int
    dim: int
    basis: np.ndarray                     # (dim, ngrid, m)
    tail_minus: TailData | None
    tail_plus: TailData | None
    principal_angles: np.ndarray
    uncertain: bool
    matching_mismatch: float

    @property
    def n(self):
        return self.op.n

    def l2_gram(self) -> np.ndarray:
        return _gram(self, self)

    def slice_density(self) -> np.ndarray:
        """F(t) = sum over the basis of |f(t)|^2 on the grid."""
        if self.dim == 0:
            return np.zeros(0)
        return np.einsum("akm,akm->k", self.basis.conj(), self.basis).real


def _frozen_end_eig(op: ModeOperator, side: int, sign: int):
    d = op.d_limit(side, frozen_t=op.curve.grid[-1 if side > 0 else 0])
    w, v = np.linalg.eigh(sign * d)
    return w, v


def _propagators(op: ModeOperator, sign: int, reverse: bool) -> np.ndarray:
    """Magnus-midpoint propagator stack over the grid (optionally the reversed sweep)."""
    g = op.curve.grid
    a = op.curve.a
    mids = 0.5 * (a[:-1] + a[1:])
    hs = np.diff(g)
    if reverse:
        mids = mids[::-1]
        hs = -hs[::-1]
    nsteps = len(hs)
    m = op.size
    # Constant curves (the certified commuting case) need one decomposition.
    h_scale = float(np.max(np.abs(hs)))
    if np.array_equal(a[1:], a[:-1]) and np.ptp(hs) <= 1e-12 * h_scale:
        d0 = sign * _assemble(op.cm.c, mids[0], op.shift)
        w, v = np.linalg.eigh(d0)
        p0 = (v * np.exp(hs[0] * w)) @ v.conj().T
        return np.broadcast_to(p0, (nsteps, m, m)).copy()
    d = sign * _assemble_stack(op.cm.c, mids, op.shift)
    w, v = np.linalg.eigh(d)
    phase = np.exp(hs[:, None] * w)
    return np.einsum("kij,kj,klj->kil", v, phase, v.conj())


def _reconstruct(frames: np.ndarray, rfactors: np.ndarray, coeff_end: np.ndarray) -> np.ndarray:
    """Solution samples along a march, given coefficients in the final frame.

    Walking back through the stored R factors keeps the evaluation in the
    decaying direction, so no growing-mode contamination occurs.
    """
    nsteps = rfactors.shape[0]
    p = coeff_end.shape[0]
    ncols = coeff_end.shape[1] if coeff_end.ndim > 1 else 1
    c = coeff_end.reshape(p, ncols)
    out = np.empty((nsteps + 1, frames.shape[1], ncols), dtype=complex)
    out[nsteps] = frames[nsteps] @ c
    for k in range(nsteps - 1, -1, -1):
        c = scipy.linalg.solve_triangular(rfactors[k], c)
        out[k] = frames[k] @ c
    return out


def mode_kernel(op: ModeOperator, angle_tol: float = ANGLE_TOL_DEFAULT,
                sign: int = -1) -> ModeKernel:
    """Kernel basis by two-sided orthonormalized marching and a principal-angle test.

    sign=-1 solves the decaying problem of the negative half-spinor operator
    (f' = +D f); sign=+1 the sign-flipped one (f' = -D f).
    """
    if op.gap <= 0:
        raise GapError("nonpositive limit gap")
    ode_sign = -sign  # f' = (ode_sign) D f;  -1 spinor convention gives f' = +D f
    g = op.curve.grid
    n_grid = len(g)
    mid = int(np.argmin(np.abs(g)))
    if mid == 0 or mid == n_grid - 1:
        raise NumericalError("grid must contain an interior point near t = 0")
    m = op.size

    w_l, v_l = _frozen_end_eig(op, side=-1, sign=ode_sign)
    u0_l = v_l[:, w_l > 0]
    w_r, v_r = _frozen_end_eig(op, side=+1, sign=ode_sign)
    u0_r = v_r[:, w_r < 0]
    if u0_l.shape[1] == 0 or u0_r.shape[1] == 0:
        return ModeKernel(op=op, sign=sign, dim=0, basis=np.zeros((0, n_grid, m)),
                          tail_minus=None, tail_plus=None,
                          principal_angles=np.zeros(0), uncertain=False,
                          matching_mismatch=0.0)

    props_fwd = _propagators(op, ode_sign, reverse=False)
    props_bwd = _propagators(op, ode_sign, reverse=True)

    frames_l, r_l = march_frames(props_fwd[:mid], u0_l)
    frames_r, r_r = march_frames(props_bwd[: n_grid - 1 - mid], u0_r)
    ul = frames_l[-1]
    ur = frames_r[-1]
    if not (np.all(np.isfinite(ul)) and np.all(np.isfinite(ur))):
        raise NumericalError("marching produced non-finite frames")

    overlap = ul.conj().T @ ur
    svals = np.linalg.svd(overlap, compute_uv=False)
    angles = np.arccos(np.clip(svals, 0.0, 1.0))
    dim = int(np.sum(angles < angle_tol))
    uncertain = bool(np.any((angles >= angle_tol) & (angles < ANGLE_TOL_UNCERTAIN)))

    if dim == 0:
        return ModeKernel(op=op, sign=sign, dim=0, basis=np.zeros((0, n_grid, m)),
                          tail_minus=None, tail_plus=None, principal_angles=angles,
                          uncertain=uncertain, matching_mismatch=0.0)

    uu, _, vvh = np.linalg.svd(overlap)
    a_cols = uu[:, :dim]
    b_cols = vvh.conj().T[:, :dim]
    x_l = ul @ a_cols
    x_r = ur @ b_cols
    # Align phases before averaging the two representatives.
    for a in range(dim):
        ph = np.vdot(x_l[:, a], x_r[:, a])
        if abs(ph) > 0:
            x_r[:, a] *= ph.conjugate() / abs(ph)
    mismatch = float(np.max(np.linalg.norm(x_l - x_r, axis=0)))
    x_mid = x_l + x_r
    x_mid, _ = np.linalg.qr(x_mid)
    x_mid = x_mid[:, :dim]

    left = _reconstruct(frames_l, r_l, frames_l[-1].conj().T @ x_mid)
    right = _reconstruct(frames_r, r_r, frames_r[-1].conj().T @ x_mid)

    basis = np.empty((dim, n_grid, m), dtype=complex)
    for a in range(dim):
        basis[a, : mid + 1] = left[:, :, a]
        basis[a, mid:] = right[::-1, :, a]
        basis[a, mid] = x_mid[:, a]

    tail_minus = _make_tail(op, ode_sign, side=-1, values=basis[:, 0, :])
    tail_plus = _make_tail(op, ode_sign, side=+1, values=basis[:, -1, :])

    kern = ModeKernel(op=op, sign=sign, dim=dim, basis=basis,
                      tail_minus=tail_minus, tail_plus=tail_plus,
                      principal_angles=angles, uncertain=uncertain,
                      matching_mismatch=mismatch)
    gram = _gram(kern, kern)
    try:
        inv_sqrt = _inv_sqrt(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"kernel Gram not positive definite: {exc}") from exc
    basis = np.einsum("ba,bkm->akm", inv_sqrt, basis)
    tail_minus = TailData(tail_minus.t_end, tail_minus.rates, tail_minus.vectors,
                          inv_sqrt.T @ tail_minus.coeffs)
    tail_plus = TailData(tail_plus.t_end, tail_plus.rates, tail_plus.vectors,
                         inv_sqrt.T @ tail_plus.coeffs)
    return ModeKernel(op=op, sign=sign, dim=dim, basis=basis,
                      tail_minus=tail_minus, tail_plus=tail_plus,
                      principal_angles=angles, uncertain=uncertain,
                      matching_mismatch=mismatch)


def _make_tail(op: ModeOperator, ode_sign: int, side: int, values: np.ndarray) -> TailData:
    t_end = op.curve.grid[-1 if side > 0 else 0]
    d = ode_sign * op.d_limit(side, frozen_t=t_end)
    w, v = np.linalg.eigh(d)
    coeffs = values @ v.conj()  # (dim, m) coefficients in the eigenbasis
    return TailData(t_end=float(t_end), rates=w, vectors=v, coeffs=coeffs)


def _inv_sqrt(gram: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (gram + gram.conj().T))
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("nonpositive Gram eigenvalue")
    return (v * (w ** -0.5)) @ v.conj().T


def _tail_moment(tail: TailData, side: int, a: int, b: int, weight_t: bool) -> complex:
    """Closed-form integral of conj(f_a) f_b (optionally times t) over one tail.

    The frozen end operator has an orthonormal eigenbasis, so the pairing is a
    single sum over eigendirections; growing directions carry zero coefficient
    by construction of the marching start frames.
    """
    ca = tail.coeffs[a]
    cb = tail.coeffs[b]
    total = 0.0 + 0.0j
    for p in range(len(tail.rates)):
        mu = 2.0 * tail.rates[p]
        if side > 0:
            if mu >= 0:
                continue
            base = -1.0 / mu
            tmom = tail.t_end * base + 1.0 / mu ** 2
        else:
            if mu <= 0:
                continue
            base = 1.0 / mu
            tmom = tail.t_end * base - 1.0 / mu ** 2
        total += np.conj(ca[p]) * cb[p] * (tmom if weight_t else base)
    return total


def _gram(ka: ModeKernel, kb: ModeKernel, weight_t: bool = False) -> np.ndarray:
    """Quadrature-plus-tails L^2 pairing of two kernel bases over the same mode/grid."""
    g = ka.op.curve.grid
    out = np.empty((ka.dim, kb.dim), dtype=complex)
    weight = g if weight_t else np.ones_like(g)
    for a in range(ka.dim):
        for b in range(kb.dim):
            integrand = np.einsum("km,km->k", ka.basis[a].conj(), kb.basis[b]) * weight
            val = complex(scipy.integrate.simpson(integrand.real, x=g)
                          + 1j * scipy.integrate.simpson(integrand.imag, x=g))
            if ka is kb and ka.tail_minus is not None:
                val += _tail_moment(ka.tail_minus, -1, a, b, weight_t)
                val += _tail_moment(ka.tail_plus, +1, a, b, weight_t)
            out[a, b] = val
    return out


def l2_moment(kern: ModeKernel, weight_t: bool = False) -> np.ndarray:
    """Matrix of <f_a, w(t) f_b> with w = 1 or w = t, quadrature plus analytic tails."""
    return _gram(kern, kern, weight_t=weight_t)


@dataclass(frozen=True, eq=False)
class SliceEnergyProfile:
    """Per-slice L^2 density of a mode kernel and its measured decay data."""

    ts: np.ndarray
    density: np.ndarray
    monotonicity_radius: float
    kappa_plus: float
    kappa_minus: float
    expected_rate: float

    @property
    def kappa(self) -> float:
        return min(self.kappa_plus, self.kappa_minus)


def slice_energy(kern: ModeKernel, fit_floor: float = 1e-280) -> SliceEnergyProfile:
    """Monotonicity radius and fitted exponential decay rates of F(t) = |f(t)|^2."""
    if kern.dim == 0:
        return SliceEnergyProfile(ts=np.zeros(0), density=np.zeros(0),
                                  monotonicity_radius=0.0, kappa_plus=np.inf,
                                  kappa_minus=np.inf, expected_rate=0.0)
    g = kern.op.curve.grid
    f = kern.slice_density()
    df = np.diff(f)
    k_plus = g[0]
    for k in range(len(df)):
        if df[k] >= 0:
            k_plus = g[k + 1]
    k_minus = g[-1]
    for k in range(len(df) - 1, -1, -1):
        if df[k] <= 0:
            k_minus = g[k]
    radius = max(abs(k_plus), abs(k_minus), 0.0)

    def fit(mask, side):
        sel = mask & (f > fit_floor)
        if np.sum(sel) < 3:
            return np.inf
        slope = np.polyfit(g[sel], np.log(f[sel]), 1)[0]
        return float(-slope * side)

    pad = 0.05 * (g[-1] - g[0])
    kappa_plus = fit(g > radius + pad, +1)
    kappa_minus = fit(g < -radius - pad, -1)
    expected = 2.0 * kern.op.gap
    return SliceEnergyProfile(ts=g, density=f, monotonicity_radius=radius,
                              kappa_plus=kappa_plus, kappa_minus=kappa_minus,
                              expected_rate=expected)


@dataclass(frozen=True, eq=False)
class TotalKernel:
    """All contributing modes at one dual-torus point."""

    xi: DualTorusPoint
    kernels: dict
    total_dim: int
    flipped_dims: dict
    weitzenboeck_ok: bool
    cutoff: float
    certified_tail: bool
    certificate: dict

    def nonzero_modes(self) -> list:
        return [n for n, k in self.kernels.items() if k.dim > 0]


def cutoff_policy(curve: NahmCurve, margin: float = 1.0) -> tuple[float, dict]:
    """Mode cutoff with a no-kernel certificate for every excluded mode.

    For excluded n, the generator satisfies min_t |eig D_n(t)| >= g0 :=
    cutoff - W with W = sup_t sum_i ||A_i||_op, and the slicewise density of
    any solution obeys F'' >= (4 g0^2 - 2 W') F with W' = sup_t sum_i ||A_i'||_op;
    4 g0^2 > 2 W' therefore rules out L^2 solutions (convexity).
    """
    w_op, w_deriv = curve.sup_norms()
    g0 = margin + np.sqrt(0.5 * max(w_deriv, 0.0)) * 1.05
    cutoff = w_op + g0
    cert = {
        "sup_a_op": w_op,
        "sup_da_op": w_deriv,
        "excluded_gap_lb": g0,
        "convexity_margin": 4.0 * g0 * g0 - 2.0 * w_deriv,
    }
    return float(cutoff), cert


def total_kernel(curve: NahmCurve, xi: DualTorusPoint, cm: CliffordModel,
                 margin: float = 1.0, angle_tol: float = ANGLE_TOL_DEFAULT,
                 extra_shells: int = 0, cache: "KernelCache | None" = None) -> TotalKernel:
    """Kernel dimensions summed over all certified-relevant modes at xi.

    The sign-flipped problem is run on every included mode as well; its total
    is recorded (zero for honest instanton curves).
    """
    lattice = xi.dual.lattice
    sing = singularity_set(curve.plus, curve.minus, lattice)
    if sing.distance_to(xi) <= 0:
        raise GapError("xi lies in the singular set")
    cutoff, cert = cutoff_policy(curve, margin)
    shell = 2.0 * np.pi * float(np.max(np.linalg.norm(xi.dual.basis, axis=1)))
    cutoff += extra_shells * shell
    modes = enumerate_modes(xi.dual, xi, cutoff)
    certified = cert["convexity_margin"] > 0
    kernels = {}
    flipped = {}
    for n in modes:
        op = build_mode_operator(curve, n, xi, cm)
        kernels[n] = _cached_kernel(cache, op, angle_tol, -1)
        flipped[n] = _cached_kernel(cache, op, angle_tol, +1).dim
    total = sum(k.dim for k in kernels.values())
    ok = all(v == 0 for v in flipped.values())
    return TotalKernel(xi=xi, kernels=kernels, total_dim=total, flipped_dims=flipped,
                       weitzenboeck_ok=ok, cutoff=cutoff, certified_tail=certified,
                       certificate=cert)


# ---------------------------------------------------------------------------
# Disk cache


class KernelCache:
    """Content-addressed kernel store: text-serialized arrays with a checksum."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    @staticmethod
    def curve_hash(curve: NahmCurve) -> str:
        h = hashlib.sha256()
        h.update(curve.grid.tobytes())
        h.update(curve.a.tobytes())
        h.update(curve.minus.gamma.tobytes())
        h.update(curve.minus.nn.tobytes())
        h.update(curve.plus.gamma.tobytes())
        h.update(curve.plus.nn.tobytes())
        return h.hexdigest()[:24]

    def key(self, op: ModeOperator, angle_tol: float, sign: int) -> str:
        h = hashlib.sha256()
        h.update(self.curve_hash(op.curve).encode())
        h.update(np.asarray(op.xi.coeffs).tobytes())
        h.update(np.asarray(op.n, dtype=np.int64).tobytes())
        h.update(np.float64(angle_tol).tobytes())
        h.update(np.int64(sign).tobytes())
        return h.hexdigest()[:32]

    def load(self, key: str):
        path = os.path.join(self.root, key + ".kern")
        if not os.path.exists(path):
            return None
        with open(path, "rb") as fh:
            blob = fh.read()
        check, _, payload = blob.partition(b"\n")
        if hashlib.sha256(payload).hexdigest().encode() != check:
            return None
        return payload.decode()

    def store(self, key: str, payload: str):
        data = payload.encode()
        check = hashlib.sha256(data).hexdigest().encode()
        with open(os.path.join(self.root, key + ".kern"), "wb") as fh:
            fh.write(check + b"\n" + data)


def _cached_kernel(cache: KernelCache | None, op: ModeOperator,
                   angle_tol: float, sign: int) -> ModeKernel:
    from . import serialize

    if cache is None:
        return mode_kernel(op, angle_tol, sign)
    key = cache.key(op, angle_tol, sign)
    payload = cache.load(key)
    if payload is not None:
        return serialize.mode_kernel_from_text(payload, op, sign)
    kern = mode_kernel(op, angle_tol, sign)
    cache.store(key, serialize.mode_kernel_to_text(kern))
    return kern
