"""Monopole assembly on the dual torus: Higgs samples, link unitaries,
Bogomolny residuals, singularity-weight fits and determinant winding.

The connection is represented only through link unitaries (polar factors of
frame overlaps, or exact transports for synthetic fields); no global gauge is
ever constructed, so all reported quantities are holonomy-honest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg

from .dirac import ModeKernel, TotalKernel, l2_moment
from .errors import LinkError, NumericalError, ValidationError
from .model import Su2WeightVector
from .synthetic import DiracMonopoleField, SampledMonopole

LINK_SV_MIN = 0.1


@dataclass(frozen=True, eq=False)
class MonopoleSample:
    """(rank, Higgs matrix, frame reference) at one dual-torus point."""

    xi_coeffs: np.ndarray
    rank: int
    phi: np.ndarray
    frame_id: str
    mode_order: tuple

    def higgs_norm(self) -> float:
        if self.rank == 0:
            return 0.0
        return float(np.linalg.norm(self.phi, 2))

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of -i Phi, sorted descending."""
        if self.rank == 0:
            return np.zeros(0)
        return np.sort(np.linalg.eigvalsh(-1j * self.phi))[::-1]


def higgs_field(tk: TotalKernel) -> MonopoleSample:
    """Higgs matrix <f_a, 2 pi i t f_b> of a total kernel; block diagonal across modes.

    Skew-Hermiticity is structural (real measure, orthonormal frame, i t
    multiplier) and asserted numerically.
    """
    modes = tk.nonzero_modes()
    dims = [tk.kernels[n].dim for n in modes]
    total = sum(dims)
    phi = np.zeros((total, total), dtype=complex)
    at = 0
    for n, d in zip(modes, dims):
        block = 2j * np.pi * l2_moment(tk.kernels[n], weight_t=True)
        phi[at:at + d, at:at + d] = block
        at += d
    if total:
        skew = float(np.linalg.norm(phi + phi.conj().T))
        if skew > 1e-10 * max(1.0, float(np.linalg.norm(phi))):
            raise NumericalError(f"Higgs sample not skew-Hermitian (residual {skew:.3e})")
    frame_id = "kern:" + ",".join(f"{n}:{d}" for n, d in zip(modes, dims))
    return MonopoleSample(xi_coeffs=np.asarray(tk.xi.coeffs).copy(), rank=total,
                          phi=phi, frame_id=frame_id, mode_order=tuple(modes))


def kernel_cross_gram(ka: ModeKernel, kb: ModeKernel) -> np.ndarray:
    """L^2 pairing between kernel bases at two nearby twists of the same curve.

    Quadrature over the shared grid plus closed-form cross tails (the two
    frozen end operators differ, so rates pair as lambda_p + mu_q).
    """
    g = ka.op.curve.grid
    out = np.empty((ka.dim, kb.dim), dtype=complex)
    for a in range(ka.dim):
        for b in range(kb.dim):
            integrand = np.einsum("km,km->k", ka.basis[a].conj(), kb.basis[b])
            val = complex(scipy.integrate.simpson(integrand.real, x=g)
                          + 1j * scipy.integrate.simpson(integrand.imag, x=g))
            for side, ta, tb in ((-1, ka.tail_minus, kb.tail_minus),
                                 (+1, ka.tail_plus, kb.tail_plus)):
                if ta is None or tb is None:
                    continue
                cross = ta.vectors.conj().T @ tb.vectors
                for p in range(len(ta.rates)):
                    for q in range(len(tb.rates)):
                        mu = ta.rates[p] + tb.rates[q]
                        if side > 0:
                            if mu >= 0:
                                continue
                            base = -1.0 / mu
                        else:
                            if mu <= 0:
                                continue
                            base = 1.0 / mu
                        amp = np.conj(ta.coeffs[a, p]) * tb.coeffs[b, q] * cross[p, q]
                        val += amp * base
            out[a, b] = val
    return out


@dataclass(frozen=True, eq=False)
class LinkOverlap:
    """Polar-unitarized frame overlap between two adjacent samples."""

    u: np.ndarray
    smallest_singular_value: float


def polar_unitary(g: np.ndarray) -> tuple[np.ndarray, float]:
    uu, s, vvh = np.linalg.svd(g)
    return uu @ vvh, float(s[-1]) if len(s) else 0.0


def connection_links(tk_a: TotalKernel, tk_b: TotalKernel,
                     label_shift=(0, 0, 0)) -> LinkOverlap:
    """Link unitary between the kernel frames at two adjacent dual-torus points.

    ``label_shift`` aligns mode labels across a fundamental-domain boundary:
    mode n at the first point pairs with mode n + shift at the second (the
    lattice action on sections multiplies by the corresponding character, which
    relabels Fourier modes without extra phases on invariant profiles).
    """
    modes_a = tk_a.nonzero_modes()
    shift = tuple(int(s) for s in label_shift)
    pairs = []
    for n in modes_a:
        n_b = tuple(n[i] + shift[i] for i in range(3))
        if n_b not in tk_b.kernels or tk_b.kernels[n_b].dim != tk_a.kernels[n].dim:
            raise LinkError(f"mode {n} has no rank-matched partner {n_b}")
        pairs.append((n, n_b))
    dim = sum(tk_a.kernels[n].dim for n, _ in pairs)
    g = np.zeros((dim, dim), dtype=complex)
    at = 0
    for n, n_b in pairs:
        d = tk_a.kernels[n].dim
        g[at:at + d, at:at + d] = kernel_cross_gram(tk_a.kernels[n], tk_b.kernels[n_b])
        at += d
    u, sv = polar_unitary(g) if dim else (np.zeros((0, 0), dtype=complex), 1.0)
    if dim and sv < LINK_SV_MIN:
        raise LinkError(f"frame overlap singular value {sv:.3e} below {LINK_SV_MIN}")
    return LinkOverlap(u=u, smallest_singular_value=sv)


# ---------------------------------------------------------------------------
# Lattice-gauge Bogomolny residual


def _logm_unitary(u: np.ndarray) -> np.ndarray:
    """Principal logarithm of a unitary matrix (skew-Hermitian result)."""
    w, v = np.linalg.eig(u)
    logw = 1j * np.angle(w)
    out = (v * logw) @ np.linalg.inv(v)
    return 0.5 * (out - out.conj().T)


def _loop_holonomy(sm: SampledMonopole, site, moves) -> np.ndarray:
    """Ordered transport around a closed lattice loop given (axis, direction) moves."""
    u = np.eye(sm.rank, dtype=complex)
    cur = tuple(site)
    for axis, d in moves:
        if d > 0:
            u = sm.links[(cur, axis)] @ u
            cur = tuple(cur[i] + (1 if i == axis else 0) for i in range(3))
        else:
            prev = tuple(cur[i] - (1 if i == axis else 0) for i in range(3))
            u = sm.links[(prev, axis)].conj().T @ u
            cur = prev
    if cur != tuple(site):
        raise ValidationError([("loop not closed", 0.0)])
    return u


def bogomolny_residual(sm: SampledMonopole, site) -> dict:
    """Max-norm residual of F = * grad(Phi) per coordinate 2-plane at one site.

    The curvature is the clover average of the four plaquette logs around the
    site (second-order accurate at the site itself); centered covariant
    differences approximate grad(Phi) on the steps; the Hodge dual uses the
    Gram matrix of the step vectors.  Residuals are normalized per unit
    coordinate area.
    """
    idx = tuple(int(i) for i in site)
    for a in range(3):
        if idx[a] - 1 < 0 or idx[a] + 1 >= sm.shape[a]:
            raise ValidationError([("site needs both neighbors in every axis", 0.0)])

    def nb(base, axis, d):
        return tuple(base[i] + (d if i == axis else 0) for i in range(3))

    def link(base, axis):
        return sm.links[(base, axis)]

    grad = []
    for c in range(3):
        up = link(idx, c).conj().T @ sm.phi[nb(idx, c, +1)] @ link(idx, c)
        dn = link(nb(idx, c, -1), c) @ sm.phi[nb(idx, c, -1)] @ link(nb(idx, c, -1), c).conj().T
        grad.append(0.5 * (up - dn))

    gram = sm.steps @ sm.steps.T
    ginv = np.linalg.inv(gram)
    vol = float(np.linalg.det(sm.steps))
    eps = np.zeros((3, 3, 3))
    for (a, b, c), s in (((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1),
                         ((0, 2, 1), -1), ((2, 1, 0), -1), ((1, 0, 2), -1)):
        eps[a, b, c] = s

    out = {}
    hs = np.linalg.norm(sm.steps, axis=1)
    for a in range(3):
        for b in range(a + 1, 3):
            clover = np.zeros((sm.rank, sm.rank), dtype=complex)
            for moves in (
                ((a, +1), (b, +1), (a, -1), (b, -1)),
                ((b, +1), (a, -1), (b, -1), (a, +1)),
                ((a, -1), (b, -1), (a, +1), (b, +1)),
                ((b, -1), (a, +1), (b, +1), (a, -1)),
            ):
                clover += _logm_unitary(_loop_holonomy(sm, idx, moves))
            # Transport is Pexp(-int A), so small-loop holonomy is exp(-F).
            f_ab = -0.25 * clover
            dual = np.zeros_like(f_ab)
            for c in range(3):
                for d in range(3):
                    if eps[a, b, c]:
                        dual += vol * eps[a, b, c] * ginv[c, d] * grad[d]
            out[(a, b)] = float(np.linalg.norm(f_ab - dual, 2)) / (hs[a] * hs[b])
    return out


def bogomolny_max_residual(sm: SampledMonopole) -> float:
    """Max residual over all interior sites and planes."""
    worst = 0.0
    for idx in np.ndindex(sm.shape):
        if any(idx[a] == 0 or idx[a] == sm.shape[a] - 1 for a in range(3)):
            continue
        worst = max(worst, max(bogomolny_residual(sm, idx).values()))
    return worst


# ---------------------------------------------------------------------------
# Weight extraction


@dataclass(frozen=True, eq=False)
class WeightReport:
    """Fitted integer weights at a singular point plus algebraic predictions."""

    point: np.ndarray
    radii: tuple
    per_ray_fits: np.ndarray        # (n_rays, rank) fitted slopes k
    fitted: np.ndarray              # mean over rays
    rounded: tuple
    max_round_dev: float
    isotropy_spread: float
    flagged: bool
    predicted_plus: Su2WeightVector | None = None
    predicted_minus: Su2WeightVector | None = None
    winding_sum: int | None = None

    def multiset_check(self) -> bool | None:
        """Fitted positive part == +w_plus and negative part == -w_minus (as multisets)."""
        if self.predicted_plus is None or self.predicted_minus is None or self.flagged:
            return None
        pos = sorted((k for k in self.rounded if k > 0), reverse=True)
        neg = sorted((-k for k in self.rounded if k < 0), reverse=True)
        zero = [k for k in self.rounded if k == 0]
        return (not zero
                and pos == list(self.predicted_plus.weights)
                and neg == list(self.predicted_minus.weights))

    @property
    def total(self) -> int:
        return int(sum(self.rounded))


def default_rays():
    dirs = np.array([
        [1.0, 0.0, 0.0],
        [-0.3, 0.9, 0.1],
        [0.2, -0.5, 0.8],
    ])
    return dirs / np.linalg.norm(dirs, axis=1)[:, None]


def fit_singularity_weights(sampler, point, radii, directions=None,
                            predictions=None, iso_tol: float = 0.1,
                            round_tol: float = 0.1) -> WeightReport:
    """Fit eigenvalues of -i Phi to k/(2R) + c along rays into a singular point.

    ``sampler(y)`` returns the Higgs matrix at the Euclidean dual point y.
    Dirac-type behavior is direction independent, so per-index slopes must
    agree across rays (isotropy); non-integer or anisotropic fits are flagged,
    never silently rounded.
    """
    point = np.asarray(point, dtype=float)
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    if directions is None:
        directions = default_rays()
    if len(directions) < 3 or len(radii) < 4:
        raise ValidationError([("need >= 3 rays and >= 4 radii", 0.0)])

    per_ray = []
    rank = None
    for d in directions:
        eigs = []
        for r in radii:
            phi = sampler(point + r * np.asarray(d))
            ev = np.sort(np.linalg.eigvalsh(-1j * phi))[::-1]
            if rank is None:
                rank = len(ev)
            elif len(ev) != rank:
                raise ValidationError([("rank changed along ray (singularity crossed?)", 0.0)])
            eigs.append(ev)
        eigs = np.asarray(eigs)          # (n_radii, rank)
        design = np.column_stack([1.0 / (2.0 * radii), np.ones_like(radii)])
        coef, *_ = np.linalg.lstsq(design, eigs, rcond=None)
        per_ray.append(coef[0])          # slopes k_i
    per_ray = np.asarray(per_ray)

    fitted = per_ray.mean(axis=0)
    spread = float(np.max(per_ray.max(axis=0) - per_ray.min(axis=0))) if rank else 0.0
    rounded = tuple(int(round(v)) for v in fitted)
    max_dev = float(np.max(np.abs(fitted - np.asarray(rounded)))) if rank else 0.0
    flagged = (max_dev >= round_tol) or (spread >= iso_tol)

    pred_p = pred_m = None
    if predictions is not None:
        pred_p, pred_m = predictions
    return WeightReport(point=point, radii=tuple(float(r) for r in radii),
                        per_ray_fits=per_ray, fitted=fitted, rounded=rounded,
                        max_round_dev=max_dev, isotropy_spread=spread,
                        flagged=flagged, predicted_plus=pred_p, predicted_minus=pred_m)


# ---------------------------------------------------------------------------
# Determinant winding of the scattering map


def winding_number(fn, n_init: int = 48, det_floor: float = 1e-8,
                   max_depth: int = 14) -> int:
    """Winding of det(fn(theta)) around theta in [0, 2 pi), with adaptive refinement.

    ``fn`` maps an angle to an invertible matrix.  Phase increments between
    consecutive samples are kept below pi/2 by subdividing; the total must be
    an integer multiple of 2 pi within 5%.
    """
    thetas = list(np.linspace(0.0, 2.0 * np.pi, n_init, endpoint=False))
    thetas.append(2.0 * np.pi)
    dets = {}

    def det_at(th):
        if th not in dets:
            d = complex(np.linalg.det(np.asarray(fn(th % (2.0 * np.pi)), dtype=complex)))
            if abs(d) < det_floor:
                raise NumericalError(f"det magnitude {abs(d):.3e} below {det_floor} on circle")
            dets[th] = d
        return dets[th]

    total = 0.0
    stack = [(thetas[i], thetas[i + 1]) for i in range(len(thetas) - 1)]
    while stack:
        a, b = stack.pop()
        da, db = det_at(a), det_at(b)
        inc = np.angle(db / da)
        if abs(inc) > 0.5 * np.pi:
            if b - a < 2.0 * np.pi / n_init / 2 ** max_depth:
                raise NumericalError("phase increment not resolving under refinement")
            mid = 0.5 * (a + b)
            stack.append((a, mid))
            stack.append((mid, b))
        else:
            total += inc
    w = total / (2.0 * np.pi)
    if abs(w - round(w)) > 0.05:
        raise NumericalError(f"winding {w:.4f} not an integer")
    return int(round(w))


def _scattering_matrix(field: DiracMonopoleField, w_point: np.ndarray,
                       center: np.ndarray, t_axis: np.ndarray, eps: float,
                       n_sub: int = 64) -> np.ndarray:
    """Scattering transport across the singular level, in cap frames.

    The frame at each cap is pinned by radial parallel transport from the cap
    center, which extends over the whole cap (it never meets the singularity),
    so the winding of the determinant is frame-unambiguous.
    """
    t_axis = np.asarray(t_axis, dtype=float)
    t_axis = t_axis / np.linalg.norm(t_axis)
    c_minus = center - eps * t_axis
    c_plus = center + eps * t_axis
    w_minus = w_point - eps * t_axis
    w_plus = w_point + eps * t_axis

    radial_in = field.transport_chain([c_minus, w_minus])
    # Across: subdivided t-line with the -i Phi scattering factor per step.
    u = np.eye(field.rank, dtype=complex)
    ts = np.linspace(0.0, 1.0, n_sub + 1)
    pts = w_minus[None, :] + ts[:, None] * (w_plus - w_minus)[None, :]
    for k in range(n_sub):
        seg = field.link(pts[k], pts[k + 1])
        mid = 0.5 * (pts[k] + pts[k + 1])
        dt = 2.0 * eps / n_sub
        u = seg @ scipy.linalg.expm(1j * field.phi(mid) * dt) @ u
    radial_out = field.transport_chain([w_plus, c_plus])
    return radial_out @ u @ radial_in


def det_winding_weight_sum(field: DiracMonopoleField, center=None, t_axis=(1.0, 0.0, 0.0),
                           radius: float = 0.05, eps: float = 0.05) -> int:
    """Winding of det of the scattering map around a circle in the transverse slice.

    Equals the sum of the weights at the enclosed singular point; an empty
    circle gives zero.
    """
    center = np.asarray(center if center is not None else field.center, dtype=float)
    t_axis = np.asarray(t_axis, dtype=float)
    t_axis = t_axis / np.linalg.norm(t_axis)
    a = np.array([0.0, 1.0, 0.0]) if abs(t_axis[1]) < 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = a - (a @ t_axis) * t_axis
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(t_axis, e1)

    def fn(theta):
        w_point = center + radius * (np.cos(theta) * e1 + np.sin(theta) * e2)
        return _scattering_matrix(field, w_point, center, t_axis, eps)

    return winding_number(fn)
