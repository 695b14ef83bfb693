"""Exact algebraic side: graded pieces of model data on the 2-torus factor,
skyscraper stalk tables of their integral transform, predicted singularity
weights, and parabolic-degree arithmetic over exact rationals.

Requires the split T^3 = S^1 x T^2 (ComplexCoords); in the adapted frame the
antiholomorphic components of a matrix 1-form are

    M_taubar = (i/2) M_1,     M_wbar = (M_2 + i M_3) / 2,

constants that the test suite re-derives symbolically rather than trusts.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .model import (ModelSolution, Su2WeightVector, _joint_eigenbasis,
                    jordan_sizes_nilpotent, singularity_set, twist)
from .torus import ComplexCoords, DualTorusPoint, Lattice3

ZERO_TOL = 1e-8


def antiholomorphic_parts(triple: np.ndarray, cc: ComplexCoords):
    """(M_taubar, M_wbar) of a matrix-valued 1-form sum_i M_i dx^i in the adapted frame."""
    m = np.asarray(triple, dtype=complex)
    frame = cc.frame
    adapted = np.stack([sum(frame[j, a] * m[j] for j in range(3)) for a in range(3)])
    m_taubar = 0.5j * adapted[0]
    m_wbar = 0.5 * (adapted[1] + 1j * adapted[2])
    return m_taubar, m_wbar


def _t2_dual_basis(cc: ComplexCoords) -> np.ndarray:
    """2x2 dual basis (rows) of the T^2 factor lattice in the adapted plane frame."""
    b = cc.lattice.basis
    plane = cc.frame[:, 1:]              # adapted in-plane axes
    b2 = plane.T @ b[:, 1:]              # generators 2,3 in plane coordinates
    return np.linalg.inv(b2)


def reduce_t2(pair, cc: ComplexCoords) -> np.ndarray:
    """Reduce a T^2-dual covector (plane components) into [0,1)^2 dual coefficients."""
    dual = _t2_dual_basis(cc)
    coeffs = np.linalg.solve(dual.T, np.asarray(pair, dtype=float))
    coeffs = coeffs - np.floor(coeffs + 1e-12)
    coeffs[np.abs(coeffs) < 1e-12] = 0.0
    return coeffs


@dataclass(frozen=True, eq=False)
class SemistableSummand:
    alpha_coeffs: np.ndarray        # T^2-dual coefficients in [0,1)^2
    jordan: tuple[int, ...]

    @property
    def length(self) -> int:
        return sum(self.jordan)


@dataclass(frozen=True, eq=False)
class SemistableDeg0:
    """Degree-0 semistable data: flat twist points with nilpotent Jordan types."""

    summands: tuple[SemistableSummand, ...]

    @property
    def rank(self) -> int:
        return sum(s.length for s in self.summands)

    def at_zero(self) -> tuple[int, ...]:
        for s in self.summands:
            d = s.alpha_coeffs
            d = np.minimum(np.abs(d), np.abs(1 - np.abs(d)))
            if np.linalg.norm(d) <= 1e-7:
                return s.jordan
        return ()


def graded_from_model(ms: ModelSolution, cc: ComplexCoords) -> SemistableDeg0:
    """Semistable degree-0 data of one side's model pair (twisted so the point of
    interest sits at 0).

    Restricts Gamma_wbar + N_wbar to the zero eigenspace of Gamma_taubar and
    groups generalized eigenvalues into dual-2-torus points; an empty zero
    eigenspace gives the empty bundle (the point is not in this side's
    spectrum).
    """
    g_taubar, g_wbar = antiholomorphic_parts(ms.gamma, cc)
    _, n_wbar = antiholomorphic_parts(ms.nn, cc)

    # Gamma_taubar = (i/2) Gamma_1 is Hermitian (i times skew-Hermitian).
    evals, evecs = np.linalg.eigh(g_taubar)
    scale = max(1.0, float(np.max(np.abs(evals))) if len(evals) else 1.0)
    zero_sel = np.abs(evals) <= ZERO_TOL * scale
    if not np.any(zero_sel):
        return SemistableDeg0(summands=())
    x0 = evecs[:, zero_sel]

    m_w = x0.conj().T @ g_wbar @ x0
    n_w = x0.conj().T @ n_wbar @ x0

    # Split by the commuting Hermitian pair behind the semisimple part.
    adapted = np.stack([sum(cc.frame[j, a] * ms.gamma[j] for j in range(3)) for a in range(3)])
    h2 = x0.conj().T @ (-1j * adapted[1]) @ x0
    h3 = x0.conj().T @ (-1j * adapted[2]) @ x0
    joint = _joint_eigenbasis([0.5 * (h2 + h2.conj().T), 0.5 * (h3 + h3.conj().T)], 1e-8)

    summands = []
    for lam, q in joint:
        xi2, xi3 = lam[0] / (2.0 * np.pi), lam[1] / (2.0 * np.pi)
        alpha = reduce_t2((xi2, xi3), cc)
        nil = q.conj().T @ n_w @ q
        jordan = jordan_sizes_nilpotent(nil)
        summands.append(SemistableSummand(alpha_coeffs=alpha, jordan=jordan))

    merged: dict[tuple, list] = {}
    order = []
    for s in summands:
        key = tuple(np.round(s.alpha_coeffs, 7))
        if key not in merged:
            merged[key] = []
            order.append(key)
        merged[key].extend(s.jordan)
    out = tuple(
        SemistableSummand(alpha_coeffs=np.asarray(key, dtype=float),
                          jordan=tuple(sorted(merged[key], reverse=True)))
        for key in order
    )
    return SemistableDeg0(summands=out)


@dataclass(frozen=True, eq=False)
class FMStalkTable:
    """Skyscraper stalk lengths of the transform: alpha -> multiset of lengths."""

    stalks: tuple[tuple[tuple[float, float], tuple[int, ...]], ...]

    def total_length(self) -> int:
        return sum(sum(lengths) for _, lengths in self.stalks)

    def at(self, alpha, tol: float = 1e-7) -> tuple[int, ...]:
        a = np.asarray(alpha, dtype=float)
        for key, lengths in self.stalks:
            d = np.abs(np.asarray(key) - a)
            d = np.minimum(d, 1 - d)
            if np.linalg.norm(d) <= tol:
                return lengths
        return ()


def fm_stalks(v: SemistableDeg0) -> FMStalkTable:
    """Stalk table of the degree-0 transform: one entry per spectrum point,
    lengths equal to the Jordan block sizes; everything else is zero."""
    return FMStalkTable(stalks=tuple(
        ((float(s.alpha_coeffs[0]), float(s.alpha_coeffs[1])), s.jordan)
        for s in v.summands
    ))


def predicted_weights(plus: SemistableDeg0, minus: SemistableDeg0):
    """Predicted (positive, negative) weight vectors at the examined point.

    Positive weights come from the plus-side stalk at 0, negative from the
    minus side; inputs must already be twisted so the point sits at 0.
    """
    return (Su2WeightVector(weights=plus.at_zero()),
            Su2WeightVector(weights=minus.at_zero()))


def predict_point_weights(plus_ms: ModelSolution, minus_ms: ModelSolution,
                          p: DualTorusPoint, l: Lattice3, cc: ComplexCoords):
    """Both prediction routes at a singular point, cross-asserted.

    Route 1 (Jordan/stalk): graded pieces of the twisted models.  Route 2
    (su(2)): irreducible ranks of the restricted representations.  A mismatch
    is a conventions bug, reported as an internal-consistency error.
    """
    g_plus = graded_from_model(twist(plus_ms, p), cc)
    g_minus = graded_from_model(twist(minus_ms, p), cc)
    jordan_route = predicted_weights(g_plus, g_minus)

    sing = singularity_set(plus_ms, minus_ms, l)
    from .torus import torus_distance
    best = min(sing.points, key=lambda sp: torus_distance(sp.point, p))
    if torus_distance(best.point, p) > 1e-7:
        su2_route = (Su2WeightVector(weights=()), Su2WeightVector(weights=()))
    else:
        su2_route = (best.weights_plus(), best.weights_minus())

    if (jordan_route[0].weights != su2_route[0].weights
            or jordan_route[1].weights != su2_route[1].weights):
        raise ValidationError([
            (f"weight routes disagree: Jordan {jordan_route[0].weights}/{jordan_route[1].weights} "
             f"vs su(2) {su2_route[0].weights}/{su2_route[1].weights}", 0.0)
        ])
    return jordan_route


# ---------------------------------------------------------------------------
# Parabolic ledger arithmetic (exact rationals)


@dataclass(frozen=True)
class ParabolicLedger:
    """Weight filtration shadow: per-divisor (weight, graded rank) lists and the
    degree of the zero-level bundle on a projective-line slice."""

    divisor1: tuple[tuple[Fraction, int], ...]
    divisor2: tuple[tuple[Fraction, int], ...]
    c1: int

    def rank(self) -> int:
        r1 = sum(r for _, r in self.divisor1)
        r2 = sum(r for _, r in self.divisor2)
        if r1 != r2:
            raise ValidationError([("divisor graded ranks disagree", float(abs(r1 - r2)))])
        return r1


def parabolic_degree(ledger: ParabolicLedger) -> Fraction:
    """c1 minus the weighted graded ranks over both divisors, exactly."""
    total = Fraction(ledger.c1)
    for div in (ledger.divisor1, ledger.divisor2):
        for a, r in div:
            a = Fraction(a)
            if not (Fraction(-1) < a <= Fraction(0)):
                raise ValidationError([(f"weight {a} outside (-1, 0]", float(a))])
            total -= a * r
    return total


def instanton_ledger(s1_coords, mults=None) -> ParabolicLedger:
    """Ledger of a flat (commuting) curve from the circle coordinates of its spectrum.

    s1_coords: exact rationals in [0, 1), one per spectrum point; mults the
    multiplicities.  Sections behave like |z|^xi at the t -> -infinity divisor
    and |z'|^{-xi} at the other end, so the weights are -xi and (xi - 1 or 0),
    and the zero-level degree counts the normalizing twists; the total degree
    vanishes identically, which is the content of the degree-zero theorem for
    these curves.
    """
    coords = [Fraction(x) for x in s1_coords]
    mults = list(mults) if mults is not None else [1] * len(coords)
    div1 = []
    div2 = []
    c1 = 0
    for xi, m in zip(coords, mults):
        if not (0 <= xi < 1):
            raise ValidationError([(f"circle coordinate {xi} outside [0,1)", float(xi))])
        div1.append((-xi, m))
        if xi == 0:
            div2.append((Fraction(0), m))
        else:
            div2.append((xi - 1, m))
            c1 -= m
    return ParabolicLedger(divisor1=tuple(div1), divisor2=tuple(div2), c1=c1)
