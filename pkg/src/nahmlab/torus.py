"""Lattices, tori, dual tori, flat twists and complex coordinates.

A lattice L in R^3 is stored as the columns of an invertible 3x3 matrix
(units of length).  Covectors on the dual torus are stored as coefficient
vectors with respect to the dual basis, so lattice membership and
fundamental-domain reduction are exact floor operations; Euclidean norms go
through the Gram matrix of the dual basis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLatticeError, ResourceLimitError

_SINGULAR_TOL = 1e-12
# Reduction snaps coefficients this close to 1 back to 0 (tie toward 0).
_TIE_EPS = 1e-12

DEFAULT_MODE_LIMIT = 200_000


@dataclass(frozen=True, eq=False)
class Lattice3:
    """Rank-3 lattice in Euclidean R^3; ``basis`` holds generators as columns."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(3, 3)
        object.__setattr__(self, "basis", b)
        if abs(np.linalg.det(b)) <= _SINGULAR_TOL:
            raise InvalidLatticeError(f"basis determinant {np.linalg.det(b):.3e} too small")

    def volume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    def point(self, coeffs) -> np.ndarray:
        """Euclidean position of the lattice combination with given coefficients."""
        return self.basis @ np.asarray(coeffs, dtype=float)

    def is_split(self, tol: float = 1e-12) -> bool:
        """True if generator 1 is unit length and orthogonal to generators 2, 3."""
        b = self.basis
        return (
            abs(np.linalg.norm(b[:, 0]) - 1.0) <= tol
            and abs(b[:, 0] @ b[:, 1]) <= tol
            and abs(b[:, 0] @ b[:, 2]) <= tol
        )


@dataclass(frozen=True, eq=False)
class DualLattice3:
    """Dual lattice; ``basis`` holds dual generators as rows (covectors)."""

    basis: np.ndarray
    lattice: Lattice3

    def gram(self) -> np.ndarray:
        """Gram matrix of the dual generators (Euclidean pairing)."""
        return self.basis @ self.basis.T

    def covector(self, coeffs) -> np.ndarray:
        """Euclidean components of ``sum_i coeffs[i] * dual_basis[i]``."""
        return np.asarray(coeffs, dtype=float) @ self.basis

    def coeffs_of(self, euclidean) -> np.ndarray:
        """Inverse of :meth:`covector`."""
        return np.linalg.solve(self.basis.T, np.asarray(euclidean, dtype=float))

    def norm(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(np.sqrt(c @ self.gram() @ c))


def dual_lattice(l: Lattice3) -> DualLattice3:
    """Dual lattice of ``l``; pairing of the two bases is the identity matrix."""
    rows = np.linalg.inv(l.basis)
    return DualLattice3(basis=rows, lattice=l)


@dataclass(frozen=True, eq=False)
class DualTorusPoint:
    """Point of the dual torus, stored as reduced dual-basis coefficients in [0, 1)."""

    coeffs: np.ndarray
    dual: DualLattice3

    def covector(self) -> np.ndarray:
        return self.dual.covector(self.coeffs)

    def shifted(self, delta_coeffs) -> "DualTorusPoint":
        """Reduced translate by a raw coefficient offset."""
        return reduce(self.coeffs + np.asarray(delta_coeffs, dtype=float), self.dual)

    def __sub__(self, other: "DualTorusPoint") -> np.ndarray:
        return self.coeffs - other.coeffs


def reduce(xi, dl: DualLattice3) -> DualTorusPoint:
    """Reduce raw dual-basis coefficients into the fundamental domain [0, 1)^3.

    Coefficients within 1e-12 below an integer are snapped to that integer
    first, so domain-boundary ties break toward 0.
    """
    c = np.asarray(xi, dtype=float).reshape(3).copy()
    c = c - np.floor(c + _TIE_EPS)
    c[np.abs(c) < _TIE_EPS] = 0.0
    return DualTorusPoint(coeffs=c, dual=dl)


def reduce_euclidean(xi_eucl, dl: DualLattice3) -> DualTorusPoint:
    """Reduce a covector given by Euclidean components."""
    return reduce(dl.coeffs_of(xi_eucl), dl)


def torus_distance(a: DualTorusPoint, b: DualTorusPoint) -> float:
    """Euclidean covector distance on the dual torus (min over lattice translates).

    A 3x3x3 block of translates suffices for reduced inputs as long as the
    dual basis is not badly skewed; the brute-force test widens the box.
    """
    diff = a.coeffs - b.coeffs
    gram = a.dual.gram()
    best = np.inf
    for shift in itertools.product((-1.0, 0.0, 1.0), repeat=3):
        v = diff + np.asarray(shift)
        best = min(best, float(v @ gram @ v))
    return float(np.sqrt(best))


def enumerate_modes(dl: DualLattice3, xi: DualTorusPoint, cutoff: float,
                    limit: int = DEFAULT_MODE_LIMIT) -> list[tuple[int, int, int]]:
    """All dual-lattice vectors n with ``|2 pi (n - xi)| <= cutoff``.

    Returned in lexicographic order of integer coordinates.  ``n`` ranges over
    an integer box sized from the smallest singular value of the dual basis,
    which bounds the Euclidean norm of any admissible coefficient vector.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    radius = cutoff / (2.0 * np.pi)
    sigma_min = np.linalg.svd(dl.basis, compute_uv=False)[-1]
    span = int(np.ceil(radius / sigma_min + 1.0)) + 1
    if (2 * span + 1) ** 3 > 8 * limit:
        raise ResourceLimitError(f"mode box {2*span+1}^3 exceeds limit {limit}")
    gram = dl.gram()
    out = []
    for n in itertools.product(range(-span, span + 1), repeat=3):
        v = np.asarray(n, dtype=float) - xi.coeffs
        if 2.0 * np.pi * np.sqrt(v @ gram @ v) <= cutoff:
            out.append(n)
    if len(out) > limit:
        raise ResourceLimitError(f"{len(out)} modes exceed limit {limit}")
    return sorted(out)


def poincare_phase(l: Lattice3, x_coeffs, v_coeffs) -> complex:
    """Unit phase exp(2 pi i <x, v>) for x in the torus, v in the dual lattice.

    ``x_coeffs`` are lattice-basis coefficients of x, ``v_coeffs`` integer
    dual-basis coefficients of v, so the pairing is just the dot product.
    Both reductions below are exact symmetries of the phase and keep the
    argument small enough for full float accuracy.
    """
    x = np.asarray(x_coeffs, dtype=float)
    x = x - np.floor(x)
    v = np.asarray(v_coeffs, dtype=float)
    pairing = float(np.dot(x, v))
    pairing -= np.floor(pairing)
    return complex(np.exp(2j * np.pi * pairing))


@dataclass(frozen=True, eq=False)
class ComplexCoords:
    """Designation of a split T^3 = S^1 x T^2 with coordinates tau = t + i x^1, w = x^2 + i x^3.

    Only available when the first lattice generator is a unit vector orthogonal
    to the other two; then x^1 is the S^1 coordinate and (x^2, x^3) are
    Euclidean coordinates on the T^2 factor.
    """

    lattice: Lattice3
    frame: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.lattice.is_split():
            raise InvalidLatticeError(
                "complex coordinates need a split lattice "
                "(unit first generator orthogonal to the T^2 factor)"
            )
        b = self.lattice.basis
        e1 = b[:, 0]
        # Orthonormal frame adapted to the split: e1, then a basis of the T^2 plane.
        u = b[:, 1] / np.linalg.norm(b[:, 1])
        w = b[:, 2] - (b[:, 2] @ u) * u
        w = w / np.linalg.norm(w)
        object.__setattr__(self, "frame", np.column_stack([e1, u, w]))

    def dual_t2_components(self, p: DualTorusPoint) -> tuple[float, complex]:
        """Split a dual-torus point into (circle coordinate, T^2-dual complex point).

        Returns (xi_1, xi_2 + i xi_3) in the adapted orthonormal frame.
        """
        e = p.covector() @ self.frame
        return float(e[0]), complex(e[1], e[2])


def standard_lattice(basis=None) -> Lattice3:
    """Z^3 by default, or the lattice with the given 3x3 column basis."""
    if basis is None:
        basis = np.eye(3)
    return Lattice3(basis=np.asarray(basis, dtype=float))
