"""Deterministic generators for model data and test curves.

Everything here is seeded: the same seed reproduces the same matrices
bit-for-bit, which the reporting layer relies on.
"""

from __future__ import annotations

import numpy as np

from .flow import NahmCurve, curve_from_samples
from .model import ModelSolution, validate_model_solution
from .torus import Lattice3


def su2_generators(dim: int) -> np.ndarray:
    """Skew-Hermitian triple e_i = -i J_i of the irreducible representation of size dim.

    Satisfies e_i = [e_j, e_k] for even permutations; dim = 2j + 1.
    """
    j = (dim - 1) / 2.0
    m = np.arange(j, -j - 1, -1)
    jz = np.diag(m)
    jp = np.zeros((dim, dim))
    for a in range(dim - 1):
        jp[a, a + 1] = np.sqrt(j * (j + 1) - m[a + 1] * (m[a + 1] + 1))
    jm = jp.T
    j1 = 0.5 * (jp + jm)
    j2 = (jp - jm) / 2j
    return np.stack([-1j * j1, -1j * j2, -1j * jz]).astype(complex)


def rep_from_partition(partition) -> np.ndarray:
    """Block-diagonal su(2) triple with irreducible blocks of the given sizes."""
    blocks = [su2_generators(p) for p in partition]
    r = sum(partition)
    out = np.zeros((3, r, r), dtype=complex)
    at = 0
    for b in blocks:
        d = b.shape[1]
        out[:, at:at + d, at:at + d] = b
        at += d
    return out


def random_unitary(rng: np.random.Generator, r: int) -> np.ndarray:
    z = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    q, rr = np.linalg.qr(z)
    return q * (np.diag(rr) / np.abs(np.diag(rr)))


def _random_partition(rng: np.random.Generator, total: int) -> list[int]:
    out = []
    left = total
    while left > 0:
        p = int(rng.integers(1, left + 1))
        out.append(p)
        left -= p
    return out


def random_model_solution(rng: np.random.Generator, rank: int,
                          min_sep: float = 0.15, flat: bool = False,
                          conjugate: bool = True,
                          n_clusters: int | None = None) -> ModelSolution:
    """Random valid model pair: clustered diagonal Gamma with su(2) blocks in the centralizer.

    Spectrum points are drawn in [0, 1)^3 with pairwise separation >= min_sep
    coordinate-wise on the torus, so reductions stay unambiguous.  Pass
    n_clusters=1 for a single spectrum point (no unstable flow directions).
    """
    if n_clusters == 1:
        clusters = [rank]
    else:
        clusters = _random_partition(rng, rank)
    pts = []
    while len(pts) < len(clusters):
        cand = rng.random(3)
        ok = True
        for p in pts:
            d = np.abs(cand - p)
            d = np.minimum(d, 1 - d)
            if np.linalg.norm(d) < min_sep:
                ok = False
                break
        if ok:
            pts.append(cand)

    gamma = np.zeros((3, rank, rank), dtype=complex)
    nn = np.zeros((3, rank, rank), dtype=complex)
    at = 0
    for size, pt in zip(clusters, pts):
        for i in range(3):
            gamma[i, at:at + size, at:at + size] = 2j * np.pi * pt[i] * np.eye(size)
        if not flat:
            part = _random_partition(rng, size)
            nn[:, at:at + size, at:at + size] = rep_from_partition(part)
        at += size

    if conjugate:
        q = random_unitary(rng, rank)
        for i in range(3):
            gamma[i] = q @ gamma[i] @ q.conj().T
            nn[i] = q @ nn[i] @ q.conj().T
    return validate_model_solution(gamma, nn)


def pauli_spin_half() -> np.ndarray:
    """The rank-2 triple N_i = -(i/2) sigma_i."""
    return su2_generators(2)


def flat_model(points, rank_per_point=None) -> ModelSolution:
    """Diagonal flat model with spectrum at the given dual points (Euclidean coords)."""
    pts = [np.asarray(p, dtype=float) for p in points]
    mults = rank_per_point or [1] * len(pts)
    r = sum(mults)
    gamma = np.zeros((3, r, r), dtype=complex)
    at = 0
    for p, m in zip(pts, mults):
        for i in range(3):
            gamma[i, at:at + m, at:at + m] = 2j * np.pi * p[i] * np.eye(m)
        at += m
    return validate_model_solution(gamma, np.zeros_like(gamma))


def spin_half_model(point=(0.0, 0.0, 0.0)) -> ModelSolution:
    """Rank-2 model: Gamma at a single dual point, N the spin-1/2 triple."""
    p = np.asarray(point, dtype=float)
    nn = pauli_spin_half()
    gamma = np.stack([2j * np.pi * p[i] * np.eye(2, dtype=complex) for i in range(3)])
    return validate_model_solution(gamma, nn)


def spectral_flow_curve(target=(0.5, 0.0, 0.0), t_max: float = 14.0,
                        grid_n: int = 1401, steepness: float = 1.0) -> NahmCurve:
    """Rank-1 curve whose spectral point moves from 0 to ``target`` along a tanh profile.

    Not a flow solution (rank-1 solutions are constant); it is a valid curve
    value with flat tails Gamma_- = 0 and Gamma_+ = 2 pi i target, used to
    probe the one-mode Dirac problems along the open segment between the two
    tail spectrum points, where the kernel is one-dimensional.
    """
    tgt = np.asarray(target, dtype=float)
    grid = np.linspace(-t_max, t_max, grid_n)
    prof = 0.5 * (1.0 + np.tanh(steepness * grid))
    a = np.zeros((grid_n, 3, 1, 1), dtype=complex)
    for i in range(3):
        a[:, i, 0, 0] = 2j * np.pi * tgt[i] * prof
    minus = flat_model([(0.0, 0.0, 0.0)])
    plus = flat_model([tuple(tgt)])
    tail_gap = float(np.linalg.norm(tgt)) * 2 * np.pi * np.exp(-2 * steepness * t_max)
    return curve_from_samples(grid, a, minus, plus, tail_tol=max(1e-8, 4 * tail_gap))


def cubic_lattice() -> Lattice3:
    return Lattice3(basis=np.eye(3))
