"""Model data: commuting skew-Hermitian triples with su(2)-triples in their centralizer.

A model solution is a pair (Gamma, N) of triples of r x r skew-Hermitian
matrices with [Gamma_i, Gamma_j] = 0, [Gamma_i, N_j] = 0 and
N_i = [N_j, N_k] for even permutations (ijk).  The curve Gamma + N/t solves
the Nahm flow exactly on each half line, and all asymptotic and spectral
bookkeeping of the package is derived from these pairs: joint eigenvalues of
Gamma read as dual-torus points, and N restricted to each joint eigenspace as
an su(2) representation whose irreducible ranks are the predicted weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GapError, ValidationError
from .torus import DualTorusPoint, Lattice3, dual_lattice, reduce_euclidean, torus_distance

VALIDATION_TOL = 1e-10
# Eigenvalue clustering threshold is 1e-8 * ||Gamma|| (design default).
CLUSTER_REL_TOL = 1e-8

EVEN_PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def _norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


@dataclass(frozen=True, eq=False)
class ModelSolution:
    """Validated pair (Gamma, N); arrays have shape (3, r, r)."""

    gamma: np.ndarray
    nn: np.ndarray

    @property
    def rank(self) -> int:
        return self.gamma.shape[1]

    def at(self, t: float) -> np.ndarray:
        """Sample of the exact curve Gamma + N/t (t != 0)."""
        return self.gamma + self.nn / t

    def is_flat(self, tol: float = 1e-14) -> bool:
        return _norm(self.nn) <= tol


def validate_model_solution(gamma, nn, tol: float = VALIDATION_TOL) -> ModelSolution:
    """Check all defining identities and return the validated value.

    Violations are collected (not short-circuited) and raised together, each
    named with its residual norm.
    """
    g = np.asarray(gamma, dtype=complex)
    n = np.asarray(nn, dtype=complex)
    if g.shape != n.shape or g.ndim != 3 or g.shape[0] != 3 or g.shape[1] != g.shape[2]:
        raise ValidationError([("shape", float("nan"))])

    scale = max(1.0, max(_norm(g[i]) for i in range(3)), max(_norm(n[i]) for i in range(3)))
    bad = []
    for i in range(3):
        res = _norm(g[i] + g[i].conj().T)
        if res > tol * scale:
            bad.append((f"Gamma_{i+1} not skew-Hermitian", res))
        res = _norm(n[i] + n[i].conj().T)
        if res > tol * scale:
            bad.append((f"N_{i+1} not skew-Hermitian", res))
    for i in range(3):
        for j in range(i + 1, 3):
            res = _norm(g[i] @ g[j] - g[j] @ g[i])
            if res > tol * scale * scale:
                bad.append((f"[Gamma_{i+1},Gamma_{j+1}] != 0", res))
    for i in range(3):
        for j in range(3):
            res = _norm(g[i] @ n[j] - n[j] @ g[i])
            if res > tol * scale * scale:
                bad.append((f"[Gamma_{i+1},N_{j+1}] != 0", res))
    for (i, j, k) in EVEN_PERMS:
        res = _norm(n[i] - (n[j] @ n[k] - n[k] @ n[j]))
        if res > tol * scale * scale:
            bad.append((f"N_{i+1} != [N_{j+1},N_{k+1}]", res))
    if bad:
        raise ValidationError(bad)
    return ModelSolution(gamma=g, nn=n)


def _rank_with_threshold(m: np.ndarray, rel_tol: float = 1e-8) -> int:
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * max(1.0, s[0])))


def jordan_sizes_nilpotent(m: np.ndarray, rel_tol: float = 1e-8) -> tuple[int, ...]:
    """Jordan block sizes of a nilpotent matrix via ranks of powers."""
    r = m.shape[0]
    if r == 0:
        return ()
    scale = max(1.0, _norm(m))
    nullity = [0]
    p = np.eye(r, dtype=complex)
    for _ in range(r):
        p = p @ (m / scale)
        nullity.append(r - _rank_with_threshold(p, rel_tol))
        if nullity[-1] == r:
            break
    while nullity[-1] < r:
        # Not nilpotent at this tolerance; pad so the caller sees a mismatch.
        nullity.append(nullity[-1])
        break
    blocks_ge = [nullity[j] - nullity[j - 1] for j in range(1, len(nullity))]
    sizes = []
    for s in range(1, len(blocks_ge) + 1):
        here = blocks_ge[s - 1] - (blocks_ge[s] if s < len(blocks_ge) else 0)
        sizes.extend([s] * here)
    return tuple(sorted(sizes, reverse=True))


@dataclass(frozen=True)
class Su2WeightVector:
    """Multiset of irreducible summand ranks, sorted descending."""

    weights: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(sorted(self.weights, reverse=True)))

    @property
    def total(self) -> int:
        return sum(self.weights)

    def __iter__(self):
        return iter(self.weights)


def su2_weights(nn, tol: float = VALIDATION_TOL) -> Su2WeightVector:
    """Irreducible summand ranks of the representation generated by an su(2) triple.

    Computed twice: as Jordan block sizes of the raising-type operator
    N_2 + i N_3 and from eigenvalue multiplicities of the Casimir -sum N_i^2.
    The two routes must agree.
    """
    n = np.asarray(nn, dtype=complex)
    r = n.shape[1]
    scale = max(1.0, max(_norm(n[i]) for i in range(3)))
    for (i, j, k) in EVEN_PERMS:
        res = _norm(n[i] - (n[j] @ n[k] - n[k] @ n[j]))
        if res > tol * scale * scale:
            raise ValidationError([(f"N_{i+1} != [N_{j+1},N_{k+1}]", res)])

    jordan = jordan_sizes_nilpotent(n[1] + 1j * n[2])

    casimir = -(n[0] @ n[0] + n[1] @ n[1] + n[2] @ n[2])
    evals = np.linalg.eigvalsh(casimir)
    sizes = []
    used = np.zeros(r, dtype=bool)
    for a in range(r):
        if used[a]:
            continue
        cluster = np.abs(evals - evals[a]) <= CLUSTER_REL_TOL * max(1.0, scale * scale) + 1e-9
        cluster &= ~used
        mult = int(np.sum(cluster))
        used |= cluster
        m = np.sqrt(max(0.0, 4.0 * float(evals[a])) + 1.0)
        m_int = int(round(m))
        if abs(m - m_int) > 1e-6 or m_int < 1 or mult % m_int != 0:
            raise ValidationError([(f"Casimir eigenvalue {evals[a]:.6g} not of (m^2-1)/4 form", abs(m - m_int))])
        sizes.extend([m_int] * (mult // m_int))
    casimir_route = tuple(sorted(sizes, reverse=True))

    if jordan != casimir_route:
        raise ValidationError([
            (f"Jordan route {jordan} disagrees with Casimir route {casimir_route}", 0.0)
        ])
    return Su2WeightVector(weights=jordan)


def _joint_eigenbasis(hermitians: list[np.ndarray], rel_tol: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Simultaneous eigenspaces of commuting Hermitian matrices.

    Returns (eigenvalue tuple, orthonormal basis columns) per joint eigenspace,
    found by diagonalizing a random real combination and refining clusters.
    """
    r = hermitians[0].shape[0]
    scale = max([1e-300] + [_norm(h) for h in hermitians])
    tol = rel_tol * max(1.0, scale)
    rng = np.random.default_rng(0x5EED)
    c = rng.standard_normal(len(hermitians))
    mix = sum(ci * h for ci, h in zip(c, hermitians))
    evals, vecs = np.linalg.eigh(mix)

    clusters = []
    start = 0
    for a in range(1, r + 1):
        if a == r or evals[a] - evals[a - 1] > tol:
            clusters.append(vecs[:, start:a])
            start = a

    # Refine each cluster against the individual matrices in turn.
    for h in hermitians:
        refined = []
        for q in clusters:
            sub = q.conj().T @ h @ q
            sub_evals, sub_vecs = np.linalg.eigh(0.5 * (sub + sub.conj().T))
            s0 = 0
            m = q.shape[1]
            for a in range(1, m + 1):
                if a == m or sub_evals[a] - sub_evals[a - 1] > tol:
                    refined.append(q @ sub_vecs[:, s0:a])
                    s0 = a
        clusters = refined

    out = []
    for q in clusters:
        lam = tuple(float(np.real(np.trace(q.conj().T @ h @ q)) / q.shape[1]) for h in hermitians)
        out.append((np.asarray(lam), q))
    return out


@dataclass(frozen=True, eq=False)
class SpectrumPoint:
    point: DualTorusPoint
    multiplicity: int
    basis: np.ndarray  # r x multiplicity, orthonormal columns


@dataclass(frozen=True, eq=False)
class SpectrumSet:
    points: tuple[SpectrumPoint, ...]
    rank: int

    def total_multiplicity(self) -> int:
        return sum(p.multiplicity for p in self.points)

    def locations(self) -> list[DualTorusPoint]:
        return [p.point for p in self.points]

    def min_separation(self) -> float:
        locs = self.locations()
        if len(locs) < 2:
            return float("inf")
        return min(
            torus_distance(locs[i], locs[j])
            for i in range(len(locs))
            for j in range(i + 1, len(locs))
        )

    def distance_to(self, xi: DualTorusPoint) -> float:
        return min(torus_distance(p.point, xi) for p in self.points)


def spectrum_set(ms: ModelSolution, l: Lattice3, rel_tol: float = CLUSTER_REL_TOL) -> SpectrumSet:
    """Joint eigenvalues of Gamma read as reduced dual-torus points.

    The raw covectors (2 pi i)^{-1} (lambda_1, lambda_2, lambda_3) are grouped
    first; if two distinct raw covectors land on the same reduced point the
    quotient map is not injective on the spectrum and the input is rejected
    (callers must re-gauge such data themselves).
    """
    dl = dual_lattice(l)
    hermitians = [np.asarray(-1j * ms.gamma[i]) for i in range(3)]
    joint = _joint_eigenbasis(hermitians, rel_tol)

    raw_pts = []
    for lam, q in joint:
        raw = lam / (2.0 * np.pi)  # Euclidean covector components
        raw_pts.append((raw, q))

    # Merge joint eigenspaces with equal raw covectors.
    merged: list[list] = []
    scale = max(1.0, max(_norm(h) for h in hermitians)) / (2.0 * np.pi)
    for raw, q in raw_pts:
        for entry in merged:
            if np.linalg.norm(entry[0] - raw) <= rel_tol * scale * 10:
                entry[1].append(q)
                break
        else:
            merged.append([raw, [q]])

    pts = []
    for raw, qs in merged:
        basis = np.column_stack(qs)
        pts.append((raw, reduce_euclidean(raw, dl), basis))

    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if torus_distance(pts[a][1], pts[b][1]) <= rel_tol * max(1.0, scale) * 10:
                raise ValidationError([
                    ("spectrum quotient map not injective "
                     f"(raw covectors {pts[a][0]} and {pts[b][0]} coincide on the torus)", 0.0)
                ])

    points = tuple(
        SpectrumPoint(point=p, multiplicity=basis.shape[1], basis=basis)
        for _, p, basis in pts
    )
    return SpectrumSet(points=points, rank=ms.rank)


@dataclass(frozen=True, eq=False)
class SingularPoint:
    """One singular point with the restricted su(2) data of both sides."""

    point: DualTorusPoint
    plus_nn: np.ndarray | None   # restricted N_+ triple, or None if absent
    minus_nn: np.ndarray | None
    plus_mult: int
    minus_mult: int

    def weights_plus(self) -> Su2WeightVector:
        if self.plus_nn is None:
            return Su2WeightVector(weights=())
        return su2_weights(self.plus_nn)

    def weights_minus(self) -> Su2WeightVector:
        if self.minus_nn is None:
            return Su2WeightVector(weights=())
        return su2_weights(self.minus_nn)


@dataclass(frozen=True, eq=False)
class SingularitySet:
    points: tuple[SingularPoint, ...]
    rank: int

    def locations(self) -> list[DualTorusPoint]:
        return [p.point for p in self.points]

    def distance_to(self, xi: DualTorusPoint) -> float:
        if not self.points:
            return float("inf")
        return min(torus_distance(p.point, xi) for p in self.points)

    def min_separation(self) -> float:
        locs = self.locations()
        if len(locs) < 2:
            return float("inf")
        return min(
            torus_distance(locs[i], locs[j])
            for i in range(len(locs))
            for j in range(i + 1, len(locs))
        )


def _restrict_triple(nn: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.stack([basis.conj().T @ nn[i] @ basis for i in range(3)])


def singularity_set(plus: ModelSolution, minus: ModelSolution, l: Lattice3) -> SingularitySet:
    """Union of the two spectra with per-point restricted su(2) data.

    A side contributes the zero representation at points outside its spectrum.
    """
    if plus.rank != minus.rank:
        raise ValidationError([("rank mismatch between plus and minus data", 0.0)])
    sp = spectrum_set(plus, l)
    sm = spectrum_set(minus, l)
    merge_tol = 1e-7

    out: list[SingularPoint] = []
    used_minus = set()
    for p in sp.points:
        partner = None
        for idx, q in enumerate(sm.points):
            if torus_distance(p.point, q.point) <= merge_tol:
                partner = idx
                break
        if partner is not None:
            used_minus.add(partner)
            q = sm.points[partner]
            out.append(SingularPoint(
                point=p.point,
                plus_nn=_restrict_triple(plus.nn, p.basis),
                minus_nn=_restrict_triple(minus.nn, q.basis),
                plus_mult=p.multiplicity,
                minus_mult=q.multiplicity,
            ))
        else:
            out.append(SingularPoint(
                point=p.point,
                plus_nn=_restrict_triple(plus.nn, p.basis),
                minus_nn=None,
                plus_mult=p.multiplicity,
                minus_mult=0,
            ))
    for idx, q in enumerate(sm.points):
        if idx in used_minus:
            continue
        out.append(SingularPoint(
            point=q.point,
            plus_nn=None,
            minus_nn=_restrict_triple(minus.nn, q.basis),
            plus_mult=0,
            minus_mult=q.multiplicity,
        ))
    return SingularitySet(points=tuple(out), rank=plus.rank)


def twist(ms: ModelSolution, xi: DualTorusPoint) -> ModelSolution:
    """Tensor with the flat line twist: Gamma_i -> Gamma_i - 2 pi i xi_i, N unchanged."""
    e = xi.covector()
    r = ms.rank
    g = ms.gamma.copy()
    for i in range(3):
        g[i] = g[i] - 2j * np.pi * e[i] * np.eye(r)
    return ModelSolution(gamma=g, nn=ms.nn)


def require_gap(sing: SingularitySet, xi: DualTorusPoint, min_gap: float = 1e-8) -> float:
    """Distance from xi to the singular set; raises GapError when too small."""
    d = sing.distance_to(xi)
    if d <= min_gap:
        raise GapError(f"xi within {d:.3e} of the singular set")
    return d
