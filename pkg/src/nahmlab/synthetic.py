"""Exact Dirac-type monopole fields with prescribed integer weights.

The basic building block is the abelian field on R^3 punctured at a point p:

    Phi = i (k / (2R) + c),      A = -i (k/2) (1 - cos theta) dphi,

with theta measured from the gauge axis n and the string along -n.  This pair
solves F(A) = * grad(Phi) exactly, and the induced line bundle on a small
sphere around p has degree k.  Direct sums conjugated by a fixed unitary give
rank-r fields with weight vector (k_1, ..., k_r); these instantiate the local
model of a Dirac-type singularity with known data, which the fitting and
winding machinery is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _orthonormal_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2, n


@dataclass(frozen=True, eq=False)
class DiracMonopoleField:
    """Rank-r exact monopole with Dirac-type singularity at ``center``.

    weights: integer charges k_i; consts: the O(1) parts c_i; frame: a fixed
    unitary mixing the abelian summands; string_axis: gauge-string direction
    (the string runs from the center along minus this axis).
    """

    center: np.ndarray
    weights: tuple[int, ...]
    consts: tuple[float, ...] = ()
    frame: np.ndarray | None = None
    string_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    quad_n: int = 96

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.consts:
            object.__setattr__(self, "consts", tuple(0.0 for _ in self.weights))
        if self.frame is None:
            object.__setattr__(self, "frame", np.eye(len(self.weights), dtype=complex))

    @property
    def rank(self) -> int:
        return len(self.weights)

    def phi(self, y) -> np.ndarray:
        rel = np.asarray(y, dtype=float) - self.center
        r = float(np.linalg.norm(rel))
        diag = np.array([1j * (k / (2.0 * r) + c) for k, c in zip(self.weights, self.consts)])
        w = self.frame
        return w @ np.diag(diag) @ w.conj().T

    def _abelian_phase(self, x0: np.ndarray, x1: np.ndarray) -> float:
        """Integral of (1 - cos theta) dphi along the straight segment x0 -> x1."""
        e1, e2, n = _orthonormal_frame(np.asarray(self.string_axis, dtype=float))
        ts = np.linspace(0.0, 1.0, self.quad_n + 1)
        pts = x0[None, :] + ts[:, None] * (x1 - x0)[None, :]
        rel = pts - self.center[None, :]
        rr = np.linalg.norm(rel, axis=1)
        cos_t = (rel @ n) / rr
        phi_ang = np.unwrap(np.arctan2(rel @ e2, rel @ e1))
        mid_w = 1.0 - 0.5 * (cos_t[:-1] + cos_t[1:])
        return float(np.sum(mid_w * np.diff(phi_ang)))

    def link(self, x0, x1) -> np.ndarray:
        """Parallel transport unitary along the straight segment from x0 to x1."""
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        base = self._abelian_phase(x0, x1)
        diag = np.array([np.exp(1j * (k / 2.0) * base) for k in self.weights])
        w = self.frame
        return w @ np.diag(diag) @ w.conj().T

    def transport_chain(self, points) -> np.ndarray:
        """Ordered product of segment transports along a polyline."""
        u = np.eye(self.rank, dtype=complex)
        for a in range(len(points) - 1):
            u = self.link(points[a], points[a + 1]) @ u
        return u


@dataclass(frozen=True, eq=False)
class SampledMonopole:
    """Site Higgs samples and axis link unitaries on a small product grid.

    sites index a shape[0] x shape[1] x shape[2] block; ``steps`` are the three
    Euclidean step vectors.  Links are stored per (site, axis) and transport
    from the site to site + axis.
    """

    origin: np.ndarray
    steps: np.ndarray            # (3, 3): rows are step vectors
    shape: tuple[int, int, int]
    phi: dict
    links: dict
    rank: int

    def site_point(self, idx) -> np.ndarray:
        return self.origin + np.asarray(idx, dtype=float) @ self.steps


def sample_field(fld: DiracMonopoleField, origin, steps, shape) -> SampledMonopole:
    """Discretize an exact field: Higgs at sites, transports along grid edges."""
    origin = np.asarray(origin, dtype=float)
    steps = np.asarray(steps, dtype=float).reshape(3, 3)
    shape = tuple(int(s) for s in shape)
    phi = {}
    links = {}
    for idx in np.ndindex(shape):
        pt = origin + np.asarray(idx, dtype=float) @ steps
        phi[idx] = fld.phi(pt)
        for axis in range(3):
            nxt = tuple(idx[a] + (1 if a == axis else 0) for a in range(3))
            if nxt[axis] < shape[axis]:
                links[(idx, axis)] = fld.link(pt, origin + np.asarray(nxt, float) @ steps)
    return SampledMonopole(origin=origin, steps=steps, shape=shape,
                           phi=phi, links=links, rank=fld.rank)


def gauge_transform(sm: SampledMonopole, site_unitaries: dict) -> SampledMonopole:
    """Apply per-site frame changes: Phi -> W Phi W^dag, U -> W_y U W_x^dag."""
    phi = {}
    links = {}
    for idx, p in sm.phi.items():
        w = site_unitaries[idx]
        phi[idx] = w @ p @ w.conj().T
    for (idx, axis), u in sm.links.items():
        nxt = tuple(idx[a] + (1 if a == axis else 0) for a in range(3))
        links[(idx, axis)] = site_unitaries[nxt] @ u @ site_unitaries[idx].conj().T
    return SampledMonopole(origin=sm.origin, steps=sm.steps, shape=sm.shape,
                           phi=phi, links=links, rank=sm.rank)
