"""Pure-numpy implementations of the hot kernels (reference backend)."""

from __future__ import annotations

import numpy as np

# Dormand-Prince 5(4) tableau.
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def nahm_rhs_triple(a: np.ndarray) -> np.ndarray:
    """(-[A2,A3], -[A3,A1], -[A1,A2]) for a stacked triple of shape (3, r, r)."""
    a1, a2, a3 = a[0], a[1], a[2]
    return np.stack([
        -(a2 @ a3 - a3 @ a2),
        -(a3 @ a1 - a1 @ a3),
        -(a1 @ a2 - a2 @ a1),
    ])


def _skew_project(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - np.conj(np.swapaxes(a, -1, -2)))


def dp45_step(a: np.ndarray, h: float) -> tuple[np.ndarray, float]:
    """One Dormand-Prince 5(4) step of dA/dt = nahm_rhs(A).

    Returns the 5th-order result (skew-projected) and the embedded error
    estimate in max-Frobenius norm over the triple.
    """
    k = []
    for stage in range(7):
        y = a
        for coeff, ki in zip(_DP_A[stage], k):
            if coeff != 0.0:
                y = y + (h * coeff) * ki
        k.append(nahm_rhs_triple(y))
    a5 = a
    a4 = a
    for b5, b4, ki in zip(_DP_B5, _DP_B4, k):
        if b5 != 0.0:
            a5 = a5 + (h * b5) * ki
        if b4 != 0.0:
            a4 = a4 + (h * b4) * ki
    err = float(max(np.linalg.norm(a5[i] - a4[i]) for i in range(3)))
    return _skew_project(a5), err


def _mgs_qr(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt QR with a re-orthogonalization pass; R has positive diagonal."""
    m, p = w.shape
    q = w.astype(complex, copy=True)
    r = np.zeros((p, p), dtype=complex)
    for j in range(p):
        for _ in range(2):
            for i in range(j):
                c = np.vdot(q[:, i], q[:, j])
                r[i, j] += c
                q[:, j] -= c * q[:, i]
        nrm = np.linalg.norm(q[:, j])
        r[j, j] = nrm
        if nrm > 0:
            q[:, j] /= nrm
    return q, r


def march_frames(props: np.ndarray, u0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sequential frame marching U_{k+1} R_k = P_k U_k with QR renormalization.

    props: (nsteps, m, m) complex propagator stack
    u0:    (m, p) orthonormal initial frame
    Returns (frames, rfactors) with frames (nsteps+1, m, p) and rfactors
    (nsteps, p, p) upper triangular; a solution with coefficients c at frame k
    has coefficients R_k c at frame k+1.
    """
    nsteps, m, _ = props.shape
    p = u0.shape[1]
    frames = np.empty((nsteps + 1, m, p), dtype=complex)
    rfactors = np.empty((nsteps, p, p), dtype=complex)
    frames[0] = u0
    u = u0.astype(complex, copy=True)
    for kk in range(nsteps):
        w = props[kk] @ u
        u, r = _mgs_qr(w)
        frames[kk + 1] = u
        rfactors[kk] = r
    return frames, rfactors
