# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython implementations of the hot kernels; see kernels_py for the reference."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

ctypedef double complex zdouble

cnp.import_array()

_DP_A = (
    (),
    (1 / 5.,),
    (3 / 40., 9 / 40.),
    (44 / 45., -56 / 15., 32 / 9.),
    (19372 / 6561., -25360 / 2187., 64448 / 6561., -212 / 729.),
    (9017 / 3168., -355 / 33., 46732 / 5247., 49 / 176., -5103 / 18656.),
    (35 / 384., 0.0, 500 / 1113., 125 / 192., -2187 / 6784., 11 / 84.),
)
_DP_B5 = (35 / 384., 0.0, 500 / 1113., 125 / 192., -2187 / 6784., 11 / 84., 0.0)
_DP_B4 = (5179 / 57600., 0.0, 7571 / 16695., 393 / 640., -92097 / 339200., 187 / 2100., 1 / 40.)


cdef void _comm_neg(zdouble[:, ::1] x, zdouble[:, ::1] y, zdouble[:, ::1] out, int r) noexcept:
    # out = -(x y - y x)
    cdef int i, j, k
    cdef zdouble acc
    for i in range(r):
        for j in range(r):
            acc = 0
            for k in range(r):
                acc += x[i, k] * y[k, j] - y[i, k] * x[k, j]
            out[i, j] = -acc


cdef void _rhs(zdouble[:, :, ::1] a, zdouble[:, :, ::1] out, int r) noexcept:
    _comm_neg(a[1], a[2], out[0], r)
    _comm_neg(a[2], a[0], out[1], r)
    _comm_neg(a[0], a[1], out[2], r)


def nahm_rhs_triple(a):
    """(-[A2,A3], -[A3,A1], -[A1,A2]) for a stacked triple of shape (3, r, r)."""
    cdef cnp.ndarray[zdouble, ndim=3] ac = np.ascontiguousarray(a, dtype=np.complex128)
    cdef int r = ac.shape[1]
    out = np.empty_like(ac)
    cdef zdouble[:, :, ::1] av = ac
    cdef zdouble[:, :, ::1] ov = out
    _rhs(av, ov, r)
    return out


def dp45_step(a, double h):
    """One Dormand-Prince 5(4) step of dA/dt = nahm_rhs(A); see kernels_py.dp45_step."""
    cdef cnp.ndarray[zdouble, ndim=3] ac = np.ascontiguousarray(a, dtype=np.complex128)
    cdef int r = ac.shape[1]
    cdef int i, j, s, t, q
    cdef cnp.ndarray[zdouble, ndim=4] k = np.empty((7, 3, r, r), dtype=np.complex128)
    cdef cnp.ndarray[zdouble, ndim=3] y = np.empty((3, r, r), dtype=np.complex128)
    cdef zdouble[:, :, :, ::1] kv = k
    cdef zdouble[:, :, ::1] yv = y
    cdef zdouble[:, :, ::1] av = ac
    cdef double coeff
    cdef list arow

    for s in range(7):
        arow = list(_DP_A[s])
        for q in range(3):
            for i in range(r):
                for j in range(r):
                    yv[q, i, j] = av[q, i, j]
        for t in range(len(arow)):
            coeff = arow[t]
            if coeff != 0.0:
                for q in range(3):
                    for i in range(r):
                        for j in range(r):
                            yv[q, i, j] = yv[q, i, j] + h * coeff * kv[t, q, i, j]
        _rhs(yv, kv[s], r)

    cdef cnp.ndarray[zdouble, ndim=3] a5 = ac.copy()
    cdef cnp.ndarray[zdouble, ndim=3] a4 = ac.copy()
    cdef zdouble[:, :, ::1] a5v = a5
    cdef zdouble[:, :, ::1] a4v = a4
    cdef double b5, b4
    for s in range(7):
        b5 = _DP_B5[s]
        b4 = _DP_B4[s]
        for q in range(3):
            for i in range(r):
                for j in range(r):
                    if b5 != 0.0:
                        a5v[q, i, j] = a5v[q, i, j] + h * b5 * kv[s, q, i, j]
                    if b4 != 0.0:
                        a4v[q, i, j] = a4v[q, i, j] + h * b4 * kv[s, q, i, j]

    cdef double err = 0.0, acc
    for q in range(3):
        acc = 0.0
        for i in range(r):
            for j in range(r):
                acc += (a5v[q, i, j].real - a4v[q, i, j].real) ** 2 \
                     + (a5v[q, i, j].imag - a4v[q, i, j].imag) ** 2
        acc = sqrt(acc)
        if acc > err:
            err = acc

    # skew-Hermitian projection of the 5th-order result
    cdef zdouble u, v
    for q in range(3):
        for i in range(r):
            for j in range(i, r):
                u = a5v[q, i, j]
                v = a5v[q, j, i]
                a5v[q, i, j] = 0.5 * (u - v.conjugate())
                a5v[q, j, i] = -a5v[q, i, j].conjugate()
    return a5, err


def march_frames(props, u0):
    """Sequential frame marching; see kernels_py.march_frames for the contract."""
    cdef cnp.ndarray[zdouble, ndim=3] pc = np.ascontiguousarray(props, dtype=np.complex128)
    cdef cnp.ndarray[zdouble, ndim=2] u = np.ascontiguousarray(u0, dtype=np.complex128).copy()
    cdef int nsteps = pc.shape[0]
    cdef int m = pc.shape[1]
    cdef int p = u.shape[1]
    cdef cnp.ndarray[zdouble, ndim=3] frames = np.empty((nsteps + 1, m, p), dtype=np.complex128)
    cdef cnp.ndarray[zdouble, ndim=3] rfactors = np.zeros((nsteps, p, p), dtype=np.complex128)
    cdef cnp.ndarray[zdouble, ndim=2] w = np.empty((m, p), dtype=np.complex128)

    cdef zdouble[:, :, ::1] pv = pc
    cdef zdouble[:, ::1] uv = u
    cdef zdouble[:, :, ::1] fv = frames
    cdef zdouble[:, :, ::1] rv = rfactors
    cdef zdouble[:, ::1] wv = w

    cdef int kk, i, j, l, pass_no
    cdef zdouble acc, c
    cdef double nrm

    for i in range(m):
        for j in range(p):
            fv[0, i, j] = uv[i, j]

    for kk in range(nsteps):
        # w = P_k @ u
        for i in range(m):
            for j in range(p):
                acc = 0
                for l in range(m):
                    acc += pv[kk, i, l] * uv[l, j]
                wv[i, j] = acc
        # modified Gram-Schmidt with one re-orthogonalization pass
        for j in range(p):
            for pass_no in range(2):
                for i in range(j):
                    c = 0
                    for l in range(m):
                        c += wv[l, i].conjugate() * wv[l, j]
                    rv[kk, i, j] = rv[kk, i, j] + c
                    for l in range(m):
                        wv[l, j] = wv[l, j] - c * wv[l, i]
            nrm = 0.0
            for l in range(m):
                nrm += wv[l, j].real ** 2 + wv[l, j].imag ** 2
            nrm = sqrt(nrm)
            rv[kk, j, j] = nrm
            if nrm > 0.0:
                for l in range(m):
                    wv[l, j] = wv[l, j] / nrm
        for i in range(m):
            for j in range(p):
                uv[i, j] = wv[i, j]
                fv[kk + 1, i, j] = wv[i, j]

    return frames, rfactors
