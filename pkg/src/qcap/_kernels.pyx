# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the Monte-Carlo inner kernels (see qcap.kernels).

Both kernels reduce to left multiplications ``(A (x) I) X`` done with one BLAS
call per block, using ``A X A^dagger = (A (A X)^dagger)^dagger``.
"""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

ctypedef double complex cplx


cdef void _left(const cplx* a, Py_ssize_t m, Py_ssize_t k, const cplx* b, Py_ssize_t p,
                cplx* c, cplx beta) noexcept nogil:
    # row-major c (m x p) = a (m x k) @ b (k x p) + beta c, via column-major c^T = b^T a^T
    cdef int im = <int>m, ik = <int>k, ip = <int>p
    cdef cplx one = 1.0
    zgemm("N", "N", &ip, &im, &ik, &one, <cplx*>b, &ip, <cplx*>a, &ik, &beta, c, &ip)


cdef void _adjoint(const cplx* x, cplx* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef cplx z
    for i in range(n):
        for j in range(n):
            z = x[j * n + i]
            y[i * n + j] = z.real - 1j * z.imag


cdef void _block_left(const cplx* u, Py_ssize_t nblk, Py_ssize_t r, Py_ssize_t d_rest,
                      const cplx* x, cplx* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j, stride = r * d_rest * n
    for j in range(nblk):
        _left(u + j * r * r, r, r, x + j * stride, d_rest * n, y + j * stride, 0.0)


def block_conjugate(const cplx[:, ::1] x, const cplx[:, :, ::1] u_blocks, Py_ssize_t d_rest):
    cdef Py_ssize_t nblk = u_blocks.shape[0]
    cdef Py_ssize_t r = u_blocks.shape[1]
    cdef Py_ssize_t n = x.shape[0]
    if u_blocks.shape[2] != r or n != nblk * r * d_rest or x.shape[1] != n:
        raise ValueError("shape mismatch between operator and block unitaries")
    out_arr = np.empty((n, n), dtype=np.complex128)
    tmp_arr = np.empty((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] out = out_arr
    cdef cplx[:, ::1] tmp = tmp_arr
    if n == 0:
        return out_arr
    with nogil:
        _block_left(&u_blocks[0, 0, 0], nblk, r, d_rest, &x[0, 0], &out[0, 0], n)
        _adjoint(&out[0, 0], &tmp[0, 0], n)
        _block_left(&u_blocks[0, 0, 0], nblk, r, d_rest, &tmp[0, 0], &out[0, 0], n)
        _adjoint(&out[0, 0], &tmp[0, 0], n)
    return tmp_arr


def kraus_apply(const cplx[:, :, ::1] kraus, const cplx[:, ::1] x, Py_ssize_t d_rest):
    cdef Py_ssize_t m = kraus.shape[0]
    cdef Py_ssize_t dout = kraus.shape[1]
    cdef Py_ssize_t din = kraus.shape[2]
    cdef Py_ssize_t n = x.shape[0]
    if n != din * d_rest or x.shape[1] != n:
        raise ValueError("operator dimension does not match Kraus input dimension")
    cdef Py_ssize_t nout = dout * d_rest
    out_arr = np.zeros((nout, nout), dtype=np.complex128)
    left_arr = np.empty((nout, n), dtype=np.complex128)
    adj_arr = np.empty((n, nout), dtype=np.complex128)
    res_arr = np.empty((nout, nout), dtype=np.complex128)
    cdef cplx[:, ::1] out = out_arr
    cdef cplx[:, ::1] left = left_arr
    cdef cplx[:, ::1] adj = adj_arr
    cdef cplx[:, ::1] res = res_arr
    cdef Py_ssize_t q, i, j
    cdef cplx z
    if n == 0 or nout == 0:
        return out_arr
    with nogil:
        for q in range(m):
            # left = (K (x) I) x, shape nout x n
            _left(&kraus[q, 0, 0], dout, din, &x[0, 0], d_rest * n, &left[0, 0], 0.0)
            for i in range(nout):
                for j in range(n):
                    z = left[i, j]
                    adj[j, i] = z.real - 1j * z.imag
            # (K (x) I) left^dagger, accumulated as its adjoint below
            _left(&kraus[q, 0, 0], dout, din, &adj[0, 0], d_rest * nout, &res[0, 0], 0.0)
            for i in range(nout):
                for j in range(nout):
                    z = res[j, i]
                    out[i, j] = out[i, j] + (z.real - 1j * z.imag)
    return out_arr
