# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernels; same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

cdef enum:
    MAXN = 8


cdef double _det(double* a, int n) noexcept nogil:
    # in-place LU with partial pivoting on a row-major n x n buffer
    cdef int i, j, k, piv
    cdef double det = 1.0, big, tmp, f
    for k in range(n):
        piv = k
        big = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > big:
                big = fabs(a[i * n + k])
                piv = i
        if big == 0.0:
            return 0.0
        if piv != k:
            for j in range(n):
                tmp = a[k * n + j]
                a[k * n + j] = a[piv * n + j]
                a[piv * n + j] = tmp
            det = -det
        det *= a[k * n + k]
        for i in range(k + 1, n):
            f = a[i * n + k] / a[k * n + k]
            for j in range(k + 1, n):
                a[i * n + j] -= f * a[k * n + j]
    return det


def plucker_minors(tq, index_table):
    cdef double[:, :, ::1] t = np.ascontiguousarray(tq, dtype=np.float64)
    cdef cnp.intp_t[:, ::1] table = np.ascontiguousarray(index_table, dtype=np.intp)
    cdef Py_ssize_t M = t.shape[0], n = t.shape[2], C = table.shape[0]
    if n > MAXN:
        raise ValueError(f"n={n} exceeds compiled limit {MAXN}")
    out_arr = np.zeros((M, C))
    cdef double[:, ::1] out = out_arr
    cdef double buf[MAXN * MAXN]
    cdef Py_ssize_t m, a, r, c
    with nogil:
        for m in range(M):
            for a in range(C):
                for r in range(n):
                    for c in range(n):
                        buf[r * n + c] = t[m, table[a, r], c]
                out[m, a] = _det(buf, <int>n)
    return out_arr


def contract_omega(tangents, index_table, active, Py_ssize_t n_q):
    cdef double[:, :, ::1] t = np.ascontiguousarray(tangents, dtype=np.float64)
    cdef cnp.intp_t[:, ::1] table = np.ascontiguousarray(index_table, dtype=np.intp)
    cdef cnp.uint8_t[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t M = t.shape[0], n = t.shape[1], D = t.shape[2], C = table.shape[0]
    if n > MAXN:
        raise ValueError(f"n={n} exceeds compiled limit {MAXN}")
    out_arr = np.zeros((M, D))
    cdef double[:, ::1] out = out_arr
    cdef double buf[MAXN * MAXN]
    cdef double sign_n = -1.0 if n % 2 else 1.0
    cdef double sign
    cdef Py_ssize_t m, a, j, r, c, row
    with nogil:
        for m in range(M):
            for a in range(C):
                if not act[a]:
                    continue
                # momentum component: (-1)^n det(dq^A(t))
                for r in range(n):
                    for c in range(n):
                        buf[r * n + c] = t[m, c, table[a, r]]
                out[m, n_q + a] = sign_n * _det(buf, <int>n)
                # base components
                for j in range(n):
                    for c in range(n):
                        buf[c] = t[m, c, n_q + a]
                    row = 1
                    for r in range(n):
                        if r == j:
                            continue
                        for c in range(n):
                            buf[row * n + c] = t[m, c, table[a, r]]
                        row += 1
                    sign = -1.0 if (j + 1 + n) % 2 else 1.0
                    out[m, table[a, j]] += sign * _det(buf, <int>n)
    return out_arr
