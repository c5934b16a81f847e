"""Numpy reference implementations of the grid kernels.

Both functions work on stacks of ``M`` independent problems (grid nodes,
sampled n-vectors, ...). Index tables hold 0-based base-axis rows, one row of
length ``n`` per momentum multi-index.
"""

import numpy as np


def plucker_minors(tq, index_table):
    """All maximal minors of a stack of ``N x n`` matrices.

    tq : (M, N, n) float array
    index_table : (C, n) int array
    returns (M, C): ``out[m, a] = det(tq[m, index_table[a], :])``
    """
    tq = np.asarray(tq, dtype=float)
    table = np.asarray(index_table, dtype=np.intp)
    sub = tq[:, table, :]  # (M, C, n, n)
    return np.linalg.det(sub)


def contract_omega(tangents, index_table, active, n_q):
    """Components of ``(t_1 ^ ... ^ t_n) _| Omega`` for Omega = sum dp_A ^ dq^A.

    tangents : (M, n, D) float array, D = n_q + C; columns ``n_q + a`` are the
        momentum axis of multi-index ``a``
    active : (C,) bool array, momentum axes present in Omega
    returns (M, D) one-form components
    """
    t = np.asarray(tangents, dtype=float)
    table = np.asarray(index_table, dtype=np.intp)
    active = np.asarray(active, dtype=bool)
    M, n, D = t.shape
    C = table.shape[0]
    out = np.zeros((M, D))
    sign_n = -1.0 if n % 2 else 1.0
    # dq-rows of every tangent: (M, N, n)
    tq = np.transpose(t[:, :, :n_q], (0, 2, 1))
    minors = plucker_minors(tq, table)
    out[:, n_q:] = sign_n * minors * active[None, :]
    for a in range(C):
        if not active[a]:
            continue
        rows = table[a]
        dp_row = t[:, :, n_q + a]  # (M, n)
        for j in range(n):
            others = np.delete(rows, j)
            mat = np.empty((M, n, n))
            mat[:, 0, :] = dp_row
            if n > 1:
                mat[:, 1:, :] = tq[:, others, :]
            sign = -1.0 if (j + 1 + n) % 2 else 1.0
            out[:, rows[j]] += sign * np.linalg.det(mat)
    return out
