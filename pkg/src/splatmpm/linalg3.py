"""Small dense 3x3 kernels used inside the particle loops.

LAPACK calls through numba cost a few microseconds per 3x3 matrix, which
dominates an MPM substep.  The routines here are cyclic Jacobi based, write
into caller-provided buffers, and return *proper* rotations (det = +1) so the
sign of det(F) lands on the last singular value.
"""

import numba
import numpy as np

_JACOBI_SWEEPS = 15


@numba.njit(cache=True, inline="always")
def _rotate(a, Q, p, q):
    apq = a[p, q]
    if apq == 0.0:
        return
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    if theta >= 0.0:
        t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
    else:
        t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    for k in range(3):
        akp = a[k, p]
        akq = a[k, q]
        a[k, p] = c * akp - s * akq
        a[k, q] = s * akp + c * akq
    for k in range(3):
        apk = a[p, k]
        aqk = a[q, k]
        a[p, k] = c * apk - s * aqk
        a[q, k] = s * apk + c * aqk
    for k in range(3):
        qkp = Q[k, p]
        qkq = Q[k, q]
        Q[k, p] = c * qkp - s * qkq
        Q[k, q] = s * qkp + c * qkq


@numba.njit(cache=True, inline="always")
def _swap_cols(w, Q, i, j):
    tmp = w[i]
    w[i] = w[j]
    w[j] = tmp
    for k in range(3):
        tmp = Q[k, i]
        Q[k, i] = Q[k, j]
        Q[k, j] = tmp


@numba.njit(cache=True)
def sym_eig3_into(A, a, w, Q):
    """Eigen-decomposition of symmetric ``A`` into ``w`` (descending) and ``Q``.

    ``a`` is a 3x3 scratch buffer (overwritten).  ``det(Q) = +1``.
    """
    for i in range(3):
        for j in range(3):
            a[i, j] = A[i, j]
            Q[i, j] = 1.0 if i == j else 0.0
    for _ in range(_JACOBI_SWEEPS):
        off = a[0, 1] * a[0, 1] + a[0, 2] * a[0, 2] + a[1, 2] * a[1, 2]
        diag = a[0, 0] * a[0, 0] + a[1, 1] * a[1, 1] + a[2, 2] * a[2, 2]
        if off <= 1e-34 * diag:
            break
        _rotate(a, Q, 0, 1)
        _rotate(a, Q, 0, 2)
        _rotate(a, Q, 1, 2)
    for i in range(3):
        w[i] = a[i, i]
    if w[0] < w[1]:
        _swap_cols(w, Q, 0, 1)
    if w[1] < w[2]:
        _swap_cols(w, Q, 1, 2)
    if w[0] < w[1]:
        _swap_cols(w, Q, 0, 1)
    det = (Q[0, 0] * (Q[1, 1] * Q[2, 2] - Q[1, 2] * Q[2, 1])
           - Q[0, 1] * (Q[1, 0] * Q[2, 2] - Q[1, 2] * Q[2, 0])
           + Q[0, 2] * (Q[1, 0] * Q[2, 1] - Q[1, 1] * Q[2, 0]))
    if det < 0.0:
        for k in range(3):
            Q[k, 2] = -Q[k, 2]


@numba.njit(cache=True)
def svd3_into(F, U, s, V):
    """Rotation-preserving SVD ``F = U diag(s) V^T`` written into buffers.

    ``s[0] >= s[1] >= |s[2]|``; ``s[2] < 0`` exactly when ``det(F) < 0``.
    """
    # U holds F^T F and doubles as the Jacobi scratch; s receives the
    # eigenvalues of F^T F and is overwritten with singular values below
    for i in range(3):
        for j in range(i, 3):
            c = F[0, i] * F[0, j] + F[1, i] * F[1, j] + F[2, i] * F[2, j]
            U[i, j] = c
            U[j, i] = c
    sym_eig3_into(U, U, s, V)
    # left vectors: u0 = F v0 / |F v0|, u1 orthogonalised, u2 = u0 x u1
    x0 = F[0, 0] * V[0, 0] + F[0, 1] * V[1, 0] + F[0, 2] * V[2, 0]
    y0 = F[1, 0] * V[0, 0] + F[1, 1] * V[1, 0] + F[1, 2] * V[2, 0]
    z0 = F[2, 0] * V[0, 0] + F[2, 1] * V[1, 0] + F[2, 2] * V[2, 0]
    n0 = np.sqrt(x0 * x0 + y0 * y0 + z0 * z0)
    if n0 == 0.0:
        for i in range(3):
            s[i] = 0.0
            for j in range(3):
                U[i, j] = 1.0 if i == j else 0.0
                V[i, j] = 1.0 if i == j else 0.0
        return
    x0 /= n0
    y0 /= n0
    z0 /= n0
    x1 = F[0, 0] * V[0, 1] + F[0, 1] * V[1, 1] + F[0, 2] * V[2, 1]
    y1 = F[1, 0] * V[0, 1] + F[1, 1] * V[1, 1] + F[1, 2] * V[2, 1]
    z1 = F[2, 0] * V[0, 1] + F[2, 1] * V[1, 1] + F[2, 2] * V[2, 1]
    d = x1 * x0 + y1 * y0 + z1 * z0
    x1 -= d * x0
    y1 -= d * y0
    z1 -= d * z0
    n1 = np.sqrt(x1 * x1 + y1 * y1 + z1 * z1)
    if n1 < 1e-150 * n0:
        # rank one: any unit vector orthogonal to u0
        if abs(x0) <= abs(y0) and abs(x0) <= abs(z0):
            x1, y1, z1 = 0.0, -z0, y0
        elif abs(y0) <= abs(z0):
            x1, y1, z1 = z0, 0.0, -x0
        else:
            x1, y1, z1 = -y0, x0, 0.0
        n1 = np.sqrt(x1 * x1 + y1 * y1 + z1 * z1)
    x1 /= n1
    y1 /= n1
    z1 /= n1
    x2 = y0 * z1 - z0 * y1
    y2 = z0 * x1 - x0 * z1
    z2 = x0 * y1 - y0 * x1
    U[0, 0], U[1, 0], U[2, 0] = x0, y0, z0
    U[0, 1], U[1, 1], U[2, 1] = x1, y1, z1
    U[0, 2], U[1, 2], U[2, 2] = x2, y2, z2
    for j in range(3):
        acc = 0.0
        for i in range(3):
            acc += U[i, j] * (F[i, 0] * V[0, j] + F[i, 1] * V[1, j] + F[i, 2] * V[2, j])
        s[j] = acc


@numba.njit(cache=True)
def svd3(F):
    """Allocating wrapper around :func:`svd3_into`."""
    U = np.empty((3, 3))
    s = np.empty(3)
    V = np.empty((3, 3))
    svd3_into(np.ascontiguousarray(F), U, s, V)
    return U, s, V


@numba.njit(cache=True)
def polar3(F):
    """Rotation factor ``R`` of the polar decomposition ``F = R S``."""
    U, s, V = svd3(F)
    return U @ V.T
