"""Map simulated deformation onto renderable splat attributes.

Covariances follow ``a = F A F^T``; the appearance frame follows the rotation
of the polar decomposition ``F = R S``.  Degree-1 SH rotate exactly, higher
bands are carried through unrotated.
"""

import numba
import numpy as np

from .errors import DegenerateGradientError
from .linalg3 import svd3_into
from .model import ParticleSet


def update_covariance(static_cov, def_grad):
    """``F A F^T``, symmetrised; works on single matrices or stacks."""
    A = np.asarray(static_cov, dtype=float)
    F = np.asarray(def_grad, dtype=float)
    a = F @ A @ np.swapaxes(F, -1, -2)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@numba.njit(cache=True)
def _polar_batch(F, R, ok):
    U = np.empty((3, 3))
    s = np.empty(3)
    V = np.empty((3, 3))
    for p in range(F.shape[0]):
        svd3_into(F[p], U, s, V)
        ok[p] = s[2] > 0.0
        for i in range(3):
            for j in range(3):
                R[p, i, j] = U[i, 0] * V[j, 0] + U[i, 1] * V[j, 1] + U[i, 2] * V[j, 2]


def extract_rotation(def_grad):
    """Rotation factor ``R`` of ``F = R S`` (single matrix or stack)."""
    F = np.asarray(def_grad, dtype=float)
    single = F.ndim == 2
    Fs = np.ascontiguousarray(F.reshape(-1, 3, 3))
    R = np.empty_like(Fs)
    ok = np.empty(len(Fs), dtype=np.bool_)
    _polar_batch(Fs, R, ok)
    if not ok.all() or not np.isfinite(Fs).all():
        i = int(np.flatnonzero(~ok)[0]) if not ok.all() else 0
        raise DegenerateGradientError(f"degenerate deformation gradient at index {i}", particle=i)
    return R[0] if single else R


# degree-1 real SH in 3DGS order evaluate as C1 * (-y c1 + z c2 - x c3);
# w = (-c3, -c1, c2) is the equivalent xyz vector and rotates like a vector
def _band1_to_vec(c):
    return np.stack([-c[..., 2, :], -c[..., 0, :], c[..., 1, :]], axis=-2)


def _vec_to_band1(w):
    return np.stack([-w[..., 1, :], w[..., 2, :], -w[..., 0, :]], axis=-2)


def rotate_sh(sh_coeffs, rotation):
    """Rotate SH coefficients of shape ``(..., K, 3)`` by ``rotation``.

    ``rotation`` is a 3x3 matrix or a stack matching the leading dimensions.
    """
    sh = np.array(sh_coeffs, dtype=float, copy=True)
    if sh.shape[-2] < 4:
        return sh
    R = np.asarray(rotation, dtype=float)
    w = _band1_to_vec(sh[..., 1:4, :])
    sh[..., 1:4, :] = _vec_to_band1(R @ w)
    return sh


def evolve(particles: ParticleSet, out: ParticleSet = None) -> ParticleSet:
    """Refresh dynamic covariances and return a copy with rotated SH."""
    out = particles.copy() if out is None else out
    out.dynamic_cov[:] = update_covariance(particles.static_cov, particles.F)
    if particles.sh.shape[1] >= 4 and len(particles):
        out.sh[:] = rotate_sh(particles.sh, extract_rotation(particles.F))
    particles.dynamic_cov[:] = out.dynamic_cov
    return out
