"""Slow, independent reference implementations for tests.

Nothing in the production path imports this module.  Every routine here is
written against numpy/scipy primitives only, so that a bug in the fast
kernels cannot leak into the values they are checked against.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import OracleInapplicableError
from .model import ElasticModel, NaccMaterial, ParticleSet, YieldPoint


def _y(p, q, p0, m: NaccMaterial):
    b, M = m.beta, m.slope_m
    return (1 + 2 * b) * q * q + M * M * (p + b * p0) * (p - p0)


def oracle_return_map(trial, p0: float, material: NaccMaterial, k: float = 2.0,
                      tol: float = 1e-12) -> YieldPoint:
    """Bisection along the segment from the pseudo-center to the trial point."""
    p_tr, q_tr = float(trial[0]), float(trial[1])
    b = material.beta
    if not (-b * p0 < p_tr < p0):
        raise OracleInapplicableError("trial pressure outside the interior band")
    pc = 0.5 * (1 - b) * p0
    phi = abs((p_tr - pc) / (p0 - pc)) ** k
    pcd = pc + phi * (p_tr - pc)

    def seg(t):
        return pcd + t * (p_tr - pcd), t * q_tr

    lo, hi = 0.0, 1.0
    f_lo, f_hi = _y(*seg(lo), p0, material), _y(*seg(hi), p0, material)
    if abs(f_hi) <= 1e-14 * material.slope_m ** 2 * p0 * p0:
        return YieldPoint(p_tr, q_tr)  # already on the surface
    if not (f_lo < 0.0 < f_hi):
        raise OracleInapplicableError("no sign change of the yield function on the segment")
    # run past tol down to float resolution; tol is only the guaranteed bound
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _y(*seg(mid), p0, material) > 0.0:
            hi = mid
        else:
            lo = mid
    return YieldPoint(*seg(0.5 * (lo + hi)))


def apex_q(p: float, p0: float, material: NaccMaterial) -> float:
    """Positive q on the ellipse y = 0 at pressure p."""
    b, M = material.beta, material.slope_m
    return M * math.sqrt(max((p + b * p0) * (p0 - p), 0.0) / (1 + 2 * b))


def fixed_center_return(trial, p0: float, material: NaccMaterial) -> YieldPoint:
    """Line-ellipse intersection toward the fixed center ((1-b)p0/2, 0)."""
    b = material.beta
    pc = 0.5 * (1 - b) * p0
    p_tr, q_tr = float(trial[0]), float(trial[1])

    def seg(t):
        return pc + t * (p_tr - pc), t * q_tr

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _y(*seg(mid), p0, material) > 0.0:
            hi = mid
        else:
            lo = mid
    return YieldPoint(*seg(0.5 * (lo + hi)))


def oracle_density(splats: ParticleSet, query, deformed: bool = False) -> np.ndarray:
    """Untruncated opacity-weighted Gaussian sum at each query point."""
    x = np.asarray(query, dtype=float).reshape(-1, 3)
    out = np.zeros(len(x))
    covs = splats.dynamic_cov if deformed else splats.static_cov
    for mu, A, w in zip(splats.position, covs, splats.opacity):
        d = x - mu
        m2 = np.einsum("ni,ni->n", d, np.linalg.solve(A, d.T).T)
        out += w * np.exp(-0.5 * m2)
    return out


def elastic_energy(F, material: NaccMaterial) -> float:
    F = np.asarray(F, dtype=float)
    mu, lam = material.mu, material.lam
    if material.elastic_model == ElasticModel.NEO_HOOKEAN:
        lnJ = math.log(np.linalg.det(F))
        return 0.5 * mu * (np.sum(F * F) - 3.0) - mu * lnJ + 0.5 * lam * lnJ * lnJ
    s = np.linalg.svd(F, compute_uv=False)
    e = np.log(s)
    return mu * float(e @ e) + 0.5 * lam * float(e.sum()) ** 2


def oracle_fd_stress(def_grad, material: NaccMaterial, h: float = 1e-6) -> np.ndarray:
    """Kirchhoff stress P F^T with P from central differences of the energy."""
    F = np.asarray(def_grad, dtype=float)
    P = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            E = np.zeros((3, 3))
            E[i, j] = h
            P[i, j] = (elastic_energy(F + E, material) - elastic_energy(F - E, material)) / (2 * h)
    return P @ F.T
