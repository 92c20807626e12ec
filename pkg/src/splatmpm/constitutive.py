"""Non-associated Cam-clay (NACC) elastoplasticity with continuous return mapping.

Stress lives in the (p, q) plane: ``p = -tr(tau)/3`` (positive in compression)
and ``q = sqrt(3/2) |dev tau|``.  The yield surface is the ellipse

    y(p, q) = (1 + 2 beta) q^2 + M^2 (p + beta p0) (p - p0)

whose size ``p0 = kappa sinh(xi max(-alpha, 0))`` shrinks as the damage
variable alpha grows.  Trial states outside the ellipse are projected back;
the interior branch projects along the line through a pseudo-center that
slides towards the trial point near the tips, which removes the jump of the
classic center-line projection at ``p = p0``.

The scalar kernels are numba functions shared by the public API below and by
the particle loop in :mod:`splatmpm.engine`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .errors import DegenerateGradientError, PressureOverflowError
from .linalg3 import svd3_into
from .model import (
    MAT_BETA, MAT_KAPPA, MAT_LAM, MAT_M, MAT_MODEL, MAT_MU, MAT_XI,
    ElasticModel, NaccMaterial, YieldPoint, material_table,
)

DEFAULT_K = 2.0

FLUID_ALPHA0 = -1e-6
FLUID_BETA = 1e-3

# plastic_update status codes
STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_OVERFLOW = 2

_SQRT6 = math.sqrt(6.0)
_SQRT15 = math.sqrt(1.5)


class ReturnCase(enum.IntEnum):
    ELASTIC = 0
    TIP_UPPER = 1
    TIP_LOWER = 2
    INTERIOR = 3


@dataclass
class ReturnMapResult:
    projected: YieldPoint
    case_tag: ReturnCase
    new_def_grad: Optional[np.ndarray]
    delta_alpha: float


# ----------------------------------------------------------------- kernels


@numba.njit(cache=True)
def principal_tau(e0, e1, e2, mu, lam, model):
    """Principal Kirchhoff stresses for principal Hencky strains ``e_i``."""
    tr = e0 + e1 + e2
    if model == 0:
        return (2.0 * mu * e0 + lam * tr,
                2.0 * mu * e1 + lam * tr,
                2.0 * mu * e2 + lam * tr)
    # Neo-Hookean: tau = mu (F F^T - I) + lam ln J I
    return (mu * (math.exp(2.0 * e0) - 1.0) + lam * tr,
            mu * (math.exp(2.0 * e1) - 1.0) + lam * tr,
            mu * (math.exp(2.0 * e2) - 1.0) + lam * tr)


@numba.njit(cache=True)
def pq_from_tau(t0, t1, t2):
    m = (t0 + t1 + t2) / 3.0
    d0 = t0 - m
    d1 = t1 - m
    d2 = t2 - m
    return -m, _SQRT15 * math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)


@numba.njit(cache=True)
def p0_value(alpha, kappa, xi):
    return kappa * math.sinh(xi * max(-alpha, 0.0))


@numba.njit(cache=True)
def yield_value(p, q, p0, beta, M):
    return (1.0 + 2.0 * beta) * q * q + M * M * (p + beta * p0) * (p - p0)


@numba.njit(cache=True)
def return_map_pq(p_tr, q_tr, p0, beta, M, k):
    """Project a trial (p, q) onto the yield ellipse.

    Returns ``(p, q, case)`` with case codes matching :class:`ReturnCase`.
    """
    if yield_value(p_tr, q_tr, p0, beta, M) <= 0.0:
        return p_tr, q_tr, 0
    if p0 <= 0.0:
        # degenerate surface: everything collapses onto the origin
        if p_tr > 0.0:
            return 0.0, 0.0, 1
        if p_tr < 0.0:
            return 0.0, 0.0, 2
        return 0.0, 0.0, 3
    if p_tr > p0:
        return p0, 0.0, 1
    if p_tr < -beta * p0:
        return -beta * p0, 0.0, 2
    pc = 0.5 * (1.0 - beta) * p0
    half_axis = p0 - pc
    phi = abs((p_tr - pc) / half_axis) ** k
    pcd = pc + phi * (p_tr - pc)
    # y(pcd + t b, t q_tr) = A t^2 + B t + C, root in (0, 1]
    b = p_tr - pcd
    M2 = M * M
    A = (1.0 + 2.0 * beta) * q_tr * q_tr + M2 * b * b
    B = M2 * b * (2.0 * pcd + beta * p0 - p0)
    C = M2 * (pcd + beta * p0) * (pcd - p0)
    if C >= 0.0:
        # pseudo-center already on the surface (a tip)
        return pcd, 0.0, 3
    disc = math.sqrt(max(B * B - 4.0 * A * C, 0.0))
    if B >= 0.0:
        t = 2.0 * C / (-B - disc)
    else:
        t = (-B + disc) / (2.0 * A)
    # one Newton polish on the quadratic
    g = (A * t + B) * t + C
    dg = 2.0 * A * t + B
    if dg != 0.0:
        t -= g / dg
    t = min(max(t, 0.0), 1.0)
    return pcd + t * b, t * q_tr, 3


@numba.njit(cache=True)
def je_radicand(p, kappa):
    return 1.0 - 2.0 * p / kappa


@numba.njit(cache=True)
def _neo_pq(v, s, d0, d1, d2, mu, lam):
    b0 = math.exp(2.0 * (v / 3.0 + s * d0))
    b1 = math.exp(2.0 * (v / 3.0 + s * d1))
    b2 = math.exp(2.0 * (v / 3.0 + s * d2))
    mb = (b0 + b1 + b2) / 3.0
    p = -(mu * (mb - 1.0) + lam * v)
    g0 = b0 - mb
    g1 = b1 - mb
    g2 = b2 - mb
    G = math.sqrt(g0 * g0 + g1 * g1 + g2 * g2)
    q = _SQRT15 * mu * G
    # derivatives
    dp_dv = -(mu * 2.0 * mb / 3.0 + lam)
    db0 = 2.0 * b0 * d0
    db1 = 2.0 * b1 * d1
    db2 = 2.0 * b2 * d2
    mdb = (db0 + db1 + db2) / 3.0
    dp_ds = -mu * mdb
    # d g / dv = 2/3 g, so d G / dv = 2/3 G
    dq_dv = _SQRT15 * mu * 2.0 * G / 3.0
    if G > 0.0:
        dq_ds = _SQRT15 * mu * (g0 * (db0 - mdb) + g1 * (db1 - mdb) + g2 * (db2 - mdb)) / G
    else:
        dq_ds = _SQRT15 * mu * math.sqrt((db0 - mdb) ** 2 + (db1 - mdb) ** 2 + (db2 - mdb) ** 2)
    return p, q, dp_dv, dp_ds, dq_dv, dq_ds


@numba.njit(cache=True)
def hencky_target(e, p_new, q_new, mu, lam, model, out):
    """Principal Hencky strains whose stress has the given (p, q).

    The deviatoric direction of ``e`` is preserved.  Returns False if the
    Neo-Hookean solve does not converge.
    """
    tr = e[0] + e[1] + e[2]
    m = tr / 3.0
    d0 = e[0] - m
    d1 = e[1] - m
    d2 = e[2] - m
    dn = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    kappa = lam + 2.0 * mu / 3.0
    if dn > 0.0:
        d0 /= dn
        d1 /= dn
        d2 /= dn
    if model == 0:
        v = -p_new / kappa
        s = q_new / (_SQRT6 * mu) if dn > 0.0 else 0.0
        out[0] = v / 3.0 + s * d0
        out[1] = v / 3.0 + s * d1
        out[2] = v / 3.0 + s * d2
        return True
    # Neo-Hookean: Newton on (v, s) from the Hencky linearisation
    v = -p_new / kappa
    s = q_new / (_SQRT6 * mu) if dn > 0.0 else 0.0
    solve_s = dn > 0.0 and q_new > 0.0
    if not solve_s:
        s = 0.0
    scale_p = max(abs(p_new), mu)
    scale_q = max(q_new, mu)
    converged = False
    for _ in range(60):
        p, q, dp_dv, dp_ds, dq_dv, dq_ds = _neo_pq(v, s, d0, d1, d2, mu, lam)
        rp = p - p_new
        rq = q - q_new
        if solve_s:
            det = dp_dv * dq_ds - dp_ds * dq_dv
            if det == 0.0:
                break
            dv = (rp * dq_ds - rq * dp_ds) / det
            ds = (dp_dv * rq - dq_dv * rp) / det
        else:
            dv = rp / dp_dv
            ds = 0.0
        # damp steps that would push the exponentials too far
        lim = 0.5
        if abs(dv) > lim:
            ds *= lim / abs(dv)
            dv = math.copysign(lim, dv)
        if abs(ds) > lim:
            dv *= lim / abs(ds)
            ds = math.copysign(lim, ds)
        v -= dv
        s -= ds
        if s < 0.0:
            s = 0.5 * (s + ds)
        if abs(rp) <= 1e-13 * scale_p and abs(rq) <= 1e-13 * scale_q:
            converged = True
            break
    out[0] = v / 3.0 + s * d0
    out[1] = v / 3.0 + s * d1
    out[2] = v / 3.0 + s * d2
    return converged


@numba.njit(cache=True)
def _compose(U, sv, V, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = (U[i, 0] * sv[0] * V[j, 0] + U[i, 1] * sv[1] * V[j, 1]
                         + U[i, 2] * sv[2] * V[j, 2])


@numba.njit(cache=True)
def plastic_update(F, alpha, row, k, F_out, tau_out, U, s, V, e):
    """Return-map one particle's trial elastic deformation gradient.

    Writes the corrected gradient to ``F_out`` and the Kirchhoff stress at
    ``F_out`` to ``tau_out``.  Returns ``(alpha_new, case, status)``.
    ``U, s, V, e`` are scratch buffers.
    """
    mu = row[MAT_MU]
    lam = row[MAT_LAM]
    kappa = row[MAT_KAPPA]
    beta = row[MAT_BETA]
    xi = row[MAT_XI]
    M = row[MAT_M]
    model = int(row[MAT_MODEL])
    svd3_into(F, U, s, V)
    if not (s[2] > 0.0):
        return alpha, 0, STATUS_DEGENERATE
    e[0] = math.log(s[0])
    e[1] = math.log(s[1])
    e[2] = math.log(s[2])
    t0, t1, t2 = principal_tau(e[0], e[1], e[2], mu, lam, model)
    p_tr, q_tr = pq_from_tau(t0, t1, t2)
    p0 = p0_value(alpha, kappa, xi)
    p_new, q_new, case = return_map_pq(p_tr, q_tr, p0, beta, M, k)
    if case == 0:
        for i in range(3):
            for j in range(3):
                F_out[i, j] = F[i, j]
                tau_out[i, j] = (U[i, 0] * t0 * U[j, 0] + U[i, 1] * t1 * U[j, 1]
                                 + U[i, 2] * t2 * U[j, 2])
        return alpha, 0, STATUS_OK
    r_tr = je_radicand(p_tr, kappa)
    r_new = je_radicand(p_new, kappa)
    if not (r_tr > 0.0 and r_new > 0.0):
        return alpha, case, STATUS_OVERFLOW
    alpha_new = alpha + 0.5 * (math.log(r_tr) - math.log(r_new))
    hencky_target(e, p_new, q_new, mu, lam, model, e)
    t0, t1, t2 = principal_tau(e[0], e[1], e[2], mu, lam, model)
    s[0] = math.exp(e[0])
    s[1] = math.exp(e[1])
    s[2] = math.exp(e[2])
    _compose(U, s, V, F_out)
    for i in range(3):
        for j in range(3):
            tau_out[i, j] = (U[i, 0] * t0 * U[j, 0] + U[i, 1] * t1 * U[j, 1]
                             + U[i, 2] * t2 * U[j, 2])
    return alpha_new, case, STATUS_OK


@numba.njit(cache=True)
def stress_from_F(F, row, tau_out, U, s, V):
    """Kirchhoff stress; returns False when det F <= 0."""
    svd3_into(F, U, s, V)
    if not (s[2] > 0.0):
        return False
    t0, t1, t2 = principal_tau(math.log(s[0]), math.log(s[1]), math.log(s[2]),
                               row[MAT_MU], row[MAT_LAM], int(row[MAT_MODEL]))
    for i in range(3):
        for j in range(3):
            tau_out[i, j] = (U[i, 0] * t0 * U[j, 0] + U[i, 1] * t1 * U[j, 1]
                             + U[i, 2] * t2 * U[j, 2])
    return True


@numba.njit(cache=True)
def return_map_batch(p_tr, q_tr, p0, beta, M, k, p_out, q_out, case_out):
    for i in range(p_tr.shape[0]):
        p_out[i], q_out[i], case_out[i] = return_map_pq(p_tr[i], q_tr[i], p0, beta, M, k)


# ------------------------------------------------------------- public API


def _row(material: NaccMaterial) -> np.ndarray:
    return material_table([material])[0]


def _svd_checked(F):
    F = np.ascontiguousarray(F, dtype=float)
    U = np.empty((3, 3))
    s = np.empty(3)
    V = np.empty((3, 3))
    svd3_into(F, U, s, V)
    if not (s[2] > 0.0) or not np.isfinite(s).all():
        raise DegenerateGradientError(f"degenerate deformation gradient, det F = {np.linalg.det(F)!r}")
    return U, s, V


def kirchhoff_stress(def_grad, material: NaccMaterial) -> np.ndarray:
    """Kirchhoff stress tau = P F^T for the material's elastic model."""
    U, s, _ = _svd_checked(def_grad)
    t = principal_tau(*np.log(s), material.mu, material.lam, int(material.elastic_model))
    return (U * np.asarray(t)) @ U.T


def pq_of(def_grad, material: NaccMaterial) -> YieldPoint:
    U, s, _ = _svd_checked(def_grad)
    t = principal_tau(*np.log(s), material.mu, material.lam, int(material.elastic_model))
    p, q = pq_from_tau(*t)
    return YieldPoint(p, q)


def p0_of(alpha: float, material: NaccMaterial) -> float:
    return p0_value(float(alpha), material.kappa, material.xi)


def yield_function(point, p0: float, material: NaccMaterial) -> float:
    p, q = point
    return yield_value(float(p), float(q), float(p0), material.beta, material.slope_m)


def update_alpha(alpha: float, p_trial: float, p_new: float, material: NaccMaterial) -> float:
    """alpha + ln(J_E(p_trial) / J_E(p_new)) with J_E(p) = sqrt(1 - 2p/kappa)."""
    kappa = material.kappa
    r_tr = je_radicand(p_trial, kappa)
    r_new = je_radicand(p_new, kappa)
    if not (r_tr > 0 and r_new > 0):
        raise PressureOverflowError(
            f"J_E undefined: pressure exceeds kappa/2 (p_trial={p_trial!r}, p_new={p_new!r})")
    if p_trial == p_new:
        return alpha
    return alpha + 0.5 * (math.log(r_tr) - math.log(r_new))


def reconstruct_def_grad(trial_def_grad, projected, material: NaccMaterial) -> np.ndarray:
    """Rebuild F so that ``pq_of(F)`` equals ``projected``.

    Singular vectors of the trial gradient are kept; in Hencky strain space the
    volumetric part is set from p and the deviator is rescaled to match q.
    """
    U, s, V = _svd_checked(trial_def_grad)
    e = np.log(s)
    out = np.empty(3)
    ok = hencky_target(e, float(projected[0]), float(projected[1]),
                       material.mu, material.lam, int(material.elastic_model), out)
    if not ok:
        raise DegenerateGradientError("could not reach the projected stress state")
    return (U * np.exp(out)) @ V.T


def return_map(trial, p0: float, material: NaccMaterial, k: float = DEFAULT_K,
               def_grad=None) -> ReturnMapResult:
    """Project ``trial`` onto the yield surface of size ``p0``.

    With ``def_grad`` (the trial gradient) the corrected gradient is rebuilt
    as well; otherwise ``new_def_grad`` is None.  ``delta_alpha`` is NaN when
    either pressure lies beyond kappa/2, where J_E is undefined.
    """
    p_tr, q_tr = float(trial[0]), float(trial[1])
    if q_tr < 0:
        raise ValueError("q must be non-negative")
    p, q, case = return_map_pq(p_tr, q_tr, float(p0), material.beta, material.slope_m, float(k))
    case = ReturnCase(case)
    if case == ReturnCase.ELASTIC:
        F = None if def_grad is None else np.array(def_grad, dtype=float)
        return ReturnMapResult(YieldPoint(p_tr, q_tr), case, F, 0.0)
    try:
        dalpha = update_alpha(0.0, p_tr, p, material)
    except PressureOverflowError:
        dalpha = math.nan  # trial beyond kappa/2: projection valid, J_E is not
    F = None if def_grad is None else reconstruct_def_grad(def_grad, (p, q), material)
    return ReturnMapResult(YieldPoint(p, q), case, F, dalpha)


def plastic_projection(def_grad, alpha: float, material: NaccMaterial, k: float = DEFAULT_K):
    """Full per-particle correction: ``(F_new, alpha_new, case)``.

    Same kernel as the engine's particle loop.
    """
    F = np.ascontiguousarray(def_grad, dtype=float)
    F_out = np.empty((3, 3))
    tau = np.empty((3, 3))
    a, case, status = plastic_update(F, float(alpha), _row(material), float(k), F_out, tau,
                                     np.empty((3, 3)), np.empty(3), np.empty((3, 3)), np.empty(3))
    if status == STATUS_DEGENERATE:
        raise DegenerateGradientError("degenerate deformation gradient")
    if status == STATUS_OVERFLOW:
        raise PressureOverflowError("J_E undefined: pressure exceeds kappa/2")
    return F_out, a, ReturnCase(case)


def fluid_params(material: NaccMaterial) -> NaccMaterial:
    """Copy with an (almost) vanishing elastic region: p0 -> 0."""
    return material.with_(alpha0=FLUID_ALPHA0, beta=FLUID_BETA)
