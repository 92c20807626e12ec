"""Explicit MPM time stepping on Gaussian particles.

One substep is: clear grid -> P2G (mass, momentum, stress force) -> nodal
velocity update with gravity and boundaries -> G2P (PIC/FLIP velocity, velocity
gradient, trial F, NACC return mapping, advection).

Two scatter strategies are compiled.  Deterministic mode accumulates in
particle-index order on one thread.  Parallel mode bins particles into x-slabs
four cells wide and processes even then odd slabs with ``prange``; slabs of
the same parity never touch the same nodes, so no atomics are needed and the
only difference from deterministic mode is summation order.

Nodal mass is accumulated in fixed point (``MpmGrid.mass_units``), so total
grid mass equals total particle mass exactly in either mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np
from numba import prange

from .boundary import pack_boundaries
from .constitutive import (
    DEFAULT_K, STATUS_DEGENERATE, STATUS_OK, STATUS_OVERFLOW, plastic_update, stress_from_F,
)
from .errors import DegenerateGradientError, OutOfDomainError, PressureOverflowError
from .model import MpmGrid, NaccMaterial, ParticleSet, material_table

log = logging.getLogger(__name__)

MARGIN = 1.5  # cells between a particle and the first/last node
SLAB_WIDTH = 4
MASS_BITS = 44
DEFAULT_FLIP = 0.95


# ------------------------------------------------------------------ stencil


@numba.njit(cache=True, inline="always")
def _stencil(xp, origin, inv_dx, base, w, dw):
    for a in range(3):
        gx = (xp[a] - origin[a]) * inv_dx
        b = int(math.floor(gx - 0.5))
        fx = gx - b
        base[a] = b
        w[a, 0] = 0.5 * (1.5 - fx) ** 2
        w[a, 1] = 0.75 - (fx - 1.0) ** 2
        w[a, 2] = 0.5 * (fx - 0.5) ** 2
        dw[a, 0] = (fx - 1.5) * inv_dx
        dw[a, 1] = -2.0 * (fx - 1.0) * inv_dx
        dw[a, 2] = (fx - 0.5) * inv_dx


def mass_quantum(masses) -> float:
    """Power-of-two mass unit used by the fixed-point nodal mass."""
    masses = np.asarray(masses, dtype=float)
    if masses.size == 0 or not np.any(masses > 0):
        return 1.0
    return 2.0 ** (math.ceil(math.log2(float(masses.max()))) - MASS_BITS)


def quantize_masses(masses, quantum: float) -> np.ndarray:
    return np.rint(np.asarray(masses, dtype=float) / quantum).astype(np.int64)


# ------------------------------------------------------------------ scatter


@numba.njit(cache=True)
def _scatter_one(p, x, v, munits, mass, vol, tau, with_momentum, with_stress,
                 origin, inv_dx, gmu, gmv, gf, base, w, dw):
    _stencil(x[p], origin, inv_dx, base, w, dw)
    mp = mass[p]
    mu = munits[p]
    deposited = 0
    for a in range(3):
        for b in range(3):
            for c in range(3):
                wgt = w[0, a] * w[1, b] * w[2, c]
                i = base[0] + a
                j = base[1] + b
                k = base[2] + c
                if with_momentum:
                    if not (a == 1 and b == 1 and c == 1):
                        du = np.int64(round(mu * wgt))
                        gmu[i, j, k] += du
                        deposited += du
                    mw = mp * wgt
                    gmv[i, j, k, 0] += mw * v[p, 0]
                    gmv[i, j, k, 1] += mw * v[p, 1]
                    gmv[i, j, k, 2] += mw * v[p, 2]
                if with_stress:
                    g0 = dw[0, a] * w[1, b] * w[2, c]
                    g1 = w[0, a] * dw[1, b] * w[2, c]
                    g2 = w[0, a] * w[1, b] * dw[2, c]
                    V = vol[p]
                    gf[i, j, k, 0] -= V * (tau[p, 0, 0] * g0 + tau[p, 0, 1] * g1 + tau[p, 0, 2] * g2)
                    gf[i, j, k, 1] -= V * (tau[p, 1, 0] * g0 + tau[p, 1, 1] * g1 + tau[p, 1, 2] * g2)
                    gf[i, j, k, 2] -= V * (tau[p, 2, 0] * g0 + tau[p, 2, 1] * g1 + tau[p, 2, 2] * g2)
    if with_momentum:
        gmu[base[0] + 1, base[1] + 1, base[2] + 1] += mu - deposited


@numba.njit(cache=True)
def _scatter_serial(x, v, munits, mass, vol, tau, with_momentum, with_stress,
                    origin, inv_dx, gmu, gmv, gf):
    base = np.empty(3, dtype=np.int64)
    w = np.empty((3, 3))
    dw = np.empty((3, 3))
    for p in range(x.shape[0]):
        _scatter_one(p, x, v, munits, mass, vol, tau, with_momentum, with_stress,
                     origin, inv_dx, gmu, gmv, gf, base, w, dw)


@numba.njit(cache=True, parallel=True)
def _scatter_slabs(x, v, munits, mass, vol, tau, with_momentum, with_stress,
                   origin, inv_dx, gmu, gmv, gf, order, slab_start):
    nslab = slab_start.shape[0] - 1
    for parity in range(2):
        nsel = (nslab - parity + 1) // 2
        for t in prange(nsel):
            s = parity + 2 * t
            base = np.empty(3, dtype=np.int64)
            w = np.empty((3, 3))
            dw = np.empty((3, 3))
            for n in range(slab_start[s], slab_start[s + 1]):
                _scatter_one(order[n], x, v, munits, mass, vol, tau, with_momentum,
                             with_stress, origin, inv_dx, gmu, gmv, gf, base, w, dw)


def _slab_bins(x, grid: MpmGrid):
    gx = (x[:, 0] - grid.origin[0]) / grid.spacing
    slab = (np.floor(gx - 0.5).astype(np.int64)) // SLAB_WIDTH
    nslab = (grid.dims[0] + SLAB_WIDTH - 1) // SLAB_WIDTH
    order = np.argsort(slab, kind="stable")
    counts = np.bincount(slab, minlength=nslab)
    start = np.zeros(nslab + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    return order.astype(np.int64), start


def _scatter(particles, grid, tau, munits, *, momentum, stress, deterministic):
    args = (particles.position, particles.velocity, munits, particles.mass, particles.volume,
            tau, momentum, stress, grid.origin, 1.0 / grid.spacing,
            grid.mass_units, grid.momentum, grid.force)
    if deterministic:
        _scatter_serial(*args)
    else:
        order, start = _slab_bins(particles.position, grid)
        _scatter_slabs(*args, order, start)


def _finish_p2g(grid: MpmGrid):
    grid.mass[...] = grid.mass_units * grid.mass_quantum
    m = grid.mass
    has = m > 0
    grid.velocity.fill(0.0)
    grid.velocity[has] = grid.momentum[has] / m[has][:, None]


# ------------------------------------------------------------- grid update


@numba.njit(cache=True, inline="always")
def _respond(v, vb, n, mode):
    if mode == 0:
        v[0] = vb[0]
        v[1] = vb[1]
        v[2] = vb[2]
        return
    r0 = v[0] - vb[0]
    r1 = v[1] - vb[1]
    r2 = v[2] - vb[2]
    vn = r0 * n[0] + r1 * n[1] + r2 * n[2]
    if vn < 0.0:
        v[0] -= vn * n[0]
        v[1] -= vn * n[1]
        v[2] -= vn * n[2]


@numba.njit(cache=True, parallel=True)
def _grid_update_kernel(gm, gv, gvold, gf, dt, origin, dx, planes, boxes):
    nx, ny, nz = gm.shape
    for i in prange(nx):
        v = np.empty(3)
        xn = np.empty(3)
        vb = np.empty(3)
        n = np.empty(3)
        for j in range(ny):
            for k in range(nz):
                m = gm[i, j, k]
                if m <= 0.0:
                    for a in range(3):
                        gv[i, j, k, a] = 0.0
                        gvold[i, j, k, a] = 0.0
                    continue
                for a in range(3):
                    gvold[i, j, k, a] = gv[i, j, k, a]
                    v[a] = gv[i, j, k, a] + dt * gf[i, j, k, a] / m
                xn[0] = origin[0] + dx * i
                xn[1] = origin[1] + dx * j
                xn[2] = origin[2] + dx * k
                for b in range(planes.shape[0]):
                    d = 0.0
                    for a in range(3):
                        d += (xn[a] - planes[b, a]) * planes[b, 3 + a]
                    if d <= 0.0:
                        for a in range(3):
                            n[a] = planes[b, 3 + a]
                            vb[a] = planes[b, 7 + a]
                        _respond(v, vb, n, int(planes[b, 6]))
                for b in range(boxes.shape[0]):
                    inside = True
                    for a in range(3):
                        if xn[a] < boxes[b, a] or xn[a] > boxes[b, 3 + a]:
                            inside = False
                    if not inside:
                        continue
                    # outward normal of the nearest face
                    best = 1e300
                    for a in range(3):
                        n[a] = 0.0
                        vb[a] = boxes[b, 7 + a]
                    axis = 0
                    sign = 1.0
                    for a in range(3):
                        dlo = xn[a] - boxes[b, a]
                        dhi = boxes[b, 3 + a] - xn[a]
                        if dlo < best:
                            best = dlo
                            axis = a
                            sign = -1.0
                        if dhi < best:
                            best = dhi
                            axis = a
                            sign = 1.0
                    n[axis] = sign
                    _respond(v, vb, n, int(boxes[b, 6]))
                for a in range(3):
                    gv[i, j, k, a] = v[a]


# --------------------------------------------------------------------- G2P


@numba.njit(cache=True)
def _g2p_one(p, x, v, F, alpha, mid, table, gv, gvold, origin, inv_dx, dims, dt, flip, k,
             tau, case_out, status_out, clamped, base, w, dw, Ft, Fo, U, s, V, e, tp):
    _stencil(x[p], origin, inv_dx, base, w, dw)
    vp0 = 0.0
    vp1 = 0.0
    vp2 = 0.0
    dv0 = 0.0
    dv1 = 0.0
    dv2 = 0.0
    G = Fo  # Fo holds the velocity gradient until the return map overwrites it
    for r in range(3):
        for c in range(3):
            G[r, c] = 0.0
    for a in range(3):
        for b in range(3):
            for c in range(3):
                i = base[0] + a
                j = base[1] + b
                kk = base[2] + c
                wgt = w[0, a] * w[1, b] * w[2, c]
                g0 = dw[0, a] * w[1, b] * w[2, c]
                g1 = w[0, a] * dw[1, b] * w[2, c]
                g2 = w[0, a] * w[1, b] * dw[2, c]
                n0 = gv[i, j, kk, 0]
                n1 = gv[i, j, kk, 1]
                n2 = gv[i, j, kk, 2]
                vp0 += wgt * n0
                vp1 += wgt * n1
                vp2 += wgt * n2
                dv0 += wgt * (n0 - gvold[i, j, kk, 0])
                dv1 += wgt * (n1 - gvold[i, j, kk, 1])
                dv2 += wgt * (n2 - gvold[i, j, kk, 2])
                G[0, 0] += n0 * g0
                G[0, 1] += n0 * g1
                G[0, 2] += n0 * g2
                G[1, 0] += n1 * g0
                G[1, 1] += n1 * g1
                G[1, 2] += n1 * g2
                G[2, 0] += n2 * g0
                G[2, 1] += n2 * g1
                G[2, 2] += n2 * g2
    pic = 1.0 - flip
    v[p, 0] = flip * (v[p, 0] + dv0) + pic * vp0
    v[p, 1] = flip * (v[p, 1] + dv1) + pic * vp1
    v[p, 2] = flip * (v[p, 2] + dv2) + pic * vp2
    # trial F = (I + dt grad v) F
    for r in range(3):
        for c in range(3):
            acc = F[p, r, c]
            for m in range(3):
                acc += dt * G[r, m] * F[p, m, c]
            Ft[r, c] = acc
    for a in range(3):
        x[p, a] += dt * v[p, a]
    mat = table[mid[p]]
    a_new, case, status = plastic_update(Ft, alpha[p], mat, k, Fo, tp, U, s, V, e)
    case_out[p] = case
    status_out[p] = status
    if status == 0:
        alpha[p] = a_new
        for r in range(3):
            for c in range(3):
                F[p, r, c] = Fo[r, c]
                tau[p, r, c] = tp[r, c]
    # keep particles inside the interpolation margin
    out = False
    for a in range(3):
        g = (x[p, a] - origin[a]) * inv_dx
        hi = dims[a] - 1 - 1.5
        if g < 1.5:
            x[p, a] = origin[a] + 1.5 / inv_dx
            out = True
        elif g > hi:
            x[p, a] = origin[a] + hi / inv_dx
            out = True
    if out:
        v[p, 0] = 0.0
        v[p, 1] = 0.0
        v[p, 2] = 0.0
    clamped[p] = out


@numba.njit(cache=True)
def _g2p_serial(x, v, F, alpha, mid, table, gv, gvold, origin, inv_dx, dims, dt, flip, k,
                tau, case_out, status_out, clamped):
    base = np.empty(3, dtype=np.int64)
    w = np.empty((3, 3))
    dw = np.empty((3, 3))
    Ft = np.empty((3, 3))
    Fo = np.empty((3, 3))
    U = np.empty((3, 3))
    s = np.empty(3)
    V = np.empty((3, 3))
    e = np.empty(3)
    tp = np.empty((3, 3))
    for p in range(x.shape[0]):
        _g2p_one(p, x, v, F, alpha, mid, table, gv, gvold, origin, inv_dx, dims, dt, flip, k,
                 tau, case_out, status_out, clamped, base, w, dw, Ft, Fo, U, s, V, e, tp)


@numba.njit(cache=True, parallel=True)
def _g2p_parallel(x, v, F, alpha, mid, table, gv, gvold, origin, inv_dx, dims, dt, flip, k,
                  tau, case_out, status_out, clamped, chunk):
    n = x.shape[0]
    nchunk = (n + chunk - 1) // chunk
    for c in prange(nchunk):
        base = np.empty(3, dtype=np.int64)
        w = np.empty((3, 3))
        dw = np.empty((3, 3))
        Ft = np.empty((3, 3))
        Fo = np.empty((3, 3))
        U = np.empty((3, 3))
        s = np.empty(3)
        V = np.empty((3, 3))
        e = np.empty(3)
        tp = np.empty((3, 3))
        for p in range(c * chunk, min(n, (c + 1) * chunk)):
            _g2p_one(p, x, v, F, alpha, mid, table, gv, gvold, origin, inv_dx, dims, dt, flip,
                     k, tau, case_out, status_out, clamped, base, w, dw, Ft, Fo, U, s, V, e, tp)


@numba.njit(cache=True, parallel=True)
def _stress_kernel(F, mid, table, tau, ok):
    for p in prange(F.shape[0]):
        U = np.empty((3, 3))
        s = np.empty(3)
        V = np.empty((3, 3))
        t = np.empty((3, 3))
        ok[p] = stress_from_F(F[p], table[mid[p]], t, U, s, V)
        for r in range(3):
            for c in range(3):
                tau[p, r, c] = t[r, c] if ok[p] else 0.0


# ---------------------------------------------------------- public stages


def _check_domain(particles: ParticleSet, grid: MpmGrid):
    if len(particles) == 0:
        return
    g = (particles.position - grid.origin) / grid.spacing
    hi = np.asarray(grid.dims) - 1 - MARGIN
    bad = np.flatnonzero(((g < MARGIN) | (g > hi)).any(axis=1))
    if bad.size:
        raise OutOfDomainError(
            f"particle {bad[0]} at {particles.position[bad[0]]} is outside the grid margin",
            particle=int(bad[0]))


def bspline_weights(position, grid: MpmGrid):
    """Quadratic B-spline stencil of one particle.

    Returns ``(nodes, weights, gradients)`` for the 27 surrounding nodes.
    """
    x = np.asarray(position, dtype=float).reshape(1, 3)
    g = (x[0] - grid.origin) / grid.spacing
    hi = np.asarray(grid.dims) - 1 - MARGIN
    if np.any(g < MARGIN) or np.any(g > hi):
        raise OutOfDomainError(f"position {x[0]} is outside the grid margin")
    base = np.empty(3, dtype=np.int64)
    w = np.empty((3, 3))
    dw = np.empty((3, 3))
    _stencil(x[0], grid.origin, 1.0 / grid.spacing, base, w, dw)
    nodes, weights, grads = [], [], []
    for a in range(3):
        for b in range(3):
            for c in range(3):
                nodes.append(base + (a, b, c))
                weights.append(w[0, a] * w[1, b] * w[2, c])
                grads.append((dw[0, a] * w[1, b] * w[2, c],
                              w[0, a] * dw[1, b] * w[2, c],
                              w[0, a] * w[1, b] * dw[2, c]))
    return np.array(nodes), np.array(weights), np.array(grads)


def p2g(particles: ParticleSet, grid: MpmGrid, deterministic: bool = True) -> MpmGrid:
    """Accumulate nodal mass and momentum; set nodal velocity where m_i > 0."""
    _check_domain(particles, grid)
    if grid.mass_quantum == 0.0 or not np.any(grid.mass_units):
        grid.mass_quantum = mass_quantum(particles.mass)
    munits = quantize_masses(particles.mass, grid.mass_quantum)
    dummy = np.zeros((0, 3, 3))
    _scatter(particles, grid, dummy, munits, momentum=True, stress=False,
             deterministic=deterministic)
    _finish_p2g(grid)
    return grid


def compute_stresses(particles: ParticleSet, materials: Sequence[NaccMaterial]) -> np.ndarray:
    table = material_table(materials)
    tau = np.zeros((len(particles), 3, 3))
    ok = np.ones(len(particles), dtype=np.bool_)
    if len(particles):
        _stress_kernel(particles.F, particles.material_id, table, tau, ok)
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        raise DegenerateGradientError(f"particle {i}: det F <= 0", particle=i)
    return tau


def grid_forces(particles: ParticleSet, materials: Sequence[NaccMaterial], grid: MpmGrid,
                gravity=(0.0, 0.0, 0.0), deterministic: bool = True,
                tau: Optional[np.ndarray] = None) -> MpmGrid:
    """f_i = -sum_p V_p^0 tau_p grad N_ip + m_i g."""
    _check_domain(particles, grid)
    if tau is None:
        tau = compute_stresses(particles, materials)
    munits = np.zeros(len(particles), dtype=np.int64)
    _scatter(particles, grid, tau, munits, momentum=False, stress=True,
             deterministic=deterministic)
    grid.force += grid.mass[..., None] * np.asarray(gravity, dtype=float)
    return grid


def grid_update(grid: MpmGrid, dt: float, boundaries: Sequence = (), time: float = 0.0) -> MpmGrid:
    """Forward-Euler nodal velocity update followed by boundary response.

    The pre-update velocity is kept in ``grid.velocity_old`` for FLIP.
    """
    planes, boxes = pack_boundaries(boundaries, time)
    _grid_update_kernel(grid.mass, grid.velocity, grid.velocity_old, grid.force, float(dt),
                        grid.origin, grid.spacing, planes, boxes)
    return grid


@dataclass
class G2PResult:
    cases: np.ndarray
    status: np.ndarray
    clamped: np.ndarray
    tau: np.ndarray

    @property
    def plastic_count(self) -> int:
        return int(np.count_nonzero(self.cases))


def _raise_status(status, cases, substep=None):
    bad = np.flatnonzero(status != STATUS_OK)
    if not bad.size:
        return
    i = int(bad[0])
    where = f"particle {i}" + (f", substep {substep}" if substep is not None else "")
    if status[i] == STATUS_DEGENERATE:
        raise DegenerateGradientError(f"{where}: degenerate deformation gradient", particle=i)
    raise PressureOverflowError(f"{where}: elastic volume ratio undefined (p > kappa/2)",
                                particle=i)


def _run_g2p(grid, particles, table, dt, flip_ratio, k, tau, deterministic):
    n = len(particles)
    cases = np.zeros(n, dtype=np.int8)
    status = np.zeros(n, dtype=np.int8)
    clamped = np.zeros(n, dtype=np.bool_)
    args = (particles.position, particles.velocity, particles.F, particles.alpha,
            particles.material_id, table, grid.velocity, grid.velocity_old, grid.origin,
            1.0 / grid.spacing, np.asarray(grid.dims, dtype=np.int64), float(dt),
            float(flip_ratio), float(k), tau, cases, status, clamped)
    if n:
        if deterministic:
            _g2p_serial(*args)
        else:
            _g2p_parallel(*args, 256)
    return G2PResult(cases, status, clamped, tau)


def g2p(grid: MpmGrid, particles: ParticleSet, materials: Sequence[NaccMaterial], dt: float,
        flip_ratio: float = DEFAULT_FLIP, k: float = DEFAULT_K,
        deterministic: bool = True) -> G2PResult:
    """Gather velocity and velocity gradient, update F (with return mapping) and x.

    Raises on degenerate gradients or pressure overflow, naming the particle.
    """
    tau = np.zeros((len(particles), 3, 3))
    res = _run_g2p(grid, particles, material_table(materials), dt, flip_ratio, k, tau,
                   deterministic)
    _raise_status(res.status, res.cases)
    return res


# ------------------------------------------------------------------ engine


@dataclass
class StepStats:
    substep: int
    time: float
    dt: float
    total_mass: float
    total_momentum: np.ndarray
    max_speed: float
    plastic_count: int
    cfl: float
    clamped: int
    cfl_warning: bool
    halved: bool = False

    CSV_HEADER = ("substep,time,dt,total_mass,momentum_x,momentum_y,momentum_z,"
                  "max_speed,plastic_count,cfl,clamped,cfl_warning,halved")

    def csv_row(self) -> str:
        m = [float(c) for c in self.total_momentum]
        return (f"{self.substep},{float(self.time)!r},{float(self.dt)!r},{float(self.total_mass)!r},"
                f"{m[0]!r},{m[1]!r},{m[2]!r},{float(self.max_speed)!r},{self.plastic_count},"
                f"{float(self.cfl)!r},{self.clamped},{int(self.cfl_warning)},{int(self.halved)}")


class Engine:
    """Owns particles, materials, grid and boundaries; advances substeps.

    Particle masses are snapped to the fixed-point mass unit on construction
    (relative change below 2**-43).
    """

    def __init__(self, particles: ParticleSet, materials: Sequence[NaccMaterial], grid: MpmGrid,
                 *, gravity=(0.0, 0.0, -9.81), boundaries: Sequence = (),
                 flip_ratio: float = DEFAULT_FLIP, k: float = DEFAULT_K,
                 deterministic: bool = True, threads: Optional[int] = None):
        self.particles = particles
        self.materials = list(materials)
        self.table = material_table(self.materials)
        self.grid = grid
        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        self.boundaries = list(boundaries)
        self.flip_ratio = float(flip_ratio)
        self.k = float(k)
        self.deterministic = bool(deterministic)
        if threads is not None:
            numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
        self.time = 0.0
        self.substep = 0
        self.clamped_total = 0
        ids = particles.material_id
        if len(particles) and (ids.min() < 0 or ids.max() >= len(self.materials)):
            raise ValueError("material_id does not index the material table")
        grid.mass_quantum = mass_quantum(particles.mass)
        self._munits = quantize_masses(particles.mass, grid.mass_quantum)
        particles.mass[:] = self._munits * grid.mass_quantum
        self._clamp_initial()
        self.tau = compute_stresses(particles, self.materials)

    def _clamp_initial(self):
        ps, grid = self.particles, self.grid
        if not len(ps):
            return
        g = (ps.position - grid.origin) / grid.spacing
        hi = np.asarray(grid.dims) - 1 - MARGIN
        out = ((g < MARGIN) | (g > hi)).any(axis=1)
        if out.any():
            g = np.clip(g, MARGIN, hi)
            ps.position[out] = (grid.origin + g * grid.spacing)[out]
            ps.velocity[out] = 0.0
            self.clamped_total += int(out.sum())
            log.warning("%d particles clamped into the grid margin", int(out.sum()))

    def _substep(self, dt: float):
        ps, grid = self.particles, self.grid
        grid.clear()
        if len(ps):
            _scatter(ps, grid, self.tau, self._munits, momentum=True, stress=True,
                     deterministic=self.deterministic)
        _finish_p2g(grid)
        total_mass = float(grid.mass_units.sum()) * grid.mass_quantum
        momentum = grid.total_momentum()
        grid.force += grid.mass[..., None] * self.gravity
        grid_update(grid, dt, self.boundaries, self.time)
        res = _run_g2p(grid, ps, self.table, dt, self.flip_ratio, self.k, self.tau,
                       self.deterministic)
        return res, total_mass, momentum

    def step(self, dt: float) -> StepStats:
        """One substep; on pressure overflow retries once as two half steps."""
        ps = self.particles
        saved = (ps.position.copy(), ps.velocity.copy(), ps.F.copy(), ps.alpha.copy(),
                 self.tau.copy())
        res, total_mass, momentum = self._substep(dt)
        halved = False
        plastic = res.plastic_count
        clamped = int(res.clamped.sum())
        if np.any(res.status == STATUS_DEGENERATE):
            _raise_status(res.status, res.cases, self.substep)
        if np.any(res.status == STATUS_OVERFLOW):
            log.warning("pressure overflow at substep %d; retrying with dt/2", self.substep)
            ps.position[:], ps.velocity[:], ps.F[:], ps.alpha[:], self.tau[:] = saved
            halved = True
            plastic = 0
            clamped = 0
            t0 = self.time
            for half in range(2):
                res, total_mass, momentum = self._substep(0.5 * dt)
                _raise_status(res.status, res.cases, self.substep)
                plastic = max(plastic, res.plastic_count)
                clamped += int(res.clamped.sum())
                self.time = t0 + 0.5 * dt * (half + 1)
            self.time = t0
        self.clamped_total += clamped
        speed = float(np.sqrt((ps.velocity ** 2).sum(axis=1)).max()) if len(ps) else 0.0
        cfl = speed * dt / self.grid.spacing
        stats = StepStats(self.substep, self.time + dt, dt, total_mass, momentum, speed,
                          plastic, cfl, clamped, cfl > 1.0, halved)
        if stats.cfl_warning:
            log.warning("CFL number %.3f > 1 at substep %d", cfl, self.substep)
        self.time += dt
        self.substep += 1
        return stats

    def run(self, n: int, dt: float) -> list:
        return [self.step(dt) for _ in range(n)]
