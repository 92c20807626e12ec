"""Procedural particle sets used by demos, tests and ``box`` config sources."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fill import sh0_init
from .model import MpmGrid, ParticleSet


def _sphere_cov(volume):
    r = (3.0 * volume / (4.0 * math.pi)) ** (1.0 / 3.0)
    return r * r * np.eye(3)


def lattice_points(lo, hi, spacing, jitter=0.0, seed=0):
    """Cell centers of a regular lattice filling [lo, hi], optionally jittered."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    counts = np.maximum(np.rint((hi - lo) / spacing).astype(int), 1)
    axes = [lo[a] + spacing * (np.arange(counts[a]) + 0.5) for a in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    if jitter:
        rng = np.random.default_rng(seed)
        pts = pts + rng.uniform(-0.5, 0.5, pts.shape) * jitter * spacing
    return pts


def block(lo, hi, spacing, *, jitter=0.0, seed=0, color=(0.5, 0.5, 0.5), material=0,
          velocity=(0.0, 0.0, 0.0)) -> ParticleSet:
    """One particle per lattice cell; volume = spacing^3."""
    pts = lattice_points(lo, hi, spacing, jitter, seed)
    V = spacing ** 3
    ps = ParticleSet.from_positions(pts, V, cov=_sphere_cov(V))
    ps.sh[:, 0, :] = sh0_init(color)
    ps.material_id[:] = material
    ps.velocity[:] = velocity
    ps.mass[:] = V
    return ps


def notched_bar(length, height, depth, spacing, *, notch_depth, notch_width,
                notch_side="top", center=(0.0, 0.0, 0.0), jitter=0.0, seed=0,
                color=(0.5, 0.5, 0.5)) -> ParticleSet:
    """Bar along x with a rectangular notch cut across its middle."""
    c = np.asarray(center, dtype=float)
    half = 0.5 * np.array([length, depth, height])
    ps = block(c - half, c + half, spacing, jitter=jitter, seed=seed, color=color)
    x, z = ps.position[:, 0] - c[0], ps.position[:, 2] - c[2]
    in_slot = np.abs(x) < 0.5 * notch_width
    if notch_side == "top":
        cut = in_slot & (z > half[2] - notch_depth)
    else:
        cut = in_slot & (z < -half[2] + notch_depth)
    return ps.subset(~cut)


def banded_bar(ps: ParticleSet, center, axis=2, rind=0.2, seed_frac=0.04, seed=0,
               colors=((0.1, 0.6, 0.15), (0.85, 0.15, 0.15), (0.05, 0.05, 0.05))):
    """Color a bar like a watermelon slab: green outer rind, red flesh, dark seeds.

    ``rind`` is the fraction of each half-extent (perpendicular to x) taken by
    rind; ``seed_frac`` of the flesh particles become seeds, clustered in small
    blobs drawn with ``seed``.
    """
    ps = ps.copy()
    pos = ps.position - np.asarray(center, dtype=float)
    ext = np.abs(pos).max(axis=0)
    rel = np.abs(pos) / np.maximum(ext, 1e-300)
    outer = np.maximum(rel[:, 1], rel[:, 2]) > 1.0 - rind
    rgb = np.where(outer[:, None], colors[0], colors[1]).astype(float)
    flesh = np.flatnonzero(~outer)
    if flesh.size and seed_frac > 0:
        rng = np.random.default_rng(seed)
        n_blobs = max(1, int(round(seed_frac * flesh.size / 8)))
        centers = pos[rng.choice(flesh, size=n_blobs, replace=False)]
        d = np.linalg.norm(pos[flesh, None, :] - centers[None], axis=2).min(axis=1)
        target = int(round(seed_frac * flesh.size))
        chosen = flesh[np.argsort(d, kind="stable")[:target]]
        rgb[chosen] = colors[2]
    ps.sh[:, 0, :] = sh0_init(rgb)
    return ps


def sphere_shell(radius, n, *, thickness_ratio=0.1, seed=0, center=(0.0, 0.0, 0.0),
                 color=(0.5, 0.5, 0.5)) -> ParticleSet:
    """Surface splats on a sphere: flat Gaussians tangent to the surface.

    Points follow a Fibonacci lattice; the tangential standard deviation is
    the mean point spacing, the normal one ``thickness_ratio`` of it.
    """
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = math.pi * (1.0 + 5.0 ** 0.5) * i
    if seed:
        theta = theta + np.random.default_rng(seed).uniform(0, 2 * math.pi)
    nrm = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], -1)
    spacing = radius * math.sqrt(4.0 * math.pi / n)
    s_t, s_n = spacing, thickness_ratio * spacing
    cov = s_t ** 2 * np.eye(3) + (s_n ** 2 - s_t ** 2) * np.einsum("ni,nj->nij", nrm, nrm)
    ps = ParticleSet.from_positions(np.asarray(center) + radius * nrm, spacing ** 2 * s_n)
    ps.static_cov[:] = cov
    ps.dynamic_cov[:] = cov
    ps.sh[:, 0, :] = sh0_init(color)
    ps.mass[:] = ps.volume
    return ps


def plane_patch(size, n_side, *, z=0.0, seed=0) -> ParticleSet:
    """Jittered square patch of points in the plane z = const."""
    rng = np.random.default_rng(seed)
    g = (np.arange(n_side) + 0.5) / n_side - 0.5
    xy = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2) * size
    xy += rng.uniform(-0.25, 0.25, xy.shape) * size / n_side
    pts = np.c_[xy, np.full(len(xy), z)]
    h = size / n_side
    return ParticleSet.from_positions(pts, h ** 3, cov=(0.5 * h) ** 2 * np.eye(3))


@dataclass
class BarDrop:
    """A notched bar falling onto a narrow support, ready to hand to :class:`Engine`."""

    particles: ParticleSet
    materials: list
    grid: MpmGrid
    boundaries: list
    dt: float
    impact_speed: float

    @property
    def dx(self) -> float:
        return self.grid.spacing


def bar_drop(materials, *, length=0.02, height=0.004, depth=0.004, n_particles=20000,
             drop_height=0.5, support_height=0.01, notch_frac=0.4, jitter=0.3, seed=0,
             bands=None, cfl=0.3, g=9.81) -> BarDrop:
    """Notched bar hitting a slip support under its notch, after a free fall.

    The fall itself is skipped: the bar starts just above the support with
    the impact speed sqrt(2 g h).  The notch is on the top face, which is
    the side put in tension by bending over the support.  With ``bands``
    (a list of :class:`ColorBand`) the bar is colored like a watermelon
    slab and material ids follow the colors; otherwise every particle gets
    material 0.
    """
    from .boundary import BoundaryCondition
    from .fill import assign_materials_by_color

    hp = (length * height * depth / n_particles) ** (1.0 / 3.0)
    dx = 2.0 * hp
    center = (0.0, 0.0, support_height + 0.5 * height + 0.5 * dx)
    ps = notched_bar(length, height, depth, hp, notch_depth=notch_frac * height,
                     notch_width=4.0 * hp, center=center, jitter=jitter, seed=seed)
    if bands is not None:
        ps = banded_bar(ps, center, seed=seed)
        assign_materials_by_color(ps, bands, bands[1].material if len(bands) > 1 else 0)
    ps.reset_physics(materials)
    v0 = math.sqrt(2.0 * g * drop_height)
    ps.velocity[:] = (0.0, 0.0, -v0)
    grid = MpmGrid.around((-0.75 * length, -2.0 * depth, -4.0 * dx),
                          (0.75 * length, 2.0 * depth, support_height + 2.0 * height), dx)
    support = BoundaryCondition.box((-1.5 * dx, -depth, -1.0), (1.5 * dx, depth, support_height),
                                    "slip")
    ground = BoundaryCondition.plane((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), "slip")
    c = max(math.sqrt((m.lam + 2.0 * m.mu) / m.density) for m in materials)
    return BarDrop(ps, list(materials), grid, [support, ground], cfl * dx / (c + v0), v0)
