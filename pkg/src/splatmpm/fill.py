"""Interior filling of surface splat clouds.

A Gaussian-weighted opacity density is evaluated on a cubic n^3 lattice; cells
at or above a threshold form the boundary, a 6-connected flood fill from the
lattice hull marks the exterior, and whatever is left is the enclosed
interior.  Interior cells are then seeded with small spherical Gaussians whose
radius matches their share of the cell volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DegenerateCovarianceError
from .model import SH_C0, NaccMaterial, ParticleSet, sh_coeff_count

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2
DEFAULT_TAU_D = 0.2
DEFAULT_SUPPORT = 3.0
_PAD_CELLS = 2


@dataclass
class DensityField:
    origin: np.ndarray  # corner of cell (0, 0, 0)
    spacing: float
    dims: tuple
    density: np.ndarray
    classes: Optional[np.ndarray] = None
    tau_d: Optional[float] = None

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    def cell_centers(self, index=None) -> np.ndarray:
        if index is None:
            index = np.indices(self.dims).reshape(3, -1).T
        return self.origin + (np.asarray(index) + 0.5) * self.spacing

    def sample(self, points) -> np.ndarray:
        """Nearest-cell density lookup; zero outside the lattice."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        idx = np.floor((pts - self.origin) / self.spacing).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)
        out = np.zeros(len(pts))
        i = idx[inside]
        out[inside] = self.density[i[:, 0], i[:, 1], i[:, 2]]
        return out

    def count(self, cls: int) -> int:
        return int(np.count_nonzero(self.classes == cls))


def _lattice(centers, covs, n):
    if len(centers):
        lo = centers.min(axis=0)
        hi = centers.max(axis=0)
        extent = float((hi - lo).max())
        mid = 0.5 * (lo + hi)
        if extent <= 0:
            extent = 6.0 * math.sqrt(max(float(np.linalg.eigvalsh(covs).max()), 1e-30))
    else:
        mid, extent = np.zeros(3), 1.0
    h = extent / (n - 2 * _PAD_CELLS)
    origin = mid - 0.5 * n * h
    return origin, h


@numba.njit(cache=True)
def _accumulate(centers, inv_covs, radii, weights, origin, h, mult2, density):
    nx, ny, nz = density.shape
    for p in range(centers.shape[0]):
        r = radii[p]
        lo = np.empty(3, dtype=np.int64)
        hi = np.empty(3, dtype=np.int64)
        dims = (nx, ny, nz)
        for a in range(3):
            lo[a] = max(0, int(math.ceil((centers[p, a] - r - origin[a]) / h - 0.5)))
            hi[a] = min(dims[a] - 1, int(math.floor((centers[p, a] + r - origin[a]) / h - 0.5)))
        A = inv_covs[p]
        for i in range(lo[0], hi[0] + 1):
            dx = origin[0] + (i + 0.5) * h - centers[p, 0]
            for j in range(lo[1], hi[1] + 1):
                dy = origin[1] + (j + 0.5) * h - centers[p, 1]
                for k in range(lo[2], hi[2] + 1):
                    dz = origin[2] + (k + 0.5) * h - centers[p, 2]
                    m2 = (A[0, 0] * dx * dx + A[1, 1] * dy * dy + A[2, 2] * dz * dz
                          + 2.0 * (A[0, 1] * dx * dy + A[0, 2] * dx * dz + A[1, 2] * dy * dz))
                    if m2 <= mult2:
                        density[i, j, k] += weights[p] * math.exp(-0.5 * m2)


def _inverse_covariances(covs):
    covs = np.asarray(covs, dtype=float).reshape(-1, 3, 3)
    if not len(covs):
        return covs.copy(), np.zeros(0)
    sym = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    finite = np.isfinite(sym).all(axis=(1, 2))
    eig = np.full((len(covs), 3), -1.0)
    eig[finite] = np.linalg.eigvalsh(sym[finite])
    bad = np.flatnonzero(~(eig[:, 0] > 1e-300 * np.maximum(eig[:, 2], 1e-300)) | ~(eig[:, 0] > 0))
    if bad.size:
        raise DegenerateCovarianceError(f"covariance of splat {bad[0]} is not invertible",
                                        particle=int(bad[0]))
    return np.linalg.inv(sym), eig[:, 2]


def density_field(splats: ParticleSet, n: int, support_radius_mult: float = DEFAULT_SUPPORT,
                  origin=None, spacing=None, deformed: bool = False) -> DensityField:
    """Opacity-weighted Gaussian density at the centers of an n^3 lattice.

    The lattice is a cube around the splat centers with two spare cells per
    side unless ``origin``/``spacing`` are given.  Each Gaussian contributes
    only within ``support_radius_mult`` Mahalanobis units.  The rest
    covariances are used unless ``deformed`` asks for the current ones.
    """
    centers = np.ascontiguousarray(splats.position, dtype=float)
    covs = splats.dynamic_cov if deformed else splats.static_cov
    inv, lmax = _inverse_covariances(covs)
    if origin is None or spacing is None:
        origin, spacing = _lattice(centers, covs, n)
    origin = np.asarray(origin, dtype=float)
    density = np.zeros((n, n, n))
    if len(centers):
        radii = support_radius_mult * np.sqrt(lmax)
        _accumulate(centers, np.ascontiguousarray(inv), radii,
                    np.ascontiguousarray(splats.opacity, dtype=float), origin, float(spacing),
                    float(support_radius_mult) ** 2, density)
    return DensityField(origin, float(spacing), (n, n, n), density)


def classify(field: DensityField, tau_d: float = DEFAULT_TAU_D) -> DensityField:
    """Label cells Boundary (d >= tau_d), Exterior (reachable from the hull), Interior."""
    boundary = field.density >= tau_d
    labels, _ = ndimage.label(~boundary)  # default structure is 6-connected
    hull = np.zeros_like(boundary)
    hull[[0, -1], :, :] = True
    hull[:, [0, -1], :] = True
    hull[:, :, [0, -1]] = True
    outside = np.unique(labels[hull & ~boundary])
    exterior = np.isin(labels, outside[outside > 0])
    classes = np.full(field.dims, INTERIOR, dtype=np.int8)
    classes[boundary] = BOUNDARY
    classes[exterior] = EXTERIOR
    return DensityField(field.origin, field.spacing, field.dims, field.density, classes, tau_d)


def sh0_init(color) -> np.ndarray:
    """Degree-0 SH coefficient reproducing ``color`` (RGB in [0, 1])."""
    c = np.asarray(color, dtype=float)
    if np.any(~np.isfinite(c)) or np.any(c < 0) or np.any(c > 1):
        raise ValueError("color components must lie in [0, 1]")
    return (c - 0.5) / SH_C0


def sh0_to_color(sh0) -> np.ndarray:
    return SH_C0 * np.asarray(sh0, dtype=float) + 0.5


# ------------------------------------------------------------------- rules


ColorRule = Callable[[np.ndarray], np.ndarray]


def uniform_color(color) -> ColorRule:
    c = np.asarray(color, dtype=float)

    def rule(points):
        return np.broadcast_to(c, (len(points), 3)).copy()
    return rule


def radial_color(center, bands: Sequence) -> ColorRule:
    """``bands`` is a list of ``(outer_radius, rgb)`` in increasing radius."""
    center = np.asarray(center, dtype=float)
    radii = np.array([b[0] for b in bands], dtype=float)
    colors = np.array([b[1] for b in bands], dtype=float)

    def rule(points):
        r = np.linalg.norm(np.asarray(points) - center, axis=1)
        idx = np.minimum(np.searchsorted(radii, r, side="left"), len(radii) - 1)
        return colors[idx]
    return rule


def nearest_surface_color(surface: ParticleSet) -> ColorRule:
    tree = cKDTree(surface.position)
    colors = np.clip(surface.base_colors(), 0.0, 1.0)

    def rule(points):
        _, idx = tree.query(points)
        return colors[idx]
    return rule


def color_rule_from_config(cfg: dict, surface: Optional[ParticleSet] = None) -> ColorRule:
    kind = cfg.get("type", "uniform")
    if kind == "uniform":
        return uniform_color(cfg.get("color", [0.5, 0.5, 0.5]))
    if kind == "radial":
        return radial_color(cfg["center"], [(b["radius"], b["color"]) for b in cfg["bands"]])
    if kind == "nearest_surface":
        if surface is None or not len(surface):
            raise ValueError("nearest_surface color rule needs surface splats")
        return nearest_surface_color(surface)
    raise ValueError(f"unknown color rule {kind!r}")


@dataclass
class ColorBand:
    """Axis-aligned RGB box mapped to a material id (bounds inclusive)."""

    material: int
    lo: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hi: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float).reshape(3)
        self.hi = np.asarray(self.hi, dtype=float).reshape(3)

    def matches(self, colors) -> np.ndarray:
        c = np.asarray(colors, dtype=float)
        return np.all((c >= self.lo) & (c <= self.hi), axis=-1)


def assign_materials_by_color(particles: ParticleSet, color_bands: Sequence[ColorBand],
                              default: int = 0) -> ParticleSet:
    """Set ``material_id`` from the first band containing each base color."""
    colors = particles.base_colors()
    ids = np.full(len(particles), int(default), dtype=np.int32)
    unset = np.ones(len(particles), dtype=bool)
    for band in color_bands:
        hit = unset & band.matches(colors)
        ids[hit] = band.material
        unset &= ~hit
    particles.material_id[:] = ids
    return particles


def watermelon_bands(rind: int = 0, flesh: int = 1, seed: int = 2) -> list[ColorBand]:
    """Dark seeds, red flesh, green rind."""
    return [
        ColorBand(seed, (0.0, 0.0, 0.0), (0.25, 0.25, 0.25)),
        ColorBand(flesh, (0.5, 0.0, 0.0), (1.0, 0.45, 0.45)),
        ColorBand(rind, (0.0, 0.3, 0.0), (0.45, 1.0, 0.6)),
    ]


# ----------------------------------------------------------------- seeding


def seed_interior(field: DensityField, particles_per_cell: int,
                  color_rule: Optional[ColorRule] = None,
                  material_rule=None, seed: int = 0, sh_degree: int = 0,
                  materials: Optional[Sequence[NaccMaterial]] = None) -> ParticleSet:
    """Jittered-stratified particles in every Interior cell.

    Each particle gets volume ``cell_volume / particles_per_cell`` and a
    spherical covariance ``r^2 I`` with ``r = (3V / 4 pi)^(1/3)``.
    ``material_rule`` is an int, or a callable ``(points, colors) -> ids``.
    With ``materials`` the mass is ``density * V``; otherwise mass = V.
    """
    if particles_per_cell < 1:
        raise ValueError("particles_per_cell must be >= 1")
    if field.classes is None:
        raise ValueError("field must be classified first")
    cells = np.argwhere(field.classes == INTERIOR)
    n_cells = len(cells)
    ppc = int(particles_per_cell)
    rng = np.random.default_rng(seed)
    m = math.ceil(round(ppc ** (1.0 / 3.0), 9))
    strata = np.indices((m, m, m)).reshape(3, -1).T
    if ppc == m ** 3:
        pick = np.broadcast_to(np.arange(m ** 3), (n_cells, ppc))
    else:
        pick = rng.permuted(np.broadcast_to(np.arange(m ** 3), (n_cells, m ** 3)), axis=1)[:, :ppc]
    jitter = rng.uniform(1e-9, 1.0 - 1e-9, size=(n_cells, ppc, 3))
    local = (strata[pick] + jitter) / m
    h = field.spacing
    pos = (field.origin + (cells[:, None, :] + local) * h).reshape(-1, 3)

    V = field.cell_volume / ppc
    r = (3.0 * V / (4.0 * math.pi)) ** (1.0 / 3.0)
    ps = ParticleSet.from_positions(pos, V, cov=r * r * np.eye(3), sh_degree=sh_degree)
    colors = uniform_color((0.5, 0.5, 0.5))(pos) if color_rule is None else color_rule(pos)
    ps.sh[:, 0, :] = sh0_init(colors)
    if material_rule is None:
        ps.material_id[:] = 0
    elif callable(material_rule):
        ps.material_id[:] = material_rule(pos, colors)
    else:
        ps.material_id[:] = int(material_rule)
    ps.opacity[:] = 1.0
    if materials is not None:
        ps.assign_mass(materials)
        alpha0 = np.array([mt.alpha0 for mt in materials])
        ps.alpha[:] = alpha0[ps.material_id]
    else:
        ps.mass[:] = V
    return ps


def fill(splats: ParticleSet, n: int, tau_d: float = DEFAULT_TAU_D, particles_per_cell: int = 8,
         color_rule=None, material_rule=None, seed: int = 0,
         support_radius_mult: float = DEFAULT_SUPPORT, materials=None):
    """Density field -> classification -> seeding.  Returns ``(field, interior)``."""
    field_ = classify(density_field(splats, n, support_radius_mult), tau_d)
    interior = seed_interior(field_, particles_per_cell, color_rule, material_rule, seed,
                             sh_degree=splats.sh_degree if len(splats) else 0,
                             materials=materials)
    return field_, interior
