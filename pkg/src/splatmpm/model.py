"""Shared domain types: particles, materials, the background grid, scene config.

Particles are stored structure-of-arrays in :class:`ParticleSet` so that the
numba kernels can consume the arrays directly; :class:`GaussianParticle` is a
per-particle value view used for construction, inspection and tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

MAX_SH_DEGREE = 3
SH_C0 = 0.28209479177387814  # 1 / (2 sqrt(pi))


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


def sh_degree_of(count: int) -> int:
    degree = int(round(np.sqrt(count))) - 1
    if sh_coeff_count(degree) != count:
        raise ValueError(f"{count} is not a valid SH coefficient count")
    return degree


class ElasticModel(enum.IntEnum):
    STVK_HENCKY = 0
    NEO_HOOKEAN = 1

    @classmethod
    def parse(cls, value) -> "ElasticModel":
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for member in cls:
            if member.name.replace("_", "").lower() == key:
                return member
        raise ValueError(f"unknown elastic model {value!r}")


@dataclass(frozen=True)
class NaccMaterial:
    """Elastic moduli plus the non-associated Cam-clay fracture parameters."""

    youngs_modulus: float
    poisson_ratio: float
    density: float
    beta: float = 1.0
    alpha0: float = -0.04
    xi: float = 2.0
    slope_m: float = 2.36
    elastic_model: ElasticModel = ElasticModel.STVK_HENCKY
    name: str = ""

    @property
    def mu(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lam(self) -> float:
        nu = self.poisson_ratio
        return self.youngs_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def kappa(self) -> float:
        return self.youngs_modulus / (3.0 * (1.0 - 2.0 * self.poisson_ratio))

    def violations(self) -> list[str]:
        out = []
        if not self.youngs_modulus > 0:
            out.append("youngs_modulus must be > 0")
        if not 0.0 < self.poisson_ratio < 0.5:
            out.append("poisson_ratio must lie in (0, 0.5)")
        if not self.density > 0:
            out.append("density must be > 0")
        if not self.beta >= 0:
            out.append("beta must be >= 0")
        if not self.xi > 0:
            out.append("xi must be > 0")
        if not self.slope_m > 0:
            out.append("slope_m must be > 0")
        if not out:
            for name in ("mu", "lam", "kappa"):
                v = getattr(self, name)
                if not (np.isfinite(v) and v > 0):
                    out.append(f"derived {name} is not finite and positive")
        return out

    def with_(self, **changes) -> "NaccMaterial":
        return replace(self, **changes)


# column layout of the dense material table consumed by the kernels
MAT_MU, MAT_LAM, MAT_KAPPA, MAT_BETA, MAT_XI, MAT_M, MAT_MODEL, MAT_DENSITY = range(8)
MAT_COLUMNS = 8


def material_table(materials: Sequence[NaccMaterial]) -> np.ndarray:
    table = np.zeros((len(materials), MAT_COLUMNS))
    for i, m in enumerate(materials):
        table[i, MAT_MU] = m.mu
        table[i, MAT_LAM] = m.lam
        table[i, MAT_KAPPA] = m.kappa
        table[i, MAT_BETA] = m.beta
        table[i, MAT_XI] = m.xi
        table[i, MAT_M] = m.slope_m
        table[i, MAT_MODEL] = int(m.elastic_model)
        table[i, MAT_DENSITY] = m.density
    return table


class YieldPoint(NamedTuple):
    """A point of the (p, q) plane: pressure-like p and shear measure q >= 0."""

    p: float
    q: float


@dataclass
class GaussianParticle:
    mass: float
    initial_volume: float
    ref_position: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    def_grad_elastic: np.ndarray
    static_cov: np.ndarray
    dynamic_cov: np.ndarray
    opacity: float
    sh_coeffs: np.ndarray  # (K, 3): coefficient-major, RGB last
    alpha: float
    material_id: int


@dataclass
class ParticleSet:
    """Structure-of-arrays storage for N Gaussian particles."""

    mass: np.ndarray
    volume: np.ndarray
    ref_position: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    F: np.ndarray
    static_cov: np.ndarray
    dynamic_cov: np.ndarray
    opacity: np.ndarray
    sh: np.ndarray
    alpha: np.ndarray
    material_id: np.ndarray

    @classmethod
    def empty(cls, n: int = 0, sh_degree: int = 0) -> "ParticleSet":
        eye = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
        return cls(
            mass=np.zeros(n),
            volume=np.zeros(n),
            ref_position=np.zeros((n, 3)),
            position=np.zeros((n, 3)),
            velocity=np.zeros((n, 3)),
            F=eye.copy(),
            static_cov=eye.copy(),
            dynamic_cov=eye.copy(),
            opacity=np.ones(n),
            sh=np.zeros((n, sh_coeff_count(sh_degree), 3)),
            alpha=np.zeros(n),
            material_id=np.zeros(n, dtype=np.int32),
        )

    @classmethod
    def from_positions(cls, positions, volume, cov=None, sh_degree=0) -> "ParticleSet":
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        ps = cls.empty(len(positions), sh_degree)
        ps.position[:] = positions
        ps.ref_position[:] = positions
        ps.volume[:] = volume
        if cov is not None:
            ps.static_cov[:] = cov
            ps.dynamic_cov[:] = cov
        return ps

    @classmethod
    def from_particles(cls, particles: Sequence[GaussianParticle]) -> "ParticleSet":
        if not particles:
            return cls.empty(0)
        k = max(np.asarray(p.sh_coeffs).shape[0] for p in particles)
        ps = cls.empty(len(particles), sh_degree_of(k))
        for i, p in enumerate(particles):
            ps.mass[i] = p.mass
            ps.volume[i] = p.initial_volume
            ps.ref_position[i] = p.ref_position
            ps.position[i] = p.position
            ps.velocity[i] = p.velocity
            ps.F[i] = p.def_grad_elastic
            ps.static_cov[i] = p.static_cov
            ps.dynamic_cov[i] = p.dynamic_cov
            ps.opacity[i] = p.opacity
            sh = np.asarray(p.sh_coeffs, dtype=float)
            ps.sh[i, : sh.shape[0]] = sh
            ps.alpha[i] = p.alpha
            ps.material_id[i] = p.material_id
        return ps

    def __len__(self) -> int:
        return self.position.shape[0]

    @property
    def sh_degree(self) -> int:
        return sh_degree_of(self.sh.shape[1])

    def particle(self, i: int) -> GaussianParticle:
        return GaussianParticle(
            mass=float(self.mass[i]),
            initial_volume=float(self.volume[i]),
            ref_position=self.ref_position[i].copy(),
            position=self.position[i].copy(),
            velocity=self.velocity[i].copy(),
            def_grad_elastic=self.F[i].copy(),
            static_cov=self.static_cov[i].copy(),
            dynamic_cov=self.dynamic_cov[i].copy(),
            opacity=float(self.opacity[i]),
            sh_coeffs=self.sh[i].copy(),
            alpha=float(self.alpha[i]),
            material_id=int(self.material_id[i]),
        )

    def copy(self) -> "ParticleSet":
        return ParticleSet(**{k: v.copy() for k, v in self.__dict__.items()})

    def subset(self, index) -> "ParticleSet":
        return ParticleSet(**{k: v[index].copy() for k, v in self.__dict__.items()})

    def with_sh_degree(self, degree: int) -> "ParticleSet":
        out = self.copy()
        k = sh_coeff_count(degree)
        sh = np.zeros((len(self), k, 3))
        keep = min(k, self.sh.shape[1])
        sh[:, :keep] = self.sh[:, :keep]
        out.sh = sh
        return out

    @staticmethod
    def concat(sets: Sequence["ParticleSet"]) -> "ParticleSet":
        sets = [s for s in sets if s is not None]
        if not sets:
            return ParticleSet.empty(0)
        degree = max(s.sh_degree for s in sets)
        sets = [s.with_sh_degree(degree) for s in sets]
        return ParticleSet(**{
            k: np.concatenate([getattr(s, k) for s in sets]) for k in sets[0].__dict__
        })

    def base_colors(self) -> np.ndarray:
        """RGB encoded by the degree-0 SH coefficient."""
        return SH_C0 * self.sh[:, 0, :] + 0.5

    def assign_mass(self, materials: Sequence[NaccMaterial]) -> None:
        rho = np.array([m.density for m in materials])
        self.mass[:] = rho[self.material_id] * self.volume

    def reset_physics(self, materials: Sequence[NaccMaterial]) -> None:
        """Rest state at the start of a run: F = I, alpha = alpha0, x = X."""
        self.F[:] = np.eye(3)
        self.dynamic_cov[:] = self.static_cov
        alpha0 = np.array([m.alpha0 for m in materials])
        self.alpha[:] = alpha0[self.material_id]
        self.ref_position[:] = self.position
        self.assign_mass(materials)


class MpmGrid:
    """Background Eulerian grid of nodal mass, momentum, velocity and force.

    Node ``(i, j, k)`` sits at ``origin + spacing * (i, j, k)``.
    """

    def __init__(self, origin, spacing: float, dims):
        self.origin = np.asarray(origin, dtype=float).reshape(3).copy()
        self.spacing = float(spacing)
        self.dims = tuple(int(d) for d in dims)
        if self.spacing <= 0:
            raise ValueError("grid spacing must be > 0")
        if min(self.dims) < 5:
            raise ValueError("grid needs at least 5 nodes per axis")
        shape = self.dims
        self.mass = np.zeros(shape)
        self.momentum = np.zeros(shape + (3,))
        self.velocity = np.zeros(shape + (3,))
        self.velocity_old = np.zeros(shape + (3,))
        self.force = np.zeros(shape + (3,))
        # fixed-point nodal mass: mass = mass_units * mass_quantum
        self.mass_units = np.zeros(shape, dtype=np.int64)
        self.mass_quantum = 0.0

    @classmethod
    def around(cls, lo, hi, spacing: float, pad: int = 3) -> "MpmGrid":
        """Grid covering the box [lo, hi] with ``pad`` spare cells per side."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        origin = lo - pad * spacing
        dims = np.ceil((hi - lo) / spacing).astype(int) + 2 * pad + 1
        return cls(origin, spacing, np.maximum(dims, 5))

    def clear(self) -> None:
        self.mass.fill(0.0)
        self.momentum.fill(0.0)
        self.velocity.fill(0.0)
        self.velocity_old.fill(0.0)
        self.force.fill(0.0)
        self.mass_units.fill(0)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.asarray(self.dims) - 1)

    def node_positions(self) -> np.ndarray:
        axes = [self.origin[a] + self.spacing * np.arange(self.dims[a]) for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def total_momentum(self) -> np.ndarray:
        return self.momentum.reshape(-1, 3).sum(axis=0)


# ---------------------------------------------------------------- scene config


@dataclass
class Light:
    position: np.ndarray
    color: np.ndarray
    intensity: float = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.color = np.asarray(self.color, dtype=float).reshape(3)
        if np.any(self.color < 0) or self.intensity < 0:
            raise ValueError("light color and intensity must be non-negative")

    @property
    def radiance(self) -> np.ndarray:
        return self.color * self.intensity


@dataclass
class Camera:
    """Orthographic camera looking along ``direction``."""

    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    extent: float = 1.0
    resolution: tuple = (256, 256)
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        self.direction = d / np.linalg.norm(d)
        self.up = np.asarray(self.up, dtype=float).reshape(3)
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.resolution = tuple(int(r) for r in self.resolution)

    def basis(self):
        f = self.direction
        r = np.cross(f, self.up)
        if np.linalg.norm(r) < 1e-12:
            r = np.cross(f, np.array([1.0, 0.0, 0.0]))
        r = r / np.linalg.norm(r)
        u = np.cross(r, f)
        return r, u, f

    @property
    def view_dir(self) -> np.ndarray:
        """Unit vector from a surface point towards the camera."""
        return -self.direction


@dataclass
class SplatSource:
    """One particle source of a scene.

    ``kind`` is ``"ply"`` (particles read from ``path``), ``"fill"`` (surface
    splats at ``path`` filled with interior particles) or ``"box"`` (a
    procedural jittered block).  ``params`` holds the kind-specific options.
    """

    kind: str = "ply"
    path: Optional[str] = None
    params: dict = field(default_factory=dict)
    material: Optional[int] = None  # explicit id; overrides file and bands
    color_bands: Optional[list] = None
    default_material: int = 0
    volume: Optional[float] = None  # per-particle volume, m^3
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class SceneConfig:
    sources: list
    materials: list
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    boundaries: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    frames: int = 1
    dt_frame: float = 1.0 / 50.0
    dt_step: float = 1e-4
    grid_spacing: float = 1e-2
    grid_lo: Optional[np.ndarray] = None
    grid_hi: Optional[np.ndarray] = None
    lights: list = field(default_factory=list)
    ambient: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))
    shininess: float = 32.0
    camera: Optional[Camera] = None
    visibility: str = "constant"
    k_neighbors: int = 16
    flip_ratio: float = 0.95
    return_map_k: float = 2.0
    seed: int = 0
    deterministic: bool = True
    preview: bool = False

    def substeps_per_frame(self) -> int:
        ratio = self.dt_frame / self.dt_step
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"dt_frame / dt_step = {ratio!r} is not a positive integer")
        return n


# ------------------------------------------------------------------ validation


def validate(particles: ParticleSet, materials: Sequence[NaccMaterial]) -> list[str]:
    """Report invariant violations as ``"particle i: message"`` strings.

    Never mutates its inputs; an empty list means the set is valid.
    """
    report: list[str] = []
    for j, m in enumerate(materials):
        report.extend(f"material {j}: {msg}" for msg in m.violations())

    n = len(particles)
    if n == 0:
        return report

    def flag(mask, message):
        for i in np.flatnonzero(mask):
            report.append(f"particle {i}: {message}")

    flag(~((particles.opacity >= 0) & (particles.opacity <= 1)), "opacity out of [0,1]")
    flag(~(particles.mass > 0), "mass must be > 0")
    flag(~(particles.volume > 0), "initial volume must be > 0")

    det = np.linalg.det(particles.F)
    flag(~(det > 0), "degenerate deformation gradient (det F <= 0)")

    A = particles.static_cov
    asym = np.abs(A - np.swapaxes(A, 1, 2)).max(axis=(1, 2))
    scale = np.abs(A).max(axis=(1, 2))
    sym_ok = asym <= 1e-12 * np.maximum(scale, 1e-300)
    flag(~sym_ok, "static covariance not symmetric")
    finite = np.isfinite(A).all(axis=(1, 2))
    eig = np.full((n, 3), -1.0)
    ok = finite & sym_ok
    if ok.any():
        eig[ok] = np.linalg.eigvalsh(A[ok])
    flag(ok & ~(eig.min(axis=1) > 0), "static covariance not positive definite")

    ids = particles.material_id
    flag((ids < 0) | (ids >= len(materials)), "material_id does not index the material table")

    for name in ("position", "velocity", "alpha", "sh"):
        arr = getattr(particles, name).reshape(n, -1)
        flag(~np.isfinite(arr).all(axis=1), f"non-finite {name}")
    return report
