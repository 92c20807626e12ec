"""Relighting of deformed splats: PCA normals and Blinn-Phong shading."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numba
import numpy as np
from scipy.spatial import cKDTree

from .errors import CoincidentLightError, InsufficientNeighborsError
from .fill import density_field
from .model import Camera, Light, ParticleSet

_TIE = 1e-12


def _lex_key(v):
    """Sign-normalized copy: first nonzero component made positive."""
    for c in v:
        if abs(c) > _TIE:
            return v if c > 0 else -v
    return v


def pca_normals(points, k: int = 16) -> np.ndarray:
    """Unit normals from the covariance of each point's k nearest neighbours.

    The normal is the eigenvector of the smallest eigenvalue.  It is flipped
    to point away from the cloud centroid; when that is ambiguous the first
    nonzero component is made positive.  Eigenvalue ties pick the
    lexicographically largest (sign-normalized) eigenvector.
    """
    pts = points.position if isinstance(points, ParticleSet) else np.asarray(points, dtype=float)
    pts = pts.reshape(-1, 3)
    n = len(pts)
    if k < 4:
        raise ValueError("k must be at least 4")
    if n < k + 1:
        raise InsufficientNeighborsError(f"need at least k+1={k + 1} points, have {n}")
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k + 1)  # the point itself plus k neighbours
    nb = pts[idx]
    d = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", d, d) / (k + 1)
    w, V = np.linalg.eigh(cov)
    normals = V[:, :, 0].copy()

    scale = np.maximum(w[:, 2], 1e-300)
    tied = np.flatnonzero(w[:, 1] - w[:, 0] <= _TIE * scale)
    for i in tied:
        cands = [_lex_key(V[i, :, j]) for j in range(3) if w[i, j] - w[i, 0] <= _TIE * scale[i]]
        normals[i] = max(cands, key=lambda v: tuple(v))

    out = pts - pts.mean(axis=0)
    dots = np.einsum("ni,ni->n", normals, out)
    ambiguous = np.abs(dots) <= _TIE * np.maximum(np.linalg.norm(out, axis=1), 1e-300)
    normals[(dots < 0) & ~ambiguous] *= -1.0
    for i in np.flatnonzero(ambiguous):
        normals[i] = _lex_key(normals[i])
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def blinn_phong_batch(base, normals, positions, view_dir, lights: Sequence[Light],
                      visibility=None, ambient=(0.0, 0.0, 0.0), shininess: float = 32.0):
    """Raw (unclamped) Blinn-Phong radiance for N points.

    ``visibility`` is ``(N, L)`` in [0, 1]; None means fully visible.
    ``view_dir`` points from the surface to the viewer, (3,) or (N, 3).
    """
    base = np.asarray(base, dtype=float).reshape(-1, 3)
    nrm = np.asarray(normals, dtype=float).reshape(-1, 3)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    v = np.broadcast_to(np.asarray(view_dir, dtype=float), pos.shape)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    out = base * np.asarray(ambient, dtype=float)
    for j, light in enumerate(lights):
        to_light = light.position - pos
        r = np.linalg.norm(to_light, axis=1)
        if np.any(r == 0):
            i = int(np.flatnonzero(r == 0)[0])
            raise CoincidentLightError(f"light {j} coincides with point {i}")
        l = to_light / r[:, None]
        h = l + v
        hn = np.linalg.norm(h, axis=1)
        h = np.divide(h, hn[:, None], out=np.zeros_like(h), where=hn[:, None] > 0)
        diff = np.maximum(0.0, np.einsum("ni,ni->n", nrm, l))
        spec = np.maximum(0.0, np.einsum("ni,ni->n", nrm, h)) ** shininess
        vis = 1.0 if visibility is None else np.asarray(visibility)[:, j]
        out = out + (vis / (r * r))[:, None] * light.radiance * base * (diff + spec)[:, None]
    return out


def blinn_phong(base_color, normal, position, view_dir, lights: Sequence[Light],
                visibility=None, ambient=(0.0, 0.0, 0.0), shininess: float = 32.0) -> np.ndarray:
    """Single-point form of :func:`blinn_phong_batch`."""
    vis = None if visibility is None else np.asarray(visibility, dtype=float).reshape(1, -1)
    return blinn_phong_batch(base_color, normal, position, view_dir, lights, vis,
                             ambient, shininess)[0]


@numba.njit(cache=True)
def _march(pos, start, light, density, origin, h, out):
    nx, ny, nz = density.shape
    for i in range(pos.shape[0]):
        d = light - pos[i]
        dist = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if dist == 0.0:
            out[i] = 1.0
            continue
        tau = 0.0
        t = start[i]
        while t < dist:
            inside = True
            idx = np.empty(3, dtype=np.int64)
            for a in range(3):
                x = pos[i, a] + d[a] * (t / dist)
                c = int(math.floor((x - origin[a]) / h))
                idx[a] = c
                if c < 0 or c >= density.shape[a]:
                    inside = False
            if inside:
                tau += density[idx[0], idx[1], idx[2]]
            t += h
        out[i] = math.exp(-tau)


def occlusion_visibility(particles: ParticleSet, lights: Sequence[Light], n: int = 64,
                         field=None) -> np.ndarray:
    """Transmittance exp(-sum d) along each particle-to-light ray, ``(N, L)``.

    Sampling starts outside the particle's own support (3 standard
    deviations, at least two cells) so a splat does not shadow itself.
    """
    if field is None:
        field = density_field(particles, n, deformed=True)
    pos = np.ascontiguousarray(particles.position, dtype=float)
    sigma = np.sqrt(np.maximum(np.linalg.eigvalsh(particles.dynamic_cov)[:, -1], 0.0))
    start = np.maximum(3.0 * sigma, 2.0 * field.spacing) if len(pos) else np.zeros(0)
    vis = np.ones((len(pos), len(lights)))
    tmp = np.empty(len(pos))
    for j, light in enumerate(lights):
        _march(pos, start, light.position.astype(float), field.density,
               field.origin.astype(float), float(field.spacing), tmp)
        vis[:, j] = tmp
    return vis


def shade_frame(particles: ParticleSet, lights: Sequence[Light], camera: Optional[Camera] = None,
                ambient=(1.0, 1.0, 1.0), shininess: float = 32.0, k: int = 16,
                visibility: str = "constant", field=None, normals=None) -> np.ndarray:
    """Per-particle shaded RGB (raw) for the current deformed state."""
    camera = camera or Camera()
    if normals is None:
        normals = pca_normals(particles.position, k)
    if visibility == "constant":
        vis = None
    elif visibility == "occlusion":
        vis = occlusion_visibility(particles, lights, field=field)
    else:
        raise ValueError(f"unknown visibility mode {visibility!r}")
    return blinn_phong_batch(particles.base_colors(), normals, particles.position,
                             camera.view_dir, lights, vis, ambient, shininess)
