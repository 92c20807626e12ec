"""Scene configuration, particle loading, frame orchestration and previews."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import jsonschema
import numba
import numpy as np

from . import fill as fill_mod
from .boundary import BoundaryCondition, BoundaryMode, ScriptedObstacle
from .constitutive import fluid_params
from .engine import Engine, StepStats
from .errors import ConfigError, FrameAbort, SplatMPMError
from .evolution import evolve
from .model import (Camera, ElasticModel, Light, MpmGrid, NaccMaterial, ParticleSet,
                    SceneConfig, SplatSource)
from .ply import FrameSnapshot, export_frame, frame_filename, read_particles
from .presets import PRESETS
from .scenes import block
from .shading import blinn_phong_batch, occlusion_visibility, pca_normals

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_rgb = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 3,
        "maxItems": 3}
_pos = {"type": "number", "exclusiveMinimum": 0}

_boundary = {
    "type": "object",
    "required": ["shape"],
    "properties": {
        "shape": {"enum": ["plane", "box"]},
        "mode": {"enum": ["sticky", "slip"]},
        "point": _vec3, "normal": _vec3, "lo": _vec3, "hi": _vec3, "velocity": _vec3,
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"shape": {"const": "plane"}}},
         "then": {"required": ["point", "normal"]}},
        {"if": {"properties": {"shape": {"const": "box"}}},
         "then": {"required": ["lo", "hi"]}},
    ],
}

_material = {
    "type": "object",
    "properties": {
        "preset": {"enum": sorted(PRESETS)},
        "index": {"type": "integer", "minimum": 0},
        "name": {"type": "string"},
        "youngs_modulus": _pos,
        "poisson_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "density": _pos,
        "beta": {"type": "number", "minimum": 0},
        "alpha0": {"type": "number"},
        "xi": _pos,
        "slope_m": _pos,
        "elastic_model": {"enum": ["stvk_hencky", "neo_hookean"]},
        "fluid": {"type": "boolean"},
    },
    "additionalProperties": False,
    "anyOf": [{"required": ["preset"]},
              {"required": ["youngs_modulus", "poisson_ratio", "density"]}],
}

_band = {
    "type": "object",
    "required": ["material"],
    "properties": {"material": {"type": "integer", "minimum": 0}, "lo": _rgb, "hi": _rgb},
    "additionalProperties": False,
}

_color_rule = {
    "type": "object",
    "properties": {
        "type": {"enum": ["uniform", "radial", "nearest_surface"]},
        "color": _rgb,
        "center": _vec3,
        "bands": {"type": "array", "items": {
            "type": "object", "required": ["radius", "color"],
            "properties": {"radius": {"type": "number", "minimum": 0}, "color": _rgb}}},
    },
}

_source = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["ply", "fill", "box"]},
        "path": {"type": "string"},
        "material": {"type": "integer", "minimum": 0},
        "color_bands": {"oneOf": [{"type": "array", "items": _band},
                                  {"const": "watermelon"}]},
        "default_material": {"type": "integer", "minimum": 0},
        "volume": _pos,
        "offset": _vec3,
        "velocity": _vec3,
        # fill
        "n": {"type": "integer", "minimum": 8, "maximum": 1024},
        "tau_d": _pos,
        "particles_per_cell": {"type": "integer", "minimum": 1},
        "support_radius_mult": _pos,
        "color_rule": _color_rule,
        "include_surface": {"type": "boolean"},
        # box
        "lo": _vec3, "hi": _vec3, "spacing": _pos,
        "jitter": {"type": "number", "minimum": 0, "maximum": 1},
        "color": _rgb,
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "box"}}, "required": ["kind"]},
         "then": {"required": ["lo", "hi", "spacing"]},
         "else": {"required": ["path"]}},
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "splatmpm scene",
    "type": "object",
    "required": ["schema_version", "materials", "sources"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "materials": {"type": "array", "minItems": 1, "items": _material},
        "sources": {"type": "array", "items": _source},
        "gravity": _vec3,
        "boundaries": {"type": "array", "items": _boundary},
        "obstacles": {"type": "array", "items": {
            "type": "object",
            "required": ["boundary", "keyframes"],
            "properties": {
                "boundary": _boundary,
                "keyframes": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "required": ["time", "offset"],
                    "properties": {"time": {"type": "number"}, "offset": _vec3},
                    "additionalProperties": False}},
                "t_start": {"type": "number"},
                "t_end": {"type": "number"},
            },
            "additionalProperties": False}},
        "frames": {"type": "integer", "minimum": 0},
        "dt_frame": _pos,
        "dt_step": _pos,
        "grid": {"type": "object", "required": ["spacing"],
                 "properties": {"spacing": _pos, "lo": _vec3, "hi": _vec3},
                 "additionalProperties": False},
        "lights": {"type": "array", "items": {
            "type": "object", "required": ["position"],
            "properties": {"position": _vec3, "color": _rgb,
                           "intensity": {"type": "number", "minimum": 0}},
            "additionalProperties": False}},
        "ambient": _rgb,
        "shininess": _pos,
        "camera": {"type": "object", "properties": {
            "direction": _vec3, "up": _vec3, "center": _vec3, "extent": _pos,
            "resolution": {"type": "array", "items": {"type": "integer", "minimum": 1,
                                                      "maximum": 4096},
                           "minItems": 2, "maxItems": 2},
            "background": _rgb}, "additionalProperties": False},
        "visibility": {"enum": ["constant", "occlusion"]},
        "k_neighbors": {"type": "integer", "minimum": 4},
        "flip_ratio": {"type": "number", "minimum": 0, "maximum": 1},
        "return_map_k": _pos,
        "seed": {"type": "integer", "minimum": 0},
        "deterministic": {"type": "boolean"},
        "preview": {"type": "boolean"},
    },
    "additionalProperties": False,
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def _material_from(d: dict) -> NaccMaterial:
    d = dict(d)
    fluid = d.pop("fluid", False)
    if "preset" in d:
        row = PRESETS[d.pop("preset")]
        idx = d.pop("index", 0)
        if idx >= len(row.materials):
            raise ConfigError(f"preset {row.name!r} has {len(row.materials)} materials", "index")
        m = row.materials[idx]
        if "elastic_model" in d:
            d["elastic_model"] = ElasticModel.parse(d["elastic_model"])
        m = m.with_(**d) if d else m
    else:
        d.pop("index", None)
        if "elastic_model" in d:
            d["elastic_model"] = ElasticModel.parse(d["elastic_model"])
        m = NaccMaterial(**d)
    return fluid_params(m) if fluid else m


def _boundary_from(d: dict) -> BoundaryCondition:
    mode = BoundaryMode.parse(d.get("mode", "sticky"))
    vel = d.get("velocity", (0.0, 0.0, 0.0))
    if d["shape"] == "plane":
        n = np.asarray(d["normal"], dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("plane normal must be nonzero")
        return BoundaryCondition.plane(d["point"], n / norm, mode, vel)
    return BoundaryCondition.box(d["lo"], d["hi"], mode, vel)


def parse_config(doc: dict, base_dir: str = ".") -> SceneConfig:
    """Validate a config document and build a :class:`SceneConfig`.

    Schema violations raise :class:`ConfigError` whose pointer names the
    offending field.  Relative source paths resolve against ``base_dir``.
    """
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path),
                                                                list(map(str, e.absolute_path))))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise ConfigError(err.message, _pointer(err.absolute_path))

    materials = []
    for i, md in enumerate(doc["materials"]):
        try:
            m = _material_from(md)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), f"/materials/{i}") from exc
        bad = m.violations()
        if bad:
            raise ConfigError(bad[0], f"/materials/{i}")
        materials.append(m)

    sources = []
    for i, sd in enumerate(doc["sources"]):
        kind = sd.get("kind", "ply")
        path = sd.get("path")
        if path is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        params = {k: v for k, v in sd.items() if k not in (
            "kind", "path", "material", "color_bands", "default_material", "volume",
            "offset", "velocity")}
        for key in ("material", "default_material"):
            if key in sd and sd[key] >= len(materials):
                raise ConfigError("material index out of range", f"/sources/{i}/{key}")
        bands = sd.get("color_bands")
        if isinstance(bands, list):
            for j, b in enumerate(bands):
                if b["material"] >= len(materials):
                    raise ConfigError("material index out of range",
                                      f"/sources/{i}/color_bands/{j}/material")
        sources.append(SplatSource(kind, path, params, sd.get("material"), bands,
                                   sd.get("default_material", 0), sd.get("volume"),
                                   np.asarray(sd.get("offset", (0, 0, 0)), dtype=float),
                                   np.asarray(sd.get("velocity", (0, 0, 0)), dtype=float)))

    boundaries = []
    for i, bd in enumerate(doc.get("boundaries", [])):
        try:
            boundaries.append(_boundary_from(bd))
        except ValueError as exc:
            raise ConfigError(str(exc), f"/boundaries/{i}") from exc
    obstacles = []
    for i, od in enumerate(doc.get("obstacles", [])):
        try:
            keys = od["keyframes"]
            obstacles.append(ScriptedObstacle(
                _boundary_from(od["boundary"]), [k["time"] for k in keys],
                [k["offset"] for k in keys], od.get("t_start", -math.inf),
                od.get("t_end", math.inf)))
        except ValueError as exc:
            raise ConfigError(str(exc), f"/obstacles/{i}") from exc

    grid = doc.get("grid", {})
    cam = doc.get("camera")
    cfg = SceneConfig(
        sources=sources, materials=materials,
        gravity=np.asarray(doc.get("gravity", (0.0, 0.0, -9.81)), dtype=float),
        boundaries=boundaries, obstacles=obstacles,
        frames=doc.get("frames", 1), dt_frame=doc.get("dt_frame", 1.0 / 50.0),
        dt_step=doc.get("dt_step", 1e-4), grid_spacing=grid.get("spacing", 1e-2),
        grid_lo=None if "lo" not in grid else np.asarray(grid["lo"], dtype=float),
        grid_hi=None if "hi" not in grid else np.asarray(grid["hi"], dtype=float),
        lights=[Light(l["position"], l.get("color", (1, 1, 1)), l.get("intensity", 1.0))
                for l in doc.get("lights", [])],
        ambient=np.asarray(doc.get("ambient", (1.0, 1.0, 1.0)), dtype=float),
        shininess=doc.get("shininess", 32.0),
        camera=Camera(**cam) if cam is not None else None,
        visibility=doc.get("visibility", "constant"),
        k_neighbors=doc.get("k_neighbors", 16), flip_ratio=doc.get("flip_ratio", 0.95),
        return_map_k=doc.get("return_map_k", 2.0), seed=doc.get("seed", 0),
        deterministic=doc.get("deterministic", True), preview=doc.get("preview", False))
    if cfg.dt_step > cfg.dt_frame:
        raise ConfigError("dt_step must not exceed dt_frame", "/dt_step")
    try:
        cfg.substeps_per_frame()
    except ValueError as exc:
        raise ConfigError(str(exc), "/dt_frame") from exc
    if cfg.grid_lo is not None and cfg.grid_hi is not None and np.any(cfg.grid_hi <= cfg.grid_lo):
        raise ConfigError("grid hi must exceed lo on every axis", "/grid/hi")
    return cfg


def load_config(path) -> SceneConfig:
    """Read and validate a JSON scene file (raises FileNotFoundError, ConfigError)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} at line {exc.lineno}", "") from exc
    return parse_config(doc, os.path.dirname(os.path.abspath(path)))


# --------------------------------------------------------------- particles


def load_splats(path, materials: Sequence[NaccMaterial] = (), volume: Optional[float] = None,
                material: Optional[int] = None) -> ParticleSet:
    """Particles from a PLY, reset to the rest state of their materials.

    The volume comes from ``volume`` when given, otherwise from the file;
    mass = density * volume, F = I and alpha = alpha0.
    """
    ps = read_particles(path)
    if material is not None:
        ps.material_id[:] = material
    if volume is not None:
        ps.volume[:] = volume
    if len(ps) and materials:
        if ps.material_id.max() >= len(materials):
            raise ConfigError(f"{path}: material_id {int(ps.material_id.max())} has no entry "
                              "in the material table", "/materials")
        ps.reset_physics(materials)
    else:
        ps.F[:] = np.eye(3)
        ps.dynamic_cov[:] = ps.static_cov
    return ps


def _bands(spec):
    if spec == "watermelon":
        return fill_mod.watermelon_bands()
    return [fill_mod.ColorBand(b["material"], b.get("lo", (0, 0, 0)), b.get("hi", (1, 1, 1)))
            for b in spec]


def build_source(src: SplatSource, materials, seed: int = 0) -> ParticleSet:
    p = src.params
    if src.kind == "box":
        ps = block(p["lo"], p["hi"], p["spacing"], jitter=p.get("jitter", 0.0), seed=seed,
                   color=p.get("color", (0.5, 0.5, 0.5)))
        if src.volume is not None:
            ps.volume[:] = src.volume
    elif src.kind == "fill":
        surface = read_particles(src.path)
        rule = fill_mod.color_rule_from_config(p.get("color_rule", {"type": "nearest_surface"}),
                                               surface)
        _, ps = fill_mod.fill(surface, p.get("n", 128), p.get("tau_d", fill_mod.DEFAULT_TAU_D),
                              p.get("particles_per_cell", 8), rule, None, seed,
                              p.get("support_radius_mult", fill_mod.DEFAULT_SUPPORT))
        if p.get("include_surface", True) and len(surface):
            surface.volume[:] = ps.volume[0] if len(ps) else (src.volume or 1e-9)
            ps = ParticleSet.concat([surface, ps])
        if src.volume is not None:
            ps.volume[:] = src.volume
    else:
        ps = read_particles(src.path)
        if src.volume is not None:
            ps.volume[:] = src.volume
    if src.material is not None:
        ps.material_id[:] = src.material
    elif src.color_bands is not None:
        fill_mod.assign_materials_by_color(ps, _bands(src.color_bands), src.default_material)
    elif src.kind != "ply":
        ps.material_id[:] = src.default_material
    ps.position += src.offset
    ps.velocity[:] = src.velocity
    if np.any(~(ps.volume > 0)):
        raise ConfigError("particle volume must be > 0; set 'volume' on the source", "/sources")
    return ps


def build_particles(cfg: SceneConfig) -> ParticleSet:
    sets = [build_source(s, cfg.materials, cfg.seed + i) for i, s in enumerate(cfg.sources)]
    ps = ParticleSet.concat(sets)
    if len(ps):
        if ps.material_id.max() >= len(cfg.materials):
            raise ConfigError("material_id without a material table entry", "/materials")
        vel = ps.velocity.copy()
        ps.reset_physics(cfg.materials)
        ps.velocity[:] = vel
    return ps


def auto_grid(cfg: SceneConfig, ps: ParticleSet) -> MpmGrid:
    dx = cfg.grid_spacing
    if cfg.grid_lo is not None and cfg.grid_hi is not None:
        return MpmGrid.around(cfg.grid_lo, cfg.grid_hi, dx, pad=0)
    pts = [ps.position] if len(ps) else [np.zeros((1, 3))]
    lo = np.min([p.min(axis=0) for p in pts], axis=0)
    hi = np.max([p.max(axis=0) for p in pts], axis=0)
    ext = float((hi - lo).max())
    pad = 0.25 * ext
    lo, hi = lo - pad, hi + pad
    for b in cfg.boundaries:
        if b.shape == "plane":
            lo = np.minimum(lo, b.point - 2 * dx * np.abs(b.normal))
            hi = np.maximum(hi, b.point + 2 * dx * np.abs(b.normal))
    if cfg.grid_lo is not None:
        lo = cfg.grid_lo
    if cfg.grid_hi is not None:
        hi = cfg.grid_hi
    return MpmGrid.around(lo, hi, dx, pad=3)


# ---------------------------------------------------------------- shading


def shade_particles(ps: ParticleSet, cfg: SceneConfig) -> np.ndarray:
    """Display colors for the current state (ambient only without lights)."""
    base = ps.base_colors()
    if not cfg.lights or len(ps) <= cfg.k_neighbors:
        return base * cfg.ambient
    normals = pca_normals(ps.position, cfg.k_neighbors)
    vis = occlusion_visibility(ps, cfg.lights) if cfg.visibility == "occlusion" else None
    cam = cfg.camera or Camera()
    return blinn_phong_batch(base, normals, ps.position, cam.view_dir, cfg.lights, vis,
                             cfg.ambient, cfg.shininess)


# ---------------------------------------------------------------- preview


@numba.njit(cache=True)
def _splat_sprites(order, px, py, rad, rgb, img):
    H, W = img.shape[0], img.shape[1]
    for o in range(order.shape[0]):
        i = order[o]
        r = rad[i]
        x0 = max(0, int(math.floor(px[i] - r)))
        x1 = min(W - 1, int(math.ceil(px[i] + r)))
        y0 = max(0, int(math.floor(py[i] - r)))
        y1 = min(H - 1, int(math.ceil(py[i] + r)))
        for y in range(y0, y1 + 1):
            dy = y + 0.5 - py[i]
            for x in range(x0, x1 + 1):
                dx = x + 0.5 - px[i]
                if dx * dx + dy * dy <= r * r:
                    img[y, x, 0] = rgb[i, 0]
                    img[y, x, 1] = rgb[i, 1]
                    img[y, x, 2] = rgb[i, 2]


def rasterize_preview(snapshot: FrameSnapshot, camera: Optional[Camera] = None) -> np.ndarray:
    """Opaque depth-sorted point sprites; returns an ``(H, W, 3)`` uint8 image.

    ``camera.extent`` is the visible width in meters.  Sprites are discs of
    radius sqrt(largest eigenvalue of the screen-projected covariance), at
    least half a pixel.  Far sprites are drawn first so nearer ones win.
    """
    cam = camera or Camera()
    W, H = cam.resolution
    bg = np.rint(np.clip(np.asarray(cam.background, dtype=float), 0, 1) * 255).astype(np.uint8)
    img = np.empty((H, W, 3), dtype=np.uint8)
    img[:] = bg
    n = len(snapshot)
    if n == 0:
        return img
    r, u, f = cam.basis()
    scale = W / cam.extent
    rel = np.asarray(snapshot.position, dtype=float) - cam.center
    px = W / 2 + (rel @ r) * scale
    py = H / 2 - (rel @ u) * scale
    depth = rel @ f
    P = np.stack([r, u])
    cov2 = np.einsum("ai,nij,bj->nab", P, snapshot.dynamic_cov, P)
    lam = np.linalg.eigvalsh(cov2)[:, -1]
    rad = np.maximum(np.sqrt(np.maximum(lam, 0.0)) * scale, 0.5)
    rgb = np.rint(np.clip(np.asarray(snapshot.color, dtype=float), 0, 1) * 255).astype(np.uint8)
    order = np.lexsort((np.arange(n)[::-1], -depth))  # far to near; ties: lower index on top
    _splat_sprites(order.astype(np.int64), px, py, rad, rgb, img)
    return img


def save_png(image: np.ndarray, path) -> str:
    from PIL import Image
    Image.fromarray(np.ascontiguousarray(image), "RGB").save(path, format="PNG", optimize=False)
    return str(path)


# --------------------------------------------------------------- simulate


@dataclass
class SimulationResult:
    frames: list = field(default_factory=list)
    stats: list = field(default_factory=list)
    failure: Optional[dict] = None
    particles: Optional[ParticleSet] = None


def _publish(engine: Engine, cfg: SceneConfig, frame: int, out_dir, preview: bool):
    evolved = evolve(engine.particles)
    engine.particles.dynamic_cov[:] = evolved.dynamic_cov
    snap = FrameSnapshot.from_particles(frame, engine.time, evolved, shade_particles(evolved, cfg))
    path = export_frame(snap, out_dir)
    if preview:
        save_png(rasterize_preview(snap, cfg.camera), os.path.join(
            out_dir, frame_filename(frame).replace(".ply", ".png")))
    return path


def simulate(cfg: SceneConfig, out_dir, *, deterministic: Optional[bool] = None,
             threads: Optional[int] = None, frames: Optional[int] = None,
             preview: Optional[bool] = None, particles: Optional[ParticleSet] = None,
             progress=None) -> SimulationResult:
    """Run the scene and write ``frame_%05d.ply`` files plus ``stats.csv``.

    Frame 0 is the initial state.  On a numerical failure the frames written
    so far stay on disk, ``failure.json`` records where it happened and
    :class:`FrameAbort` is raised.
    """
    os.makedirs(out_dir, exist_ok=True)
    det = cfg.deterministic if deterministic is None else deterministic
    n_frames = cfg.frames if frames is None else frames
    preview = cfg.preview if preview is None else preview
    n_sub = cfg.substeps_per_frame()
    ps = build_particles(cfg) if particles is None else particles
    grid = auto_grid(cfg, ps)
    engine = Engine(ps, cfg.materials, grid, gravity=cfg.gravity,
                    boundaries=list(cfg.boundaries) + list(cfg.obstacles),
                    flip_ratio=cfg.flip_ratio, k=cfg.return_map_k, deterministic=det,
                    threads=threads)
    result = SimulationResult(particles=ps)
    failure_path = os.path.join(out_dir, "failure.json")
    if os.path.exists(failure_path):
        os.remove(failure_path)
    frame = 0
    with open(os.path.join(out_dir, "stats.csv"), "w", encoding="utf-8") as stats_fh:
        stats_fh.write(StepStats.CSV_HEADER + "\n")
        try:
            result.frames.append(_publish(engine, cfg, 0, out_dir, preview))
            for frame in range(1, n_frames + 1):
                for _ in range(n_sub):
                    st = engine.step(cfg.dt_step)
                    result.stats.append(st)
                    stats_fh.write(st.csv_row() + "\n")
                stats_fh.flush()
                result.frames.append(_publish(engine, cfg, frame, out_dir, preview))
                if progress is not None:
                    progress(frame, n_frames)
        except SplatMPMError as exc:
            abort = FrameAbort(str(exc), frame=frame, substep=engine.substep,
                               particle=getattr(exc, "particle", None), cause=exc)
            result.failure = dict(abort.record(), frames_written=len(result.frames))
            with open(failure_path, "w", encoding="utf-8") as fh:
                json.dump(result.failure, fh, indent=2)
            raise abort from exc
    return result
