"""Command line entry point: ``splatmpm <command> ...``.

Exit status is 0 on success, 1 for user errors (bad flags, missing or
invalid files) and 2 when a simulation aborts numerically.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import fill as fill_mod
from .constitutive import p0_of, return_map, yield_function
from .errors import ConfigError, FrameAbort, ParseError, SplatMPMError
from .model import ParticleSet, validate as validate_particles
from .ply import FrameSnapshot, export_frame, read_particles, write_particles
from .presets import PRESETS
from .scene import (build_particles, load_config, load_splats, rasterize_preview, save_png,
                    shade_particles, simulate)

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _cmd_simulate(a):
    cfg = load_config(a.config)
    det = None if a.deterministic is None else a.deterministic
    res = simulate(cfg, a.out, deterministic=det, threads=a.threads, frames=a.frames,
                   preview=a.preview or None,
                   progress=(lambda f, n: print(f"frame {f}/{n}", file=sys.stderr))
                   if a.verbose else None)
    print(f"wrote {len(res.frames)} frames to {a.out}")
    return EXIT_OK


FILL_DEFAULTS = {"n": 128, "tau_d": fill_mod.DEFAULT_TAU_D, "particles_per_cell": 8,
                 "support_radius_mult": fill_mod.DEFAULT_SUPPORT, "seed": 0, "material": 0,
                 "color_rule": {"type": "nearest_surface"}, "color_bands": None,
                 "include_surface": False}


def _fill_options(a) -> dict:
    opts = dict(FILL_DEFAULTS)
    if a.config:
        with open(a.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        unknown = sorted(set(doc) - set(opts))
        if unknown:
            raise ConfigError("unknown fill option", "/" + unknown[0])
        opts.update(doc)
    flags = {"n": a.n, "tau_d": a.tau, "particles_per_cell": a.ppc,
             "support_radius_mult": a.support, "seed": a.seed, "material": a.material,
             "color_rule": None if a.color_rule is None else json.loads(a.color_rule)}
    opts.update({k: v for k, v in flags.items() if v is not None})
    if a.include_surface:
        opts["include_surface"] = True
    return opts


def _cmd_fill(a):
    o = _fill_options(a)
    surface = read_particles(a.surface)
    rule = fill_mod.color_rule_from_config(o["color_rule"], surface)
    field, interior = fill_mod.fill(surface, int(o["n"]), float(o["tau_d"]),
                                    int(o["particles_per_cell"]), rule, int(o["material"]),
                                    int(o["seed"]), float(o["support_radius_mult"]))
    out = interior
    if o["include_surface"] and len(surface):
        surface.volume[:] = interior.volume[0] if len(interior) else surface.volume
        surface.mass[:] = surface.volume
        surface.material_id[:] = int(o["material"])
        out = ParticleSet.concat([surface, interior])
    if o["color_bands"]:
        bands = fill_mod.watermelon_bands() if o["color_bands"] == "watermelon" else [
            fill_mod.ColorBand(b["material"], b.get("lo", (0, 0, 0)), b.get("hi", (1, 1, 1)))
            for b in o["color_bands"]]
        fill_mod.assign_materials_by_color(out, bands, int(o["material"]))
    write_particles(a.out, out)
    print(f"cells: exterior={field.count(fill_mod.EXTERIOR)} boundary="
          f"{field.count(fill_mod.BOUNDARY)} interior={field.count(fill_mod.INTERIOR)}; "
          f"wrote {len(out)} particles to {a.out}")
    return EXIT_OK


def _cmd_shade(a):
    cfg = load_config(a.config)
    ps = load_splats(a.particles, cfg.materials) if a.reset else read_particles(a.particles)
    colors = shade_particles(ps, cfg)
    snap = FrameSnapshot.from_particles(a.frame, 0.0, ps, colors)
    path = export_frame(snap, a.out)
    if a.png:
        save_png(rasterize_preview(snap, cfg.camera), a.png)
    print(f"wrote {path}")
    return EXIT_OK


def _diag_material(a):
    if a.config:
        mats = load_config(a.config).materials
    else:
        mats = PRESETS[a.preset].materials
    if a.material >= len(mats):
        raise ConfigError(f"material index {a.material} out of range", "/materials")
    return mats[a.material]


def _cmd_diag(a):
    m = _diag_material(a)
    alpha = m.alpha0 if a.alpha is None else a.alpha
    p0 = p0_of(alpha, m)
    if p0 <= 0:
        raise ConfigError("p0 is zero for this alpha; nothing to project", "/alpha")
    ps = np.linspace(a.p_min, a.p_max, a.n) * p0
    qs = np.linspace(0.0, a.q_max, a.n) * p0
    out = open(a.out, "w", newline="") if a.out != "-" else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["p_trial", "q_trial", "p", "q", "case", "y_trial"])
        for p in ps:
            for q in qs:
                r = return_map((p, q), p0, m, k=a.k)
                w.writerow([repr(float(p)), repr(float(q)), repr(r.projected.p),
                            repr(r.projected.q), r.case_tag.name,
                            repr(yield_function((p, q), p0, m))])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _cmd_validate(a):
    cfg = load_config(a.config)
    ps = build_particles(cfg)
    report = validate_particles(ps, cfg.materials)
    if a.particles:
        extra = read_particles(a.particles)
        report += [f"{a.particles}: {r}" for r in validate_particles(extra, cfg.materials)]
    for line in report:
        print(line)
    if report:
        print(f"{len(report)} problem(s)", file=sys.stderr)
        return EXIT_USER
    print(f"ok: {len(ps)} particles, {len(cfg.materials)} materials")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="splatmpm", description="Gaussian-splat MPM fracture simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a scene and write frame PLYs")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--deterministic", dest="deterministic", action="store_true", default=None)
    g.add_argument("--parallel", dest="deterministic", action="store_false")
    s.add_argument("--threads", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--preview", action="store_true", help="also write PNG previews")
    s.set_defaults(func=_cmd_simulate)

    f = sub.add_parser("fill", help="seed interior particles inside surface splats")
    f.add_argument("surface")
    f.add_argument("--out", required=True)
    f.add_argument("--config", help="fill JSON (n, tau_d, particles_per_cell, color_rule, "
                                    "color_bands, seed, ...); flags override it")
    f.add_argument("--n", type=int, help="lattice cells per side (default 128)")
    f.add_argument("--tau", type=float, help="boundary density threshold (default 0.2)")
    f.add_argument("--ppc", type=int, help="particles per interior cell (default 8)")
    f.add_argument("--support", type=float, help="support radius in Mahalanobis units")
    f.add_argument("--seed", type=int)
    f.add_argument("--material", type=int, help="material id for seeded particles")
    f.add_argument("--color-rule", help="JSON color rule, e.g. '{\"type\": \"uniform\"}'")
    f.add_argument("--include-surface", action="store_true")
    f.set_defaults(func=_cmd_fill)

    h = sub.add_parser("shade", help="relight a particle PLY into a frame PLY")
    h.add_argument("particles")
    h.add_argument("--config", required=True, help="scene JSON with lights and camera")
    h.add_argument("--out", required=True, help="output directory")
    h.add_argument("--frame", type=int, default=0)
    h.add_argument("--png")
    h.add_argument("--reset", action="store_true", help="reset particles to rest state first")
    h.set_defaults(func=_cmd_shade)

    d = sub.add_parser("diag-returnmap", help="CSV of return-map projections over a (p,q) grid")
    src = d.add_mutually_exclusive_group()
    src.add_argument("--config")
    src.add_argument("--preset", choices=sorted(PRESETS), default="kiwi")
    d.add_argument("--material", type=int, default=0)
    d.add_argument("--alpha", type=float)
    d.add_argument("--k", type=float, default=2.0)
    d.add_argument("--p-min", type=float, default=-1.5, help="in units of p0")
    d.add_argument("--p-max", type=float, default=1.5, help="in units of p0")
    d.add_argument("--q-max", type=float, default=2.0, help="in units of p0")
    d.add_argument("--n", type=int, default=21)
    d.add_argument("--out", default="-")
    d.set_defaults(func=_cmd_diag)

    v = sub.add_parser("validate", help="check a scene config and its particles")
    v.add_argument("config")
    v.add_argument("--particles")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USER
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FrameAbort as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_USER
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except SplatMPMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
