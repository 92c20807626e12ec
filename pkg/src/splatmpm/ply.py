"""PLY reading and writing for particle sets and exported frames.

Particle files written here are binary little-endian with every value stored
as float64 (int32 for ``material_id``), so a write/read cycle is bit-exact.
The reader also accepts ASCII and big-endian files and the usual Gaussian
splatting layout (log-scales, wxyz quaternion, logit opacity).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParseError
from .fill import sh0_init
from .model import MAX_SH_DEGREE, ParticleSet, sh_coeff_count, sh_degree_of

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_COV = ("xx", "xy", "xz", "yy", "yz", "zz")
_COV_IDX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
LINEAR_OPACITY_COMMENT = "opacity linear"


@dataclass
class PlyHeader:
    fmt: str
    comments: list
    elements: list  # [(name, count, [(prop, dtype)])]
    length: int  # bytes including "end_header\n"

    def element(self, name):
        for e in self.elements:
            if e[0] == name:
                return e
        return None


def parse_header(data: bytes) -> PlyHeader:
    if not data.startswith(b"ply"):
        raise ParseError("not a PLY file (missing 'ply' magic)", 0)
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError("header has no end_header line", len(data))
    nl = data.find(b"\n", end)
    length = len(data) if nl < 0 else nl + 1
    fmt, comments, elements = None, [], []
    offset = 0
    for raw in data[:length].split(b"\n"):
        line = raw.decode("ascii", "replace").strip()
        here = offset
        offset += len(raw) + 1
        if not line or line == "ply" or line == "end_header":
            continue
        words = line.split()
        key = words[0]
        if key == "format":
            if len(words) < 2 or words[1] not in ("ascii", "binary_little_endian",
                                                   "binary_big_endian"):
                raise ParseError(f"unsupported format line {line!r}", here)
            fmt = words[1]
        elif key in ("comment", "obj_info"):
            comments.append(line[len(key):].strip())
        elif key == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise ParseError(f"malformed element line {line!r}", here)
            elements.append((words[1], int(words[2]), []))
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", here)
            if len(words) >= 2 and words[1] == "list":
                raise ParseError(f"list properties are not supported ({line!r})", here)
            if len(words) != 3 or words[1] not in _PLY_TYPES:
                raise ParseError(f"malformed property line {line!r}", here)
            elements[-1][2].append((words[2], _PLY_TYPES[words[1]]))
        else:
            raise ParseError(f"unknown header keyword {key!r}", here)
    if fmt is None:
        raise ParseError("header has no format line", 0)
    return PlyHeader(fmt, comments, elements, length)


def read_vertices(path) -> tuple:
    """Structured vertex array plus the parsed header."""
    with open(path, "rb") as fh:
        data = fh.read()
    header = parse_header(data)
    offset = header.length
    vertex = None
    for name, count, props in header.elements:
        if header.fmt == "ascii":
            if name != "vertex":
                raise ParseError("ASCII files may only contain a vertex element", offset)
            arr = _read_ascii(data, offset, count, props)
            vertex = arr
            continue
        endian = "<" if header.fmt == "binary_little_endian" else ">"
        dtype = np.dtype([(p, endian + t) for p, t in props])
        need = dtype.itemsize * count
        if offset + need > len(data):
            raise ParseError(f"element {name!r} declares {count} records but the file is "
                             f"truncated", len(data))
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        if name == "vertex":
            vertex = arr
            _check_finite(arr, offset)
        offset += need
    if header.fmt != "ascii" and offset != len(data):
        raise ParseError(f"{len(data) - offset} trailing bytes after the declared elements",
                         offset)
    if vertex is None:
        raise ParseError("no vertex element", header.length)
    return vertex, header


def _read_ascii(data, offset, count, props):
    text = data[offset:].decode("ascii", "replace").split()
    n = len(props)
    if len(text) < n * count:
        raise ParseError(f"vertex element declares {count} records but has fewer values",
                         len(data))
    if len(text) > n * count:
        raise ParseError("trailing values after the vertex element", len(data))
    dtype = np.dtype([(p, t) for p, t in props])
    vals = np.array(text[: n * count], dtype=float).reshape(count, n) if count else \
        np.zeros((0, n))
    arr = np.zeros(count, dtype=dtype)
    for j, (p, _) in enumerate(props):
        arr[p] = vals[:, j]
    _check_finite(arr, offset, ascii_mode=True)
    return arr


def _check_finite(arr, base, ascii_mode=False):
    bad_row, bad_field = None, None
    for name in arr.dtype.names or ():
        col = arr[name]
        if col.dtype.kind == "f":
            rows = np.flatnonzero(~np.isfinite(col))
            if rows.size and (bad_row is None or rows[0] < bad_row):
                bad_row, bad_field = int(rows[0]), name
    if bad_row is not None:
        off = base if ascii_mode else (
            base + bad_row * arr.dtype.itemsize + arr.dtype.fields[bad_field][1])
        raise ParseError(f"non-finite value in property {bad_field!r} of vertex {bad_row}", off)


def _quat_to_rot(q):
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], axis=1)


def _cols(v, names):
    return np.stack([np.asarray(v[n], dtype=float) for n in names], axis=-1)


def read_particles(path) -> ParticleSet:
    """Parse a particle PLY exactly as stored (no physics reset)."""
    v, header = read_vertices(path)
    names = set(v.dtype.names or ())
    n = len(v)
    for p in ("x", "y", "z"):
        if p not in names:
            raise ParseError(f"missing property {p!r}", header.length)

    rest = sorted((nm for nm in names if nm.startswith("f_rest_")),
                  key=lambda s: int(s.rsplit("_", 1)[1]))
    k = 1 + len(rest) // 3
    degree = min(sh_degree_of(k) if len(rest) % 3 == 0 and _is_square(k) else 0, MAX_SH_DEGREE)
    ps = ParticleSet.empty(n, degree)
    ps.position[:] = _cols(v, ("x", "y", "z"))

    cov_names = [f"cov_{c}" for c in _COV]
    scale_names = [f"scale_{i}" for i in range(3)]
    rot_names = [f"rot_{i}" for i in range(4)]
    if all(c in names for c in cov_names):
        ps.static_cov[:] = _sym(_cols(v, cov_names))
    elif all(c in names for c in scale_names + rot_names):
        s = np.exp(_cols(v, scale_names))
        R = _quat_to_rot(_cols(v, rot_names)) if n else np.zeros((0, 3, 3))
        ps.static_cov[:] = np.einsum("nij,nj,nkj->nik", R, s * s, R)
    else:
        missing = [c for c in cov_names if c not in names] or \
            [c for c in scale_names + rot_names if c not in names]
        raise ParseError(f"missing property {missing[0]!r} (need cov_* or scale_*/rot_*)",
                         header.length)
    dcov = [f"dcov_{c}" for c in _COV]
    ps.dynamic_cov[:] = _sym(_cols(v, dcov)) if all(c in names for c in dcov) else ps.static_cov

    linear = any(c.strip() == LINEAR_OPACITY_COMMENT for c in header.comments)
    if "opacity" in names:
        o = np.asarray(v["opacity"], dtype=float)
        ps.opacity[:] = o if linear else 1.0 / (1.0 + np.exp(-o))

    if all(f"f_dc_{i}" in names for i in range(3)):
        ps.sh[:, 0, :] = _cols(v, ("f_dc_0", "f_dc_1", "f_dc_2"))
        kk = ps.sh.shape[1]
        per = len(rest) // 3
        for c in range(3):
            for j in range(1, kk):
                ps.sh[:, j, c] = v[f"f_rest_{c * per + j - 1}"]
    elif all(c in names for c in ("red", "green", "blue")):
        rgb = _cols(v, ("red", "green", "blue"))
        if v["red"].dtype.kind == "u":
            rgb = rgb / 255.0
        ps.sh[:, 0, :] = sh0_init(np.clip(rgb, 0.0, 1.0))

    if all(c in names for c in ("vx", "vy", "vz")):
        ps.velocity[:] = _cols(v, ("vx", "vy", "vz"))
    has_ref = all(c in names for c in ("X", "Y", "Z"))
    ps.ref_position[:] = _cols(v, ("X", "Y", "Z")) if has_ref else ps.position
    if all(f"F{i}{j}" in names for i in range(3) for j in range(3)):
        ps.F[:] = _cols(v, [f"F{i}{j}" for i in range(3) for j in range(3)]).reshape(n, 3, 3)
    for nm in ("mass", "volume", "alpha"):
        if nm in names:
            getattr(ps, nm)[:] = v[nm]
    if "material_id" in names:
        ps.material_id[:] = v["material_id"]
    return ps


def _is_square(k):
    r = int(round(k ** 0.5))
    return r * r == k


def _sym(c6):
    A = np.empty((len(c6), 3, 3))
    for col, (i, j) in enumerate(_COV_IDX):
        A[:, i, j] = c6[:, col]
        A[:, j, i] = c6[:, col]
    return A


def _header(n, props, comments=()):
    lines = ["ply", "format binary_little_endian 1.0"]
    lines += [f"comment {c}" for c in comments]
    lines.append(f"element vertex {n}")
    ply_name = {"f8": "double", "f4": "float", "i4": "int", "u1": "uchar"}
    lines += [f"property {ply_name[t]} {p}" for p, t in props]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def particle_properties(sh_degree: int):
    props = [(p, "f8") for p in ("x", "y", "z", "vx", "vy", "vz", "X", "Y", "Z",
                                  "mass", "volume", "opacity", "alpha")]
    props.append(("material_id", "i4"))
    props += [(f"F{i}{j}", "f8") for i in range(3) for j in range(3)]
    props += [(f"cov_{c}", "f8") for c in _COV]
    props += [(f"dcov_{c}", "f8") for c in _COV]
    props += [(f"f_dc_{i}", "f8") for i in range(3)]
    props += [(f"f_rest_{i}", "f8") for i in range(3 * (sh_coeff_count(sh_degree) - 1))]
    return props


def _write(path, header: bytes, arr: np.ndarray):
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return str(path)


def write_particles(path, ps: ParticleSet) -> str:
    """Full-precision particle dump readable by :func:`read_particles`."""
    props = particle_properties(ps.sh_degree)
    arr = np.zeros(len(ps), dtype=np.dtype([(p, "<" + t) for p, t in props]))
    for a, c in zip(("x", "y", "z"), ps.position.T):
        arr[a] = c
    for a, c in zip(("vx", "vy", "vz"), ps.velocity.T):
        arr[a] = c
    for a, c in zip(("X", "Y", "Z"), ps.ref_position.T):
        arr[a] = c
    for nm in ("mass", "volume", "opacity", "alpha", "material_id"):
        arr[nm] = getattr(ps, nm)
    for i in range(3):
        for j in range(3):
            arr[f"F{i}{j}"] = ps.F[:, i, j]
    for col, (i, j) in zip(_COV, _COV_IDX):
        arr[f"cov_{col}"] = ps.static_cov[:, i, j]
        arr[f"dcov_{col}"] = ps.dynamic_cov[:, i, j]
    for c in range(3):
        arr[f"f_dc_{c}"] = ps.sh[:, 0, c]
    per = ps.sh.shape[1] - 1
    for c in range(3):
        for j in range(1, ps.sh.shape[1]):
            arr[f"f_rest_{c * per + j - 1}"] = ps.sh[:, j, c]
    return _write(path, _header(len(ps), props, [LINEAR_OPACITY_COMMENT]), arr)


# ------------------------------------------------------------------ frames

FRAME_PROPERTIES = (
    [(p, "f4") for p in ("x", "y", "z")]
    + [(f"cov_{c}", "f4") for c in _COV]
    + [("opacity", "f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1"),
       ("material_id", "i4"), ("alpha", "f4")]
)
FRAME_RECORD_BYTES = np.dtype([(p, "<" + t) for p, t in FRAME_PROPERTIES]).itemsize


@dataclass
class FrameSnapshot:
    frame: int
    time: float
    position: np.ndarray
    dynamic_cov: np.ndarray
    opacity: np.ndarray
    color: np.ndarray  # shaded RGB, raw (clamped on export)
    material_id: np.ndarray
    alpha: np.ndarray

    def __len__(self):
        return len(self.position)

    @classmethod
    def from_particles(cls, frame: int, time: float, ps: ParticleSet,
                       color: Optional[np.ndarray] = None) -> "FrameSnapshot":
        return cls(frame, float(time), ps.position.copy(), ps.dynamic_cov.copy(),
                   ps.opacity.copy(), ps.base_colors() if color is None else np.asarray(color),
                   ps.material_id.copy(), ps.alpha.copy())


def frame_filename(frame: int) -> str:
    return f"frame_{frame:05d}.ply"


def frame_header(snapshot: FrameSnapshot) -> bytes:
    return _header(len(snapshot), FRAME_PROPERTIES,
                   [f"frame {snapshot.frame}", f"time {snapshot.time!r}",
                    LINEAR_OPACITY_COMMENT])


def export_frame(snapshot: FrameSnapshot, directory) -> str:
    """Write ``frame_%05d.ply`` (float32 fields, display color as uchar)."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, frame_filename(snapshot.frame))
    arr = np.zeros(len(snapshot), dtype=np.dtype([(p, "<" + t) for p, t in FRAME_PROPERTIES]))
    for a, c in zip(("x", "y", "z"), np.asarray(snapshot.position).T):
        arr[a] = c
    for col, (i, j) in zip(_COV, _COV_IDX):
        arr[f"cov_{col}"] = snapshot.dynamic_cov[:, i, j]
    arr["opacity"] = snapshot.opacity
    rgb = np.rint(np.clip(np.asarray(snapshot.color, dtype=float), 0.0, 1.0) * 255.0)
    for a, c in zip(("red", "green", "blue"), rgb.reshape(-1, 3).T):
        arr[a] = c
    arr["material_id"] = snapshot.material_id
    arr["alpha"] = snapshot.alpha
    return _write(path, frame_header(snapshot), arr)


def read_frame(path) -> FrameSnapshot:
    v, header = read_vertices(path)
    meta = {}
    for c in header.comments:
        m = re.match(r"(frame|time)\s+(\S+)", c)
        if m:
            meta[m.group(1)] = m.group(2)
    cov = _sym(_cols(v, [f"cov_{c}" for c in _COV]))
    return FrameSnapshot(int(meta.get("frame", 0)), float(meta.get("time", 0.0)),
                         _cols(v, ("x", "y", "z")), cov, np.asarray(v["opacity"], dtype=float),
                         _cols(v, ("red", "green", "blue")) / 255.0,
                         np.asarray(v["material_id"], dtype=np.int32),
                         np.asarray(v["alpha"], dtype=float))
