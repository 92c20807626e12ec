"""Grid boundary conditions and scripted (kinematic) obstacles."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class BoundaryMode(enum.IntEnum):
    STICKY = 0
    SLIP = 1

    @classmethod
    def parse(cls, value) -> "BoundaryMode":
        if isinstance(value, cls):
            return value
        return cls[str(value).upper()]


@dataclass
class BoundaryCondition:
    """A plane (``point`` + unit ``normal``) or an axis-aligned box (``lo``, ``hi``).

    For planes, nodes on the side opposite to the normal count as inside the
    obstacle.  ``velocity`` moves the obstacle (m/s).
    """

    shape: str
    mode: BoundaryMode = BoundaryMode.STICKY
    point: Optional[np.ndarray] = None
    normal: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.mode = BoundaryMode.parse(self.mode)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        if self.shape == "plane":
            self.point = np.asarray(self.point, dtype=float).reshape(3)
            self.normal = np.asarray(self.normal, dtype=float).reshape(3)
            if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
                raise ValueError("plane normal must be unit length")
        elif self.shape == "box":
            self.lo = np.asarray(self.lo, dtype=float).reshape(3)
            self.hi = np.asarray(self.hi, dtype=float).reshape(3)
            if np.any(self.hi <= self.lo):
                raise ValueError("box needs hi > lo on every axis")
        else:
            raise ValueError(f"unknown boundary shape {self.shape!r}")

    @classmethod
    def plane(cls, point, normal, mode=BoundaryMode.STICKY, velocity=(0, 0, 0)):
        return cls("plane", mode, point=point, normal=normal, velocity=velocity)

    @classmethod
    def box(cls, lo, hi, mode=BoundaryMode.STICKY, velocity=(0, 0, 0)):
        return cls("box", mode, lo=lo, hi=hi, velocity=velocity)

    def translated(self, offset, velocity=None) -> "BoundaryCondition":
        offset = np.asarray(offset, dtype=float)
        v = self.velocity if velocity is None else velocity
        if self.shape == "plane":
            return BoundaryCondition("plane", self.mode, point=self.point + offset,
                                     normal=self.normal, velocity=v)
        return BoundaryCondition("box", self.mode, lo=self.lo + offset, hi=self.hi + offset,
                                 velocity=v)

    def at(self, t: float) -> Optional["BoundaryCondition"]:
        return self


@dataclass
class ScriptedObstacle:
    """A boundary moved along piecewise-linear keyframes ``(time, offset)``.

    Outside ``[t_start, t_end]`` the obstacle is inactive.  Offsets translate
    the base shape; the velocity used by the grid response is the slope of the
    active segment.
    """

    base: BoundaryCondition
    times: np.ndarray
    offsets: np.ndarray
    t_start: float = -np.inf
    t_end: float = np.inf

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(-1, 3)
        if len(self.times) == 0 or len(self.times) != len(self.offsets):
            raise ValueError("need matching, non-empty keyframe times and offsets")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("keyframe times must be strictly increasing")

    def position(self, t: float) -> np.ndarray:
        """Offset at time ``t`` (held constant outside the keyframe range)."""
        ts, xs = self.times, self.offsets
        if t <= ts[0]:
            return xs[0].copy()
        if t >= ts[-1]:
            return xs[-1].copy()
        j = int(np.searchsorted(ts, t, side="right")) - 1
        s = (t - ts[j]) / (ts[j + 1] - ts[j])
        return xs[j] + s * (xs[j + 1] - xs[j])

    def velocity(self, t: float) -> np.ndarray:
        ts, xs = self.times, self.offsets
        if len(ts) < 2 or t < ts[0] or t >= ts[-1]:
            return np.zeros(3)
        j = int(np.searchsorted(ts, t, side="right")) - 1
        return (xs[j + 1] - xs[j]) / (ts[j + 1] - ts[j])

    def at(self, t: float) -> Optional[BoundaryCondition]:
        if not (self.t_start <= t <= self.t_end):
            return None
        return self.base.translated(self.position(t), self.velocity(t))


def pack_boundaries(boundaries: Sequence, t: float):
    """Dense ``(planes, boxes)`` tables for the grid kernel at time ``t``.

    Columns: planes ``[point(3), normal(3), mode, velocity(3)]``,
    boxes ``[lo(3), hi(3), mode, velocity(3)]``.
    """
    planes, boxes = [], []
    for b in boundaries:
        bc = b.at(t)
        if bc is None:
            continue
        if bc.shape == "plane":
            planes.append(np.concatenate([bc.point, bc.normal, [bc.mode], bc.velocity]))
        else:
            boxes.append(np.concatenate([bc.lo, bc.hi, [bc.mode], bc.velocity]))
    planes = np.array(planes, dtype=float).reshape(-1, 10)
    boxes = np.array(boxes, dtype=float).reshape(-1, 10)
    return planes, boxes
