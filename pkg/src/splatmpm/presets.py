"""Published material/time-step rows for the demo objects.

Each row gives the frame interval, grid spacing, substep size and one or
more NACC materials.  Densities are the nominal value 2 used for every row.
The watermelon row carries three materials (rind, flesh, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import NaccMaterial


@dataclass(frozen=True)
class PresetRow:
    name: str
    dt_frame: float
    dx: float
    dt_step: float
    materials: tuple

    @property
    def substeps_per_frame(self) -> int:
        return int(round(self.dt_frame / self.dt_step))


def _nacc(name, E, nu, alpha0, beta, xi, M, rho=2.0):
    return NaccMaterial(youngs_modulus=E, poisson_ratio=nu, density=rho, beta=beta,
                        alpha0=alpha0, xi=xi, slope_m=M, name=name)


PRESETS = {
    "watermelon": PresetRow("watermelon", 1 / 50, 3e-3, 1e-4, (
        _nacc("rind", 2000.0, 0.38, -0.04, 2.0, 2.0, 2.36),
        _nacc("flesh", 1000.0, 0.38, -0.04, 0.6, 2.0, 2.36),
        _nacc("seed", 1e4, 0.38, -0.04, 5.0, 2.0, 2.36),
    )),
    "jelly": PresetRow("jelly", 1 / 500, 3e-3, 1e-5,
                       (_nacc("jelly", 2000.0, 0.45, -0.5, 1.0, 2.0, 2.36),)),
    "pumpkin": PresetRow("pumpkin", 1 / 50, 3e-3, 1e-4,
                         (_nacc("pumpkin", 4000.0, 0.40, -0.04, 1.0, 2.0, 2.36),)),
    "kiwi": PresetRow("kiwi", 1 / 50, 1e-2, 1e-4,
                      (_nacc("kiwi", 2000.0, 0.42, -0.04, 1.0, 2.0, 2.36),)),
    "pineapple": PresetRow("pineapple", 1 / 50, 1e-2, 1e-4,
                           (_nacc("pineapple", 5000.0, 0.39, -0.04, 1.0, 2.0, 2.36),)),
    "dragonfruit": PresetRow("dragonfruit", 1 / 50, 1e-2, 1e-4,
                             (_nacc("dragonfruit", 2000.0, 0.42, -0.04, 1.0, 2.0, 2.36),)),
    "tosta": PresetRow("tosta", 1 / 50, 5e-3, 1e-4,
                       (_nacc("tosta", 2000.0, 0.38, -0.1, 1.0, 2.0, 2.36),)),
    "sandcastle": PresetRow("sandcastle", 1 / 50, 1e-2, 1e-4,
                            (_nacc("sandcastle", 50.0, 0.05, -0.04, 0.01, 1.0, 2.36),)),
}


def all_materials() -> list[NaccMaterial]:
    return [m for row in PRESETS.values() for m in row.materials]
