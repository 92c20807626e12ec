"""A tall soft column with a vanishing yield surface spreads like a liquid.

With a tiny initial hardening and no hardening law, the NACC surface pins
every state near the origin and the column collapses under gravity.  Both
elastic models are run side by side; their final clouds should be nearly
indistinguishable because the plastic flow dominates.

    python3 demos/fluid_column.py --seconds 1
"""

import argparse
import math

import numpy as np

from splatmpm import BoundaryCondition, ElasticModel, Engine, MpmGrid, NaccMaterial
from splatmpm.analysis import column_height, rms_distance
from splatmpm.constitutive import fluid_params
from splatmpm.scenes import block


def run(model, seconds, hp=0.005, width=0.04, height=0.16):
    m = fluid_params(NaccMaterial(200.0, 0.3, 2.0, elastic_model=model))
    ps = block((-width / 2, -width / 2, 0), (width / 2, width / 2, height), hp, jitter=0.3, seed=1)
    ps.reset_physics([m])
    dx = 2 * hp
    grid = MpmGrid.around((-0.3, -0.3, 0), (0.3, 0.3, 1.1 * height), dx)
    eng = Engine(ps, [m], grid,
                 boundaries=[BoundaryCondition.plane((0, 0, 0), (0, 0, 1), "slip")])
    c = math.sqrt((m.lam + 2 * m.mu) / m.density)
    n = int(math.ceil(seconds / (0.3 * dx / (c + math.sqrt(2 * 9.81 * height)))))
    h0 = column_height(ps.position)
    print(f"{model.name.lower():12s} {len(ps)} particles, {n} substeps")
    for i in range(10):
        eng.run(n // 10, seconds / n)
        print(f"   t = {eng.time:5.2f} s   height {column_height(ps.position) / h0:6.1%}")
    return ps.position.copy()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=1.0)
    a = ap.parse_args()
    x = run(ElasticModel.STVK_HENCKY, a.seconds)
    y = run(ElasticModel.NEO_HOOKEAN, a.seconds)
    spread = math.sqrt(np.mean(np.sum((x - x.mean(axis=0)) ** 2, axis=1)))
    print(f"RMS difference between models: {rms_distance(x, y) * 1e3:.2f} mm "
          f"({rms_distance(x, y) / spread:.1%} of the cloud spread)")


if __name__ == "__main__":
    main()
