"""Where does the return map send trial stresses?

Sweeps a (p, q) grid around the kiwi yield ellipse, projects every point,
and draws a character map of the outcome: '.' elastic, 'o' projected onto
the ellipse, '>' collapsed to the compression tip, '<' to the tension tip.  A
second table shows how the left/right projections near the compression tip
approach each other as the trial approaches the tip line.

    python3 demos/return_map_diagram.py
"""

import numpy as np

from splatmpm import ReturnCase, return_map
from splatmpm.presets import PRESETS

GLYPH = {ReturnCase.ELASTIC: ".", ReturnCase.INTERIOR: "o",
         ReturnCase.TIP_LOWER: "<", ReturnCase.TIP_UPPER: ">"}


def main():
    m = PRESETS["kiwi"].materials[0]
    p0 = 1.0
    for q in np.linspace(2.0, 0.0, 21):
        row = "".join(GLYPH.get(return_map((p, q), p0, m).case_tag, "?")
                      for p in np.linspace(-1.5, 1.5, 61))
        print(f"q={q:4.1f} {row}")
    print(" " * 7 + "p = -1.5" + " " * 45 + "p = 1.5\n")

    print("   eps     left (p, q)              right (p, q)            gap")
    for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8):
        a = return_map(((1 - eps) * p0, 1e3), p0, m).projected
        b = return_map(((1 + eps) * p0, 1e3), p0, m).projected
        gap = float(np.hypot(a.p - b.p, a.q - b.q))
        print(f"{eps:7.0e}  ({a.p:.6f}, {a.q:.6f})  ({b.p:.6f}, {b.q:.6f})  {gap:.2e}")


if __name__ == "__main__":
    main()
