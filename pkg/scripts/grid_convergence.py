"""Grid refinement study: equilibrium residual of point-sampled e^{-V} and the estimated Lambda, C_V.

    python scripts/grid_convergence.py --out results/grid_convergence.csv
"""
import argparse
import math
import time

import numpy as np

from laydown import constants as cst
from laydown import potential as pot
from laydown.config import RunConfig
from laydown.io import metadata, write_csv
from laydown.kinetic import FokkerPlanck, GridCfg, make_grid

GRIDS = ((32, 16), (64, 32), (128, 64), (256, 64))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=float, default=2.0, help="family exponent")
    ap.add_argument("--out", default="results/grid_convergence.csv")
    args = ap.parse_args()
    p = pot.normalize_potential(pot.PotentialSpec.family(1.0, args.s))
    rows, prev = [], None
    for nx, na in GRIDS:
        t0 = time.perf_counter()
        g = make_grid(p, GridCfg(nx, nx, na))
        fp = FokkerPlanck(g, 1.0, 0.0)
        F = np.repeat(np.exp(-pot.value(p, g.points()))[:, :, None], na, axis=2)
        res = fp.norm0(fp.apply_generator(F))
        lam = cst.estimate_spectral_gap(p, grid=g)
        cv = cst.estimate_elliptic_constant(p, grid=g)
        order = math.log2(prev / res) if prev else float("nan")
        prev = res
        rows.append([nx, na, res, order, lam, cv, time.perf_counter() - t0])
        print(f"{nx:4d}x{nx}x{na:<3d} residual {res:.3e} order {order:.3f} Lambda {lam:.5f} C_V {cv:.4f}")
    meta = metadata(RunConfig(potential=p), "grid_convergence")
    write_csv(args.out, ["nx", "nalpha", "residual", "order", "Lambda", "C_V", "seconds"], rows, meta)


if __name__ == "__main__":
    main()
