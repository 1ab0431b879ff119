"""TV distance between the SDE ensemble and the PDE stationary state as N grows.

    python scripts/sde_scaling.py --kappa 0.05 --threads 4
"""
import argparse

import numpy as np

from laydown import potential as pot
from laydown import sde
from laydown.config import RunConfig
from laydown.io import metadata, write_csv
from laydown.kinetic import FokkerPlanck, GridCfg, make_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappa", type=float, default=0.0)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--seed", type=int, default=12)
    ap.add_argument("--n", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--out", default="results/sde_scaling.csv")
    args = ap.parse_args()
    p = pot.normalize_potential(pot.PotentialSpec.family(1.0, 2.0))
    g = make_grid(p, GridCfg(64, 64, 32))
    F = g.equilibrium()
    if args.kappa > 0:
        F = FokkerPlanck(g, 1.0, args.kappa).solve_stationary(F, tol=1e-8)
    ref = sde.field_to_histogram(F / g.mass(F), g, (4, 4, 4))
    rows = []
    for n in args.n:
        cfg = sde.SdeConfig(kappa=args.kappa, n_particles=n, horizon=10.0, seed=args.seed)
        e = sde.simulate_ensemble(cfg, p, threads=args.threads)
        emp = sde.empirical_density(e, g, (4, 4, 4))
        l1, tv = sde.compare_distributions(emp, ref)
        rows.append([n, tv, emp.outside])
        print(f"N={n:>9d} TV={tv:.5f} outside={emp.outside}")
    slope = np.polyfit(np.log([r[0] for r in rows]), np.log([r[1] for r in rows]), 1)[0]
    print(f"slope of log TV in log N: {slope:.3f}")
    meta = metadata(RunConfig(potential=p, kappa=args.kappa, grid=GridCfg(64, 64, 32), seed=args.seed), "sde_scaling", args.threads)
    write_csv(args.out, ["n_particles", "tv", "outside"], rows, meta)


if __name__ == "__main__":
    main()
