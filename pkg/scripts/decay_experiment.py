"""Measured relaxation rate against the certified rate lambda_kappa for several belt speeds.

    python scripts/decay_experiment.py --potential quadratic --kappa 0 0.01 0.02
"""
import argparse

import numpy as np

from laydown import constants as cst
from laydown import potential as pot
from laydown.errors import InfeasibleError
from laydown.config import RunConfig
from laydown.io import metadata, write_csv
from laydown.kinetic import FokkerPlanck, GridCfg, make_grid
from laydown.kinetic.solver import measure_decay


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--potential", choices=("quadratic", "family"), default="family")
    ap.add_argument("--s", type=float, default=2.0)
    ap.add_argument("--kappa", type=float, nargs="+", default=[0.0, 0.01, 0.02, 0.05])
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--nalpha", type=int, default=32)
    ap.add_argument("--out", default="results/decay_experiment.csv")
    args = ap.parse_args()
    spec = pot.PotentialSpec.quadratic(1.0) if args.potential == "quadratic" \
        else pot.PotentialSpec.family(1.0, args.s)
    p = pot.normalize_potential(spec)
    g = make_grid(p, GridCfg(args.nx, args.nx, args.nalpha))
    lam = cst.estimate_spectral_gap(p, grid=g)
    cv = cst.estimate_elliptic_constant(p, grid=g)
    print(f"Lambda={lam:.5f} C_V={cv:.4f}")
    X = g.points()
    f0 = g.equilibrium() * (1 + 0.5 * np.tanh(X[..., 0]))[:, :, None]
    f0 /= g.mass(f0)
    rows = []
    for kappa in args.kappa:
        fp = FokkerPlanck(g, 1.0, kappa)
        F = g.equilibrium() if kappa == 0 else fp.solve_stationary(g.equilibrium())
        F = F / g.mass(F)
        res = measure_decay(fp, f0, F, horizon=40.0, every=5)
        try:
            hc = cst.hypo_constants(p, 1.0, kappa, lam, cv)
            lk, kmax = hc.lambda_kappa, hc.kappa_max
        except InfeasibleError as e:
            lk, kmax = float("nan"), float("nan")
            print(f"  kappa={kappa}: {e}")
        rows.append([kappa, res.lambda_meas, res.r_squared, lk, kmax])
        print(f"kappa={kappa:<6g} lambda_meas={res.lambda_meas:.4f} R2={res.r_squared:.4f} "
              f"lambda_kappa={lk:.4g} kappa_max={kmax:.4g}")
    meta = metadata(RunConfig(potential=p, grid=g.cfg), "decay_experiment")
    write_csv(args.out, ["kappa", "lambda_meas", "r_squared", "lambda_kappa", "kappa_max"], rows, meta)


if __name__ == "__main__":
    main()
