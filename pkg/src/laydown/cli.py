"""Command-line entry point: ``laydown <subcommand> [--config FILE] ...``.

Exit codes: 0 success, 1 configuration error, 2 violated precondition
(e.g. kappa above the admissible bound), 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import constants as cst
from . import io
from . import potential as pot
from . import sde
from . import weight as wt
from .config import RunConfig, load_config
from .errors import ConfigError, LaydownError, PreconditionError
from .kinetic import FokkerPlanck, make_grid
from .kinetic.solver import measure_decay

log = logging.getLogger("laydown")

COMMANDS = ("check-potential", "constants", "verify-weight", "stationary", "evolve", "decay",
            "sde", "full-report")

DEFAULTS_HELP = """\
config defaults: potential = {kind = "family", K = 1.0, s = 2.0}; kappa = 0; D = 1;
grid = {nx = 128, ny = 128, nalpha = 64}; tol.stationary = 1e-8; seed = 0.
Environment variables LAYDOWN_<KEY> (nested: LAYDOWN_GRID__NX) override file values."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    ap = _Parser(prog="laydown", description="Kinetic fibre lay-down: constants, PDE and SDE runs.",
                 epilog=DEFAULTS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, default=None, help="TOML or JSON run configuration")
    ap.add_argument("--out", type=Path, default=None, help="output directory (default from config)")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--tol", type=float, default=None, help="stationarity tolerance in ||L f||_0")
    ap.add_argument("--field-format", choices=("npz", "csv"), default="npz")
    ap.add_argument("--zeta-csv", action="store_true", help="also write gamma1(zeta) samples")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


class Context:
    """Lazily computed pieces shared between subcommands of one run."""

    def __init__(self, cfg: RunConfig, out: Path, threads: int, args):
        self.cfg, self.out, self.threads, self.args = cfg, out, threads, args
        self._p = self._grid = self._hc = self._F = None
        self._lam_cv = None

    def meta(self, command):
        return io.metadata(self.cfg, command, self.threads)

    @property
    def potential(self):
        if self._p is None:
            self._p = pot.normalize_potential(
                self.cfg.potential, pot.QuadratureCfg(tol=self.cfg.tol.quadrature))
        return self._p

    @property
    def grid(self):
        if self._grid is None:
            self._grid = make_grid(self.potential, self.cfg.grid)
        return self._grid

    def lambda_cv(self):
        if self._lam_cv is None:
            g = self.grid
            self._lam_cv = (cst.estimate_spectral_gap(self.potential, grid=g),
                            cst.estimate_elliptic_constant(self.potential, grid=g, seed=self.cfg.seed))
        return self._lam_cv

    def constants(self):
        if self._hc is None:
            lam, cv = self.lambda_cv()
            self._hc = cst.hypo_constants(self.potential, self.cfg.D, self.cfg.kappa, lam, cv)
        return self._hc

    def solver(self, hc=None):
        zeta = hc.zeta if hc is not None else None
        w = hc.weight if hc is not None else None
        return FokkerPlanck(self.grid, self.cfg.D, self.cfg.kappa, zeta=zeta, weight=w)

    def stationary(self):
        if self._F is None:
            fp = self.solver()
            f0 = self.grid.equilibrium()
            self._F = fp.solve_stationary(f0, tol=self.cfg.tol.stationary, tmax=self.cfg.tol.tmax)
        return self._F


# --------------------------------------------------------------------------
# subcommands; each returns a JSON-able result dict


def cmd_check_potential(ctx: Context):
    p = ctx.potential
    rep = pot.check_hypotheses(p, quad=pot.QuadratureCfg(tol=ctx.cfg.tol.quadrature))
    r = rep.h5_ratios
    io.write_csv(ctx.out / "growth_ratios.csv", ["radius", "grad_over_V", "hess_over_grad"],
                 zip(r["radius"], r["grad_over_V"], r["hess_over_grad"]), ctx.meta("check-potential"))
    res = {"potential": p.to_dict(), "report": rep.to_dict()}
    io.write_json(ctx.out / "check_potential.json", res, ctx.meta("check-potential"))
    return res


def cmd_constants(ctx: Context):
    lam, cv = ctx.lambda_cv()
    hc = ctx.constants()
    res = {"Lambda": lam, "C_V": cv, "constants": hc.to_dict()}
    if ctx.args is not None and ctx.args.zeta_csv and hc.zeta is not None:
        zs = hc.zeta * np.geomspace(0.25, 4.0, 81)
        io.write_csv(ctx.out / "gamma1_zeta.csv", ["zeta", "gamma1"],
                     zip(zs, cst.gamma1_of_zeta(hc, zs)), ctx.meta("constants"))
    io.write_json(ctx.out / "constants.json", res, ctx.meta("constants"))
    return res


def cmd_verify_weight(ctx: Context):
    p = ctx.potential
    w = wt.weight_params(ctx.cfg.kappa, ctx.cfg.D)
    rep = wt.verify_lyapunov(w, p)
    io.write_csv(ctx.out / "lyapunov_margin.csv", ["radius", "worst_margin"],
                 zip(rep.radii, rep.worst_margin), ctx.meta("verify-weight"))
    res = {"weight": w.to_dict(), "lyapunov": rep.to_dict()}
    io.write_json(ctx.out / "verify_weight.json", res, ctx.meta("verify-weight"))
    return res


def cmd_stationary(ctx: Context):
    t0 = time.time()
    F = ctx.stationary()
    fp = ctx.solver()
    F0 = ctx.grid.equilibrium()
    M, n0, nk = fp.norms_and_mass(F)
    res = {"mass": M, "norm0": n0, "residual": fp.residual(F), "min": float(F.min()),
           "distance_to_F0": fp.norm0(F - F0), "seconds": time.time() - t0,
           "grid": dataclasses.asdict(ctx.cfg.grid), "L": ctx.grid.L}
    path = io.write_field(ctx.out / "stationary", ctx.grid, F, ctx.meta("stationary"),
                          fmt=ctx.args.field_format if ctx.args is not None else "npz")
    res["field"] = str(path)
    io.write_json(ctx.out / "stationary.json", res, ctx.meta("stationary"))
    return res


def _initial_datum(grid, seed):
    """Unit-mass positive datum: e^{-V} times a random smooth tilt in x and alpha."""
    rng = np.random.default_rng(seed)
    X = grid.points()
    a = rng.normal(size=4)
    tilt = 1.0 + 0.5 * np.tanh(a[0] * X[..., 0] + a[1] * X[..., 1])[:, :, None] \
        + 0.4 * np.cos(grid.alpha - a[2])[None, None, :] * np.tanh(a[3] + X[..., 0])[:, :, None]
    f = grid.rho[:, :, None] * tilt
    return f / grid.mass(f)


def _decay_run(ctx: Context, fit: bool, command: str):
    hc = None
    try:
        hc = ctx.constants()
    except PreconditionError as e:
        if fit:
            raise
        log.warning("constants unavailable, series without G: %s", e)
    fp = ctx.solver(hc)
    F = ctx.stationary()
    f0 = _initial_datum(ctx.grid, ctx.cfg.seed)
    dc = ctx.cfg.decay
    if fit:
        dr = measure_decay(fp, f0, F, dc.horizon, hc=hc, every=dc.every,
                           stationary_tol=ctx.cfg.tol.stationary)
        rows = dr.series
    else:
        rows = []
        M = ctx.grid.mass(f0)

        def rec(t, f):
            row = {"t": t, "E": fp.normk(f - M * F)}
            if hc is not None:
                G = fp.entropy(f, hc.eps1)
                row.update(G=G, dGdt=fp.dissipation_terms(f, hc)["dGdt"],
                           rhs_gronwall=-hc.gamma1 * G + hc.gamma2_gronwall * M**2)
            rows.append(row)

        fp.evolve(f0, dc.horizon, every=dc.every, callback=rec)
        dr = None
    keys = io.SERIES_HEADER
    io.write_csv(ctx.out / f"{command}_series.csv", keys,
                 ([r.get(k, float("nan")) for k in keys] for r in rows), ctx.meta(command))
    res = {"n_records": len(rows)}
    if hc is not None:
        res["lambda_kappa"] = hc.lambda_kappa
        res["prefactor_bound"] = hc.prefactor
        viol = [r["t"] for r in rows if r["dGdt"] > r["rhs_gronwall"]]
        res["gronwall_violations"] = len(viol)
    if dr is not None:
        res.update(lambda_meas=dr.lambda_meas, r_squared=dr.r_squared, window=dr.window,
                   outcome=dr.outcome)
        if hc is not None and dr.lambda_meas is not None:
            res["rate_bound_holds"] = dr.lambda_meas >= hc.lambda_kappa
            E = np.array([r["E"] for r in rows])
            t = np.array([r["t"] for r in rows])
            res["prefactor_measured"] = float(np.max(E / (E[0] * np.exp(-hc.lambda_kappa * t))))
    io.write_json(ctx.out / f"{command}.json", res, ctx.meta(command))
    return res


def cmd_evolve(ctx: Context):
    return _decay_run(ctx, fit=False, command="evolve")


def cmd_decay(ctx: Context):
    return _decay_run(ctx, fit=True, command="decay")


def cmd_sde(ctx: Context):
    cfg = ctx.cfg
    t0 = time.time()
    ens = sde.simulate_ensemble(cfg.sde_config(), ctx.potential, threads=ctx.threads)
    meta = ctx.meta("sde")
    io.write_csv(ctx.out / "sde_final.csv", ["x", "y", "alpha"],
                 zip(ens.x[:, 0], ens.x[:, 1], ens.alpha), meta)
    co = tuple(int(c) for c in cfg.sde.coarsen)
    emp = sde.empirical_density(ens, ctx.grid, co)
    F = ctx.stationary()
    ref = sde.field_to_histogram(F, ctx.grid, co)
    ref.mass = ref.mass / ref.mass.sum()
    l1, tv = sde.compare_distributions(emp, ref)
    mx, my, ma = emp.mass.shape
    I, J, K = np.meshgrid(np.arange(mx), np.arange(my), np.arange(ma), indexing="ij")
    L = ctx.grid.L
    xc = -L + (2 * L / mx) * (I + 0.5)
    yc = -L + (2 * L / my) * (J + 0.5)
    ac = 2 * np.pi * K * co[2] / ctx.grid.nalpha
    io.write_csv(ctx.out / "sde_histogram.csv", io.FIELD_HEADER,
                 zip(I.ravel(), J.ravel(), K.ravel(), xc.ravel(), yc.ravel(), ac.ravel(),
                     emp.mass.ravel()), meta)
    res = {"n_particles": cfg.sde.n_particles, "l1": l1, "tv": tv, "outside": emp.outside,
           "seconds": time.time() - t0, "coarsen": list(co)}
    io.write_json(ctx.out / "sde.json", res, meta)
    return res


def cmd_full_report(ctx: Context):
    out = {"check_potential": cmd_check_potential(ctx), "constants": None, "verify_weight": None}
    failures = {}
    try:
        out["constants"] = cmd_constants(ctx)
    except PreconditionError as e:
        failures["constants"] = str(e)
    if not ctx.potential.gradient_bounded:
        try:
            out["verify_weight"] = cmd_verify_weight(ctx)
        except PreconditionError as e:
            failures["verify_weight"] = str(e)
    out["stationary"] = cmd_stationary(ctx)
    try:
        out["decay"] = cmd_decay(ctx)
    except PreconditionError as e:
        failures["decay"] = str(e)
    out["sde"] = cmd_sde(ctx)
    out["failures"] = failures
    io.write_json(ctx.out / "full_report.json", out, ctx.meta("full-report"))
    return out


HANDLERS = {
    "check-potential": cmd_check_potential, "constants": cmd_constants,
    "verify-weight": cmd_verify_weight, "stationary": cmd_stationary, "evolve": cmd_evolve,
    "decay": cmd_decay, "sde": cmd_sde, "full-report": cmd_full_report,
}


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config)
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            updates["tol"] = dataclasses.replace(cfg.tol, stationary=args.tol)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = dataclasses.replace(cfg, **updates)
        out = args.out if args.out is not None else Path(cfg.out)
        ctx = Context(cfg, out, args.threads, args)
        res = HANDLERS[args.command](ctx)
        print(f"{args.command}: ok, results in {out}")
        if args.verbose:
            log.info("%s", res)
        return 0
    except LaydownError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
