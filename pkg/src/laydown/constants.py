"""Hypocoercivity constant chain: Lambda, C_V, C_3, C_4, zeta, gamma_1 and the rate."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import potential as pot
from . import weight as wt
from .errors import InfeasibleError, NumericalError, PreconditionError
from .kinetic.grid import Grid, GridCfg, make_grid


# --------------------------------------------------------------------------
# closed-form chain


def gamma2_mac(Lambda):
    return (Lambda / 2) / (1 + Lambda / 2)


def lambda1(C_V):
    return (C_V / math.sqrt(2) + math.sqrt(2)) / 2


def lambda2(C_V, D):
    return C_V + D / 2


def _den(g2, l2):
    return g2**2 + 2 * g2 + l2**2


def eps1(D, g2, l2):
    return 2 * D * g2 / _den(g2, l2)


def xi(kappa, D, g2, l1, l2):
    return D * g2**2 / (2 * _den(g2, l2)) - kappa * l1


def kappa_max(D, g2, l1, l2, u):
    return 2 * D * g2**2 / ((4 * l1 + u) * _den(g2, l2))


@dataclass
class HypoConstants:
    kappa: float
    D: float
    Lambda: float
    C_V: float
    lambda1: float
    lambda2: float
    gamma2_mac: float
    eps1: float
    xi: float
    u: float | None
    gamma1: float
    gamma2_gronwall: float
    lambda_kappa: float
    kappa_max: float
    C3: float | None = None
    C4: float | None = None
    log_C4: float | None = None
    zeta: float | None = None
    R: float | None = None
    weight: wt.WeightParams | None = field(default=None, repr=False)

    @property
    def prefactor(self):
        """sqrt((1 + eps1)/(1 - eps1)), the norm-equivalence constant."""
        return math.sqrt((1 + self.eps1) / (1 - self.eps1))

    def to_dict(self):
        d = asdict(self)
        d["weight"] = None if self.weight is None else self.weight.to_dict()
        d["prefactor"] = self.prefactor
        return d


# --------------------------------------------------------------------------
# Lambda and C_V from the discrete weighted operators


def _symmetric_stiffness(grid: Grid):
    s = 1.0 / np.sqrt(grid.rho.ravel())
    S = sp.diags(s)
    return (S @ grid.stiffness() @ S).tocsc(), np.sqrt(grid.rho.ravel())


def estimate_spectral_gap(p: pot.PotentialSpec, grid_cfg: GridCfg = GridCfg(), tol=1e-10,
                          maxiter=500, shift=0.05, block=8, seed=0, grid: Grid | None = None):
    """Smallest nonzero eigenvalue of u -> -e^V div(e^{-V} grad u) (no-flux box).

    Block inverse iteration with Rayleigh-Ritz on the symmetrised stiffness
    matrix; the constant mode (sqrt(rho) after symmetrisation) is projected out
    at every step. The block absorbs the near-degenerate cluster formed by the
    two lowest modes and their sublattice copies.
    """
    grid = make_grid(p, grid_cfg) if grid is None else grid
    Ks, v0 = _symmetric_stiffness(grid)
    v0 = v0 / np.linalg.norm(v0)
    lu = spla.splu((Ks + shift * sp.identity(Ks.shape[0])).tocsc())
    X = np.random.default_rng(seed).standard_normal((Ks.shape[0], block))
    trace = []
    prev = None
    for it in range(maxiter):
        X -= np.outer(v0, v0 @ X)
        Y = lu.solve(X)
        Y -= np.outer(v0, v0 @ Y)
        Y, _ = np.linalg.qr(Y)
        KY = Ks @ Y
        theta, S = np.linalg.eigh(Y.T @ KY)
        X = Y @ S
        lam = float(theta[0])
        res = float(np.linalg.norm(KY @ S[:, 0] - lam * X[:, 0]))
        trace.append((lam, res))
        if res <= tol * max(abs(lam), 1.0) or (prev is not None and abs(lam - prev) <= tol * abs(lam)):
            return lam
        prev = lam
    raise NumericalError(f"inverse iteration did not converge in {maxiter} steps", history=trace)


def _hessian_norm(grid: Grid, u):
    Gx, Gy = grid.gradient_matrices()
    flat = u.ravel()
    gx, gy = Gx @ flat, Gy @ flat
    parts = [Gx @ gx, Gy @ gx, Gx @ gy, Gy @ gy]
    w = grid.rho.ravel() * grid.cell_volume
    return math.sqrt(sum(float(np.sum(w * q * q)) for q in parts))


def _rhs_norm(grid: Grid, r):
    return math.sqrt(float(np.sum(r * r / grid.rho)) * grid.cell_volume)


def estimate_elliptic_constant(p: pot.PotentialSpec, grid_cfg: GridCfg = GridCfg(), trials=8,
                               power_steps=0, seed=0, grid: Grid | None = None):
    """max over random right-hand sides of ||grad^2 u||_{L^2(e^-V)} / ||Pi f||_0.

    Trials are white-noise multiples of e^{-V}. With ``power_steps`` > 0 each
    trial is sharpened by power iteration on Pi f -> grad^2 u; that picks up
    cells at the box edge where the stencils are under-resolved, so it is off
    by default.
    """
    grid = make_grid(p, grid_cfg) if grid is None else grid
    rng = np.random.default_rng(seed)
    Gx, Gy = grid.gradient_matrices()
    w = grid.rho.ravel() * grid.cell_volume
    n = grid.rho.size
    rho = grid.rho.ravel()

    def forward(z):
        # z are coordinates in which ||Pi f||_0 is Euclidean: r = sqrt(rho/vol) z
        r = np.sqrt(rho / grid.cell_volume) * z
        u = grid.elliptic_solve(r.reshape(grid.rho.shape)).ravel()
        gx, gy = Gx @ u, Gy @ u
        sw = np.sqrt(w)
        return [sw * (Gx @ gx), sw * (Gy @ gx), sw * (Gx @ gy), sw * (Gy @ gy)]

    def adjoint(parts):
        sw = np.sqrt(w)
        a = Gx.T @ (Gx.T @ (sw * parts[0])) + Gx.T @ (Gy.T @ (sw * parts[1])) \
            + Gy.T @ (Gx.T @ (sw * parts[2])) + Gy.T @ (Gy.T @ (sw * parts[3]))
        # the elliptic operator is symmetric, so its inverse is its own adjoint
        v = grid.elliptic_solve(a.reshape(grid.rho.shape)).ravel()
        return np.sqrt(rho / grid.cell_volume) * v

    best = 0.0
    for _ in range(trials):
        z = rng.standard_normal(n)
        for _ in range(power_steps + 1):
            z /= np.linalg.norm(z)
            parts = forward(z)
            ratio = math.sqrt(sum(float(q @ q) for q in parts))
            if not math.isfinite(ratio):
                raise NumericalError("elliptic solve produced non-finite values")
            best = max(best, ratio)
            z = adjoint(parts)
    return best


def hessian_ratio(grid: Grid, rhs):
    """||grad^2 u|| / ||rhs||_0 for a single right-hand side."""
    u = grid.elliptic_solve(rhs)
    nr = _rhs_norm(grid, rhs)
    return 0.0 if nr == 0 else _hessian_norm(grid, u) / nr


# --------------------------------------------------------------------------
# C_3 and C_4 by polar sampling (log space, the values span many decades)


def _polar(r, n_dir, n_alpha):
    phi = np.linspace(0.0, 2 * np.pi, n_dir, endpoint=False)
    alpha = np.linspace(0.0, 2 * np.pi, n_alpha, endpoint=False)
    R_, P_, A_ = np.meshgrid(r, phi, alpha, indexing="ij")
    x = np.stack([R_ * np.cos(P_), R_ * np.sin(P_)], axis=-1)
    return x, A_


def sup_C3(w: wt.WeightParams, p: pot.PotentialSpec, r_max, n_r=200, n_dir=16, n_alpha=64):
    """log sup |grad V| e^V / g, with the tail check on the outermost radii."""
    r = np.geomspace(1e-3, r_max, n_r)
    x, a = _polar(r, n_dir, n_alpha)
    V, grad, _ = pot.eval_potential(p, x)
    logq = np.log(np.linalg.norm(grad, axis=-1)) + V - wt.log_weight(w, p, x, a)
    per_r = logq.reshape(n_r, -1).max(axis=1)
    i = int(np.argmax(per_r))
    tail = per_r[-3:]
    if i >= n_r - 3 or not np.all(np.diff(tail) < 0):
        raise NumericalError("C3 supremum not attained inside the sampled range", history=per_r.tolist())
    return float(per_r[i]), float(r[i])


def sup_log_C4(w: wt.WeightParams, p: pot.PotentialSpec, R, n_r=200, n_dir=16, n_alpha=64):
    """log sup_{|x| <= R} |L(g) + c g| e^{-V}."""
    r = np.linspace(1e-3, R, n_r)
    x, a = _polar(r, n_dir, n_alpha)
    ratio = wt.eval_weight_generator(w, p, x, a)
    V = pot.value(p, x)
    with np.errstate(divide="ignore"):
        logv = np.log(np.abs(ratio + w.c)) + wt.log_weight(w, p, x, a) - V
    return float(np.max(logv))


# --------------------------------------------------------------------------
# assembly


def _optimal_zeta(xi_k, kappa, C3, C4, c):
    """Intersection of 4 xi - kappa zeta C4 (decreasing) and c - C3/zeta (increasing)."""
    lo = C3 / c
    hi = 4 * xi_k / (kappa * C4)
    if not lo < hi:
        raise InfeasibleError(
            f"empty zeta interval: need zeta > C3/c = {lo:.4g} and zeta < 4 xi/(kappa C4) = {hi:.4g}"
        )

    def gap(z):
        return (4 * xi_k - kappa * z * C4) - (c - C3 / z)

    a, b = lo, hi
    if gap(a) <= 0:
        return a
    for _ in range(400):
        m = 0.5 * (a + b)
        if gap(m) > 0:
            a = m
        else:
            b = m
        if b - a <= 1e-10 * b:
            break
    return 0.5 * (a + b)


def gamma1_of_zeta(hc: HypoConstants, zeta):
    z = np.asarray(zeta, dtype=float)
    return np.minimum(4 * hc.xi - hc.kappa * z * hc.C4, hc.weight.c - hc.C3 / z) / (1 + hc.eps1)


def hypo_constants(p: pot.PotentialSpec, D, kappa, Lambda, C_V, w: wt.WeightParams | None = None,
                   search: wt.SearchCfg = wt.SearchCfg(), c3_radius=None) -> HypoConstants:
    if not 0 <= kappa < 1:
        raise PreconditionError(f"kappa must lie in [0, 1), got {kappa}")
    if not (Lambda > 0 and C_V > 0 and D > 0):
        raise PreconditionError("Lambda, C_V and D must be positive")
    l1, l2, g2 = lambda1(C_V), lambda2(C_V, D), gamma2_mac(Lambda)
    e1 = eps1(D, g2, l2)
    if not e1 < min(D, 1.0):
        raise NumericalError(f"eps1={e1} violates eps1 < min(D, 1)")
    x_k = xi(kappa, D, g2, l1, l2)
    base = dict(kappa=kappa, D=D, Lambda=Lambda, C_V=C_V, lambda1=l1, lambda2=l2,
                gamma2_mac=g2, eps1=e1, xi=x_k, gamma2_gronwall=e1 * g2)

    if p.gradient_bounded:
        u = p.grad_inf_norm
        kmax = kappa_max(D, g2, l1, l2, u)
        num = 4 * x_k - kappa * u
        if kappa >= kmax or num <= 0:
            raise InfeasibleError(f"kappa={kappa} >= kappa_max={kmax:.4g}: 4 xi - kappa u <= 0")
        g1 = num / (1 + e1)
        return HypoConstants(u=u, gamma1=g1, lambda_kappa=g1 / 2, kappa_max=kmax, **base)

    # unbounded gradient: the weight g enters through zeta
    w = wt.weight_params(kappa, D) if w is None else w
    if x_k <= 0:
        raise InfeasibleError(f"xi(kappa) = {x_k:.4g} <= 0")
    lyap = wt.verify_lyapunov(w, p, search)
    R = lyap.R
    r_c3 = c3_radius if c3_radius is not None else max(4 * R, 20.0)
    logC3, _ = sup_C3(w, p, r_c3)
    C3 = math.exp(logC3)
    logC4 = sup_log_C4(w, p, R)
    C4 = math.exp(logC4) if logC4 < 700 else math.inf
    if kappa == 0:
        # gamma_1 does not involve zeta; the smallest admissible zeta sizes u
        g1 = 4 * x_k / (1 + e1)
        zeta = C3 / w.c
        u = zeta * C4
        return HypoConstants(u=u, gamma1=g1, lambda_kappa=g1 / 2,
                             kappa_max=kappa_max(D, g2, l1, l2, u), C3=C3, C4=C4, log_C4=logC4,
                             zeta=None, R=R, weight=w, **base)
    if not math.isfinite(C4):
        raise InfeasibleError(f"C4(R) = exp({logC4:.1f}) overflows: no zeta gives gamma1 > 0 at kappa={kappa}")
    zeta = _optimal_zeta(x_k, kappa, C3, C4, w.c)
    u = zeta * C4
    g1 = min(4 * x_k - kappa * u, w.c - C3 / zeta) / (1 + e1)
    kmax = kappa_max(D, g2, l1, l2, u)
    if g1 <= 0:
        raise InfeasibleError(f"gamma1 = {g1:.4g} <= 0 at the optimal zeta")
    return HypoConstants(u=u, gamma1=g1, lambda_kappa=g1 / 2, kappa_max=kmax, C3=C3, C4=C4,
                         log_C4=logC4, zeta=zeta, R=R, weight=w, **base)


def infeasibility_report(p: pot.PotentialSpec, D, kappa, Lambda, C_V, search: wt.SearchCfg = wt.SearchCfg()):
    """Quantities behind an unbounded-case infeasibility: C3, log C4 and the kappa bound they imply."""
    w = wt.weight_params(kappa, D)
    l1, l2, g2 = lambda1(C_V), lambda2(C_V, D), gamma2_mac(Lambda)
    x_k = xi(kappa, D, g2, l1, l2)
    lyap = wt.verify_lyapunov(w, p, search)
    logC3, _ = sup_C3(w, p, max(4 * lyap.R, 20.0))
    logC4 = sup_log_C4(w, p, lyap.R)
    # feasibility needs kappa < 4 xi c / (C3 C4)
    log_bound = math.log(max(4 * x_k * w.c, 1e-300)) - logC3 - logC4
    return {"kappa": kappa, "R": lyap.R, "log_C3": logC3, "log_C4": logC4, "xi": x_k, "c": w.c,
            "log_kappa_bound": log_bound}
