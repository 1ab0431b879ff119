"""Discrete Fokker-Planck generator L = Q - T + P and its time integration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .. import weight as wt
from ..errors import ConfigError, NumericalError
from .alpha_solve import AlphaImplicit
from .grid import Grid

# ARS(2,3,3) IMEX Runge-Kutta; both tableaux share abscissae and weights, so a
# zero of the full generator is a fixed point of the step.
_G = (3.0 + math.sqrt(3.0)) / 6.0
_EXPLICIT_STABILITY = math.sqrt(3.0)  # imaginary-axis reach of the explicit part


class FokkerPlanck:
    """Semi-discrete kinetic Fokker-Planck operator on a :class:`Grid`.

    ``zeta`` and ``weight`` define the measure e^V + zeta kappa g; leave them
    unset for the plain e^V measure.
    """

    def __init__(self, grid: Grid, D=1.0, kappa=0.0, zeta=None, weight: wt.WeightParams | None = None):
        if not D > 0:
            raise ConfigError(f"D must be positive, got {D}")
        if not 0 <= kappa < 1:
            raise ConfigError(f"kappa must lie in [0, 1), got {kappa}")
        self.grid = grid
        self.D = float(D)
        self.kappa = float(kappa)
        na = grid.nalpha
        k = np.arange(na // 2 + 1, dtype=float)
        ik = 1j * k
        ik[-1] = 0.0  # Nyquist mode has no real derivative
        self._ik = ik
        self._k2 = k**2
        ca, sa = grid.tau()
        self._cos, self._sin = ca, sa
        G0, G1 = grid.G
        self._b = -sa * G0[:, :, None] + ca * G1[:, :, None]  # tau_perp . grad_h V
        self._solvers = {}
        self.zeta = zeta
        self.weight = weight
        self.g = None
        self.mu = np.broadcast_to(grid.eV[:, :, None], grid.shape)
        if zeta is not None and weight is not None and self.kappa > 0:
            self.g = weight_on_grid(weight, grid)
            self.mu = grid.eV[:, :, None] + zeta * self.kappa * self.g

    # ---- alpha calculus ---------------------------------------------------
    def dalpha(self, f):
        return np.fft.irfft(self._ik * np.fft.rfft(f, axis=-1), n=self.grid.nalpha, axis=-1)

    def dalpha2(self, f):
        return np.fft.irfft(-self._k2 * np.fft.rfft(f, axis=-1), n=self.grid.nalpha, axis=-1)

    # ---- operators --------------------------------------------------------
    def Q(self, f):
        return self.D * self.dalpha2(f)

    def T_x(self, f):
        g = self.grid
        return self._cos * g.dflux(f, 0) + self._sin * g.dflux(f, 1)

    def T_alpha(self, f):
        b = self._b
        return -0.5 * (b * self.dalpha(f) + self.dalpha(b * f))

    def T(self, f):
        return self.T_x(f) + self.T_alpha(f)

    def P(self, f):
        if self.kappa == 0:
            return np.zeros_like(f)
        g = self.grid
        return -self.kappa * (g.dflux(f, 0) - 0.5 * g.G[0][:, :, None] * f)

    def P_adjoint(self, f):
        """Adjoint of P in <.,.>_0: -P f + kappa (d_1 V)_h f."""
        if self.kappa == 0:
            return np.zeros_like(f)
        return -self.P(f) + self.kappa * self.grid.G[0][:, :, None] * f

    def explicit_part(self, f):
        """x-transport -T_x + P, advanced explicitly."""
        out = -self.T_x(f)
        if self.kappa:
            out += self.P(f)
        return out

    def implicit_part(self, f):
        """Q - T_alpha: local in x, advanced implicitly."""
        return self.Q(f) - self.T_alpha(f)

    def apply_generator(self, f):
        return self.implicit_part(f) + self.explicit_part(f)

    # ---- projections and norms --------------------------------------------
    def project(self, f):
        """Pi f: the alpha average, broadcast back to a field."""
        return np.broadcast_to(f.mean(axis=-1, keepdims=True), f.shape)

    def inner0(self, f, h):
        g = self.grid
        return float(np.sum(f * h * g.eV[:, :, None])) * g.cell_volume / g.nalpha

    def norm0(self, f):
        return math.sqrt(max(self.inner0(f, f), 0.0))

    def normk(self, f):
        g = self.grid
        return math.sqrt(float(np.sum(f * f * self.mu)) * g.cell_volume / g.nalpha)

    def norms_and_mass(self, f):
        return self.grid.mass(f), self.norm0(f), self.normk(f)

    # ---- auxiliary operator A = (1 + (T Pi)^* T Pi)^{-1} (T Pi)^* ----------
    def _tpi_of_xfield(self, u):
        """T Pi applied to the equilibrium-like field rho u (u an x-field)."""
        g = self.grid
        gx, gy = g.grad_x(u, 0), g.grad_x(u, 1)
        return g.rho[:, :, None] * (self._cos * gx[:, :, None] + self._sin * gy[:, :, None])

    def auxiliary_potential(self, f):
        """u_h solving rho u - 1/2 div_h(rho grad_h u) = Pi f."""
        return self.grid.elliptic_solve(f.mean(axis=-1))

    def A_star(self, f):
        return self._tpi_of_xfield(self.auxiliary_potential(f))

    def A(self, f):
        g = self.grid
        jx = np.mean(self._cos * f, axis=-1).ravel()
        jy = np.mean(self._sin * f, axis=-1).ravel()
        Gx, Gy = g.gradient_matrices()
        w = g.elliptic_solve((Gx.T @ jx + Gy.T @ jy).reshape(g.rho.shape))
        return np.repeat((g.rho * w)[:, :, None], g.nalpha, axis=2)

    def inner_af(self, f):
        """<A f, f>_0 computed as <f, A^* f>_0."""
        return self.inner0(f, self.A_star(f))

    def apply_auxiliary(self, f, eps1):
        u = self.auxiliary_potential(f)
        inner = self.inner0(f, self._tpi_of_xfield(u))
        G = 0.5 * self.normk(f) ** 2 + eps1 * inner
        return u, inner, G

    def entropy(self, f, eps1):
        return self.apply_auxiliary(f, eps1)[2]

    def dissipation_terms(self, f, hc):
        """The four dissipation functionals and their sum dG/dt."""
        e1 = hc.eps1
        Pif = self.project(f)
        perp = f - Pif
        Qf = self.Q(f)
        Af = self.A(f)
        D0 = (self.inner0(Qf, f)
              - e1 * self.inner0(self.A(self.T(Pif)), Pif)
              - e1 * self.inner0(self.A(self.T(perp)), Pif)
              + e1 * self.inner0(self.T(Af), perp)
              + e1 * self.inner0(self.A(Qf), Pif))
        if self.kappa:
            D1 = e1 * (self.inner0(self.A(self.P(f)), Pif) + self.inner0(self.P_adjoint(Af), Pif))
            D2 = self.inner0(self.P(f), f)
        else:
            D1 = D2 = 0.0
        D3 = 0.0
        if self.g is not None:
            g = self.grid
            D3 = self.kappa * self.zeta * float(np.sum(self.apply_generator(f) * f * self.g)) \
                * g.cell_volume / g.nalpha
        return {"D0": D0, "D1": D1, "D2": D2, "D3": D3, "dGdt": D0 + D1 + D2 + D3}

    # ---- time stepping ----------------------------------------------------
    def cfl_bound(self):
        """Largest stable step for the explicit x-transport (Gershgorin bound)."""
        g = self.grid
        rows = []
        for axis in (0, 1):
            s = np.zeros_like(g.rho)
            for q in (g.qp[axis], g.qm[axis]):
                ok = q > 0
                s[ok] += np.sqrt(q[ok]) + 1.0 / np.sqrt(q[ok])
            rows.append(s / (4 * g.h[axis]))
        speed = (1 + self.kappa) * rows[0] + rows[1] + 0.5 * self.kappa * np.abs(g.G[0])
        return _EXPLICIT_STABILITY / float(speed.max())

    def default_dt(self, safety=0.9):
        return safety * self.cfl_bound()

    def _implicit(self, rhs, a):
        """Solve (1 - a (Q - T_alpha)) y = rhs."""
        solver = self._solvers.get(a)
        if solver is None:
            G0, G1 = self.grid.G
            solver = AlphaImplicit(G0, G1, self.D, a, self.grid.nalpha)
            self._solvers = {a: solver}  # one step size at a time
        return solver.solve(rhs)

    def step(self, f, dt, check_cfl=True, positive=True):
        """One ARS(2,3,3) step.

        With ``positive`` and a non-negative input, undershoots of the central
        stencils are clipped and the result rescaled to the input mass.
        """
        if np.shape(f) != self.grid.shape:
            raise ConfigError(f"field shape {np.shape(f)} does not match the grid {self.grid.shape}")
        out = self._ars_step(f, dt, check_cfl)
        if positive and out.min() < 0 and f.min() >= 0:
            M = self.grid.mass(f)
            out = np.maximum(out, 0.0)
            out *= M / self.grid.mass(out)
        return out

    def _ars_step(self, f, dt, check_cfl=True):
        if check_cfl:
            bound = self.cfl_bound()
            if dt > bound:
                raise ConfigError(f"dt={dt:.4g} exceeds the CFL bound {bound:.4g}")
        E, I = self.explicit_part, self.implicit_part
        e1 = E(f)
        y2 = self._implicit(f + dt * _G * e1, dt * _G)
        e2, i2 = E(y2), I(y2)
        y3 = self._implicit(f + dt * ((_G - 1) * e1 + 2 * (1 - _G) * e2) + dt * (1 - 2 * _G) * i2,
                            dt * _G)
        e3, i3 = E(y3), I(y3)
        return f + 0.5 * dt * (e2 + i2 + e3 + i3)

    def evolve(self, f, t_end, dt=None, every=None, callback=None):
        """Integrate to t_end; callback(t, f) is called every ``every`` steps."""
        dt = self.default_dt() if dt is None else dt
        n = max(1, int(math.ceil(t_end / dt - 1e-12)))
        dt = t_end / n
        if dt > self.cfl_bound():
            raise ConfigError(f"dt={dt:.4g} exceeds the CFL bound {self.cfl_bound():.4g}")
        if callback is not None:
            callback(0.0, f)
        for i in range(1, n + 1):
            f = self.step(f, dt, check_cfl=False)
            if callback is not None and every and i % every == 0:
                callback(i * dt, f)
        if not np.all(np.isfinite(f)):
            raise NumericalError("non-finite values during time integration")
        return f

    # ---- stationary state ---------------------------------------------------
    def residual(self, f):
        return self.norm0(self.apply_generator(f))

    def solve_stationary(self, f0, tol=1e-8, tmax=400.0, dt=None, warmup=2.0, period=1.0,
                         max_restarts=40):
        """Unit-mass zero of the generator, by time integration with Krylov acceleration.

        The field is first integrated for ``warmup`` time units, then the fixed
        point of the flow over one ``period`` is found with GMRES. The total
        integrated time (warm-up plus all GMRES applications) is capped by tmax.
        """
        g = self.grid
        dt = self.default_dt() if dt is None else dt
        m = max(1, int(round(period / dt)))
        dt = period / m
        M0 = g.mass(f0)
        history = []
        f = self.evolve(f0, warmup, dt=dt) if warmup > 0 else f0
        t_used = warmup
        res = self.residual(f)
        history.append((t_used, res))
        if res <= tol:
            return f
        sq = np.sqrt(g.eV)[:, :, None]
        n = f.size
        counter = {"t": t_used}

        def flow(v):
            y = v.reshape(g.shape) / sq
            for _ in range(m):
                y = self.step(y, dt, check_cfl=False, positive=False)
            counter["t"] += period
            return (y * sq).ravel()

        op = spla.LinearOperator((n, n), matvec=lambda v: v - flow(v), dtype=float)
        for _ in range(max_restarts):
            base = (f * sq).ravel()
            rhs = flow(base) - base
            scale = max(np.linalg.norm(rhs), 1e-300)
            # the time-one residual underestimates the stationary error by the slowest rate
            delta, _ = spla.gmres(op, rhs, rtol=min(1e-3, 1e-3 * tol / scale),
                                  atol=0.0, restart=60, maxiter=3)
            f = (base + delta).reshape(g.shape) / sq
            f *= M0 / g.mass(f)
            res = self.residual(f)
            history.append((counter["t"], res))
            if res <= tol:
                return f
            if counter["t"] > tmax:
                break
        raise NumericalError(
            f"stationary solve did not reach tol={tol} within tmax={tmax} (residual {res:.3e})",
            history=history,
        )


def weight_on_grid(w: wt.WeightParams, grid: Grid):
    """g at cell centres and alpha nodes; Y is set to 0 where grad V vanishes."""
    p = grid.potential
    pts = grid.points()
    gn = np.linalg.norm(grid.grad_v, axis=-1)
    safe = gn > 0
    logg = np.empty(grid.shape)
    alpha = grid.alpha
    if np.all(safe):
        logg[:] = wt.log_weight(w, p, pts[:, :, None, :], alpha[None, None, :])
    else:
        from .. import potential as pot

        V = pot.value(p, pts)
        n = np.zeros_like(grid.grad_v)
        n[safe] = grid.grad_v[safe] / gn[safe, None]
        Y = np.cos(alpha) * n[..., 0:1] + np.sin(alpha) * n[..., 1:2]
        Gamma, _ = wt.gamma_profile(w, np.clip(Y, -1, 1), check=False)
        logg[:] = w.beta * V[..., None] + gn[..., None] * Gamma
    return np.exp(logg)


@dataclass
class DecayResult:
    lambda_meas: float | None
    series: list = field(default_factory=list)
    r_squared: float | None = None
    window: tuple | None = None
    outcome: str = "fitted"


def _fit_window(t, E, lo=10.0, hi=1000.0):
    """Indices where E has dropped by a factor in [lo, hi] from E(0)."""
    E0 = E[0]
    inside = (E <= E0 / lo) & (E >= E0 / hi)
    idx = np.nonzero(inside)[0]
    return idx


def measure_decay(fp: FokkerPlanck, f0, Fk, horizon, hc=None, dt=None, every=1,
                  stationary_tol=1e-8, monotone_tol=1e-3):
    """Evolve f0, record E(t) = ||f - M F_k||_k and fit the slope of log E.

    With ``hc`` the rows also carry G, dG/dt and the Gronwall right-hand side
    -gamma1 G + gamma2 M^2.
    """
    M = fp.grid.mass(f0)
    rows = []

    def record(t, f):
        E = fp.normk(f - M * Fk)
        row = {"t": t, "E": E}
        if hc is not None:
            G = fp.entropy(f, hc.eps1)
            row.update(G=G, dGdt=fp.dissipation_terms(f, hc)["dGdt"],
                       rhs_gronwall=-hc.gamma1 * G + hc.gamma2_gronwall * M**2)
        rows.append(row)

    E0 = fp.normk(f0 - M * Fk)
    if E0 <= stationary_tol:
        record(0.0, f0)
        return DecayResult(lambda_meas=None, series=rows, outcome="already stationary")
    fp.evolve(f0, horizon, dt=dt, every=every, callback=record)
    t = np.array([r["t"] for r in rows])
    E = np.array([r["E"] for r in rows])
    idx = _fit_window(t, E)
    if len(idx) < 3 or E.min() > E[0] / 1000:
        raise NumericalError(
            f"E(t) did not drop by 1000 within horizon={horizon} (min ratio {E.min() / E[0]:.3g})",
            history=rows,
        )
    i0, i1 = idx[0], idx[-1]
    Ew = E[i0:i1 + 1]
    if np.any(Ew[1:] > Ew[:-1] * (1 + monotone_tol)):
        raise NumericalError("E(t) is not monotone in the fit window", history=rows)
    tw, yw = t[i0:i1 + 1], np.log(Ew)
    slope, icpt = np.polyfit(tw, yw, 1)
    pred = slope * tw + icpt
    ss_res = float(np.sum((yw - pred) ** 2))
    ss_tot = float(np.sum((yw - yw.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayResult(lambda_meas=float(-slope), series=rows, r_squared=r2,
                       window=(float(tw[0]), float(tw[-1])))
