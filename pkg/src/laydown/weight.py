"""Coercivity weight g(x, alpha) = exp(beta V + |grad V| Gamma(Y)).

Y = tau(alpha) . grad V / |grad V| is the alignment between the fibre
direction and the potential gradient. Gamma is built from a piecewise
linear derivative (slope delta_minus, a linear ramp on |Y| <= eps0, slope
delta_plus), and the parameters are the explicit choices that make the
Lyapunov inequality L_kappa(g) <= -c |grad V| g hold far from the origin.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import potential as pot
from .errors import NumericalError, PreconditionError


@dataclass(frozen=True)
class WeightParams:
    kappa: float
    D: float
    delta_plus: float
    delta_minus: float
    eps0: float
    beta: float
    gamma: float
    gamma_tilde: float
    c: float
    gamma0: float

    @property
    def ramp_slope(self):
        """Gamma'' on the ramp |Y| <= eps0."""
        return (self.delta_plus - self.delta_minus) / (2.0 * self.eps0)

    def violations(self):
        """Names of the invariants that fail (empty when the set is admissible)."""
        k, D = self.kappa, self.D
        dp, dm, e0, b = self.delta_plus, self.delta_minus, self.eps0, self.beta
        out = []
        if not 0 < dm < dp < 1 / D:
            out.append("0 < delta_minus < delta_plus < 1/D")
        if not 0 < e0 < 1:
            out.append("0 < eps0 < 1")
        lo = 1 + D * (dp + dm) / 2
        hi = e0 / (k + e0) * (1 + D * dp)
        if not lo < b < hi:
            out.append("beta interval 1 + D(d+ + d-)/2 < beta < eps0/(kappa+eps0) (1 + D d+)")
        if not 1 < b < 2:
            out.append("1 < beta < 2")
        if not k < D * (dp - dm) / (2 + D * (dp + dm)):
            out.append("kappa < D(d+ - d-)/(2 + D(d+ + d-))")
        if not self.gamma > k * b:
            out.append("gamma > kappa beta")
        if not 0 < self.gamma < self.gamma_tilde:
            out.append("0 < gamma < gamma_tilde")
        if not self.c > 0:
            out.append("c > 0")
        return out

    def to_dict(self):
        return asdict(self)


def weight_params(kappa, D) -> WeightParams:
    """Explicit parameter choice for a belt speed kappa < 1/3."""
    kappa, D = float(kappa), float(D)
    if not D > 0:
        raise PreconditionError(f"D must be positive, got {D}")
    if not 0 <= kappa < 1 / 3:
        raise PreconditionError(
            f"weight construction requires the belt-speed condition 0 <= kappa < 1/3, got kappa={kappa}"
        )
    dp = 3 * (1 + kappa) / (4 * D)
    dm = (1 - 3 * kappa) / (4 * D)
    e0 = 0.5 * (1 + 9 * kappa) / (1 + 3 * kappa)
    beta = 0.75 + (1 + 9 * kappa) * (7 + 3 * kappa) / (8 * (6 * kappa**2 + 11 * kappa + 1))
    gamma = e0 * (1 + D * dp - beta)
    gamma_tilde = e0 * (beta - 1 - D * dm)
    w = WeightParams(
        kappa=kappa, D=D, delta_plus=dp, delta_minus=dm, eps0=e0, beta=beta,
        gamma=gamma, gamma_tilde=gamma_tilde, c=(gamma - kappa * beta) / 2,
        gamma0=dm,
    )
    bad = w.violations()
    if bad:
        # only reachable through round-off right at kappa -> 1/3
        raise PreconditionError(f"weight parameters inadmissible at kappa={kappa}: {bad}")
    return w


def gamma_profile(w: WeightParams, Y, check=True):
    """Gamma(Y) and Gamma'(Y) for Y in [-1, 1] (vectorised)."""
    Y = np.asarray(Y, dtype=float)
    if check and np.any(np.abs(Y) > 1 + 1e-12):
        raise PreconditionError("Gamma is defined on [-1, 1] only")
    dp, dm, e0 = w.delta_plus, w.delta_minus, w.eps0
    a = w.ramp_slope
    lower = Y < -e0
    upper = Y > e0
    prime = np.where(upper, dp, np.where(lower, dm, a * (Y + e0) + dm))
    g_knot = w.gamma0 + dm * (1 - e0)  # Gamma(-eps0)
    ramp = g_knot + 0.5 * a * (Y + e0) ** 2 + dm * (Y + e0)
    top = g_knot + (dp - dm) * e0 + 2 * dm * e0  # Gamma(eps0)
    Gamma = np.where(lower, w.gamma0 + dm * (Y + 1), np.where(upper, top + dp * (Y - e0), ramp))
    return Gamma, prime


def gamma_second(w: WeightParams, Y):
    """Gamma''; the ramp value is used at the knots Y = +-eps0."""
    Y = np.asarray(Y, dtype=float)
    return np.where(np.abs(Y) <= w.eps0, w.ramp_slope, 0.0)


def _alignment(grad, alpha):
    gnorm = np.linalg.norm(grad, axis=-1)
    if np.any(gnorm == 0):
        raise PreconditionError("weight undefined where grad V = 0 (Y has no direction)")
    n = grad / gnorm[..., None]
    ca, sa = np.cos(alpha), np.sin(alpha)
    Y = ca * n[..., 0] + sa * n[..., 1]
    Yp = -sa * n[..., 0] + ca * n[..., 1]
    return gnorm, n, np.clip(Y, -1.0, 1.0), Yp


def log_weight(w: WeightParams, p: pot.PotentialSpec, x, alpha):
    """log g = beta V + |grad V| Gamma(Y)."""
    V, grad, _ = pot.eval_potential(p, x)
    gnorm, _, Y, _ = _alignment(grad, np.asarray(alpha, dtype=float))
    Gamma, _ = gamma_profile(w, Y, check=False)
    return w.beta * V + gnorm * Gamma


def eval_weight(w: WeightParams, p: pot.PotentialSpec, x, alpha):
    return np.exp(log_weight(w, p, x, alpha))


def _generator_parts(w: WeightParams, p: pot.PotentialSpec, x, alpha):
    V, grad, hess = pot.eval_potential(p, x)
    alpha = np.asarray(alpha, dtype=float)
    gnorm, n, Y, Yp = _alignment(grad, alpha)
    Gamma, G1 = gamma_profile(w, Y, check=False)
    G2 = gamma_second(w, Y)
    tau = np.stack(np.broadcast_arrays(np.cos(alpha), np.sin(alpha)), axis=-1)
    vel = tau + np.array([w.kappa, 0.0])
    Hn = np.einsum("...ij,...j->...i", hess, n)
    Ht = np.einsum("...ij,...j->...i", hess, tau)
    grad_gnorm = Hn  # grad |grad V| = H n
    grad_Y = (Ht - Y[..., None] * Hn) / gnorm[..., None]
    diff = np.sum(vel * (Gamma[..., None] * grad_gnorm + gnorm[..., None] * G1[..., None] * grad_Y),
                  axis=-1) / gnorm
    tran = grad[..., 0] / gnorm
    return dict(gnorm=gnorm, Y=Y, Yp=Yp, Gamma=Gamma, G1=G1, G2=G2, diff=diff, tran=tran)


def eval_weight_generator(w: WeightParams, p: pot.PotentialSpec, x, alpha):
    """L_kappa(g) / g in closed form.

    L_kappa(h) = D h_aa + (tau + kappa e1) . grad h - (tau_perp . grad V) h_a
    - (tau . grad V) h.
    """
    q = _generator_parts(w, p, x, alpha)
    gn, Y, Yp, G1, G2 = q["gnorm"], q["Y"], q["Yp"], q["G1"], q["G2"]
    Yp2 = Yp**2
    D = w.D
    return (
        (w.beta - 1.0 - D * G1) * gn * Y
        + w.kappa * w.beta * gn * q["tran"]
        + gn * q["diff"]
        + Yp2 * (D * gn * G2 + gn**2 * (D * G1**2 - G1))
    )


def diffusion_term(w: WeightParams, p: pot.PotentialSpec, x, alpha):
    """(tau + kappa e1) . grad(|grad V| Gamma(Y)) / |grad V|."""
    return _generator_parts(w, p, x, alpha)["diff"]


# --------------------------------------------------------------------------
# Lyapunov sweep


@dataclass(frozen=True)
class SearchCfg:
    r_min: float = 0.25
    L_check: float = 60.0
    n_r: int = 160
    n_dir: int = 16
    n_alpha: int = 128


@dataclass
class LyapunovReport:
    R: float
    c: float
    margin_min: float
    samples: int
    r1: float | None
    r2: float | None
    radii: np.ndarray
    worst_margin: np.ndarray

    def to_dict(self):
        return {
            "R": self.R, "c": self.c, "margin_min": self.margin_min,
            "samples": self.samples, "r1": self.r1, "r2": self.r2,
        }


def _invert_radial_gradient(p, level):
    """Smallest r with |grad V|(r) >= level (|grad V| is increasing in r)."""
    if float(pot.radial(p, 0.0)[1]) >= level:
        return 0.0
    lo, hi = 0.0, 1.0
    while float(pot.radial(p, hi)[1]) < level:
        hi *= 2.0
        if hi > 1e12:
            return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(pot.radial(p, mid)[1]) < level:
            lo = mid
        else:
            hi = mid
    return hi


def analytic_r1(w: WeightParams, p: pot.PotentialSpec):
    """Radius beyond which the ramp-region bound of the construction holds."""
    D, dp, dm, e0 = w.D, w.delta_plus, w.delta_minus, w.eps0
    slope = D * dm * (1.0 / D - dp)
    level = (D * w.ramp_slope + 2 * w.gamma_tilde / (1 - e0**2)) / slope
    return _invert_radial_gradient(p, level)


def _sample_points(search: SearchCfg):
    r = np.geomspace(search.r_min, search.L_check, search.n_r)
    phi = np.linspace(0.0, 2 * np.pi, search.n_dir, endpoint=False)
    alpha = np.linspace(0.0, 2 * np.pi, search.n_alpha, endpoint=False)
    R_, P_, A_ = np.meshgrid(r, phi, alpha, indexing="ij")
    x = np.stack([R_ * np.cos(P_), R_ * np.sin(P_)], axis=-1)
    return r, x, A_


def verify_lyapunov(w: WeightParams, p: pot.PotentialSpec, search: SearchCfg = SearchCfg()):
    """Find the smallest sampled R with L(g) <= -c |grad V| g for all samples beyond R."""
    if p.gradient_bounded:
        raise PreconditionError(
            "Lyapunov weight is only needed for unbounded grad V; the bounded case uses g = 0"
        )
    r, x, alpha = _sample_points(search)
    q = _generator_parts(w, p, x, alpha)
    ratio = eval_weight_generator(w, p, x, alpha)
    margin = -ratio / q["gnorm"] - w.c
    worst = margin.reshape(len(r), -1).min(axis=1)
    bad = np.nonzero(worst < 0)[0]
    if len(bad) and bad[-1] == len(r) - 1:
        raise NumericalError(
            f"Lyapunov condition fails up to L_check={search.L_check}: kappa too large or L_check too small",
            history={"radius": r.tolist(), "worst_margin": worst.tolist()},
        )
    start = bad[-1] + 1 if len(bad) else 0
    R = float(r[bad[-1]]) if len(bad) else float(r[0])
    beyond = margin[start:]
    # r2: first sampled radius beyond which the transport remainder stays below c
    diff_max = np.abs(q["diff"]).reshape(len(r), -1).max(axis=1)
    over = np.nonzero(diff_max > w.c)[0]
    r2 = float(r[over[-1]]) if len(over) and over[-1] < len(r) - 1 else (None if len(over) else float(r[0]))
    return LyapunovReport(
        R=R, c=w.c, margin_min=float(beyond.min()), samples=int(beyond.size),
        r1=analytic_r1(w, p), r2=r2, radii=r, worst_margin=worst,
    )
