"""External confining potential V(x) on the plane.

Two kinds are supported, both radially symmetric:

* ``family``:    V(x) = K (1 + |x|^2)^(s/2) + shift,  K > 0, s >= 1
* ``quadratic``: V(x) = omega |x|^2 / 2 + shift       (calibration only)

All derivatives are closed form. Points are arrays with a trailing axis of
length 2; every evaluator broadcasts over the leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericalError

KINDS = ("family", "quadratic")


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "family"
    K: float = 1.0
    s: float = 2.0
    omega: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        problems = []
        if self.kind not in KINDS:
            problems.append(f"kind must be one of {KINDS}, got {self.kind!r}")
        elif self.kind == "family":
            if not self.K > 0:
                problems.append(f"K must satisfy K > 0, got {self.K}")
            if not self.s >= 1:
                problems.append(f"s must satisfy s >= 1 (admissible family), got {self.s}")
        elif not self.omega > 0:
            problems.append(f"omega must satisfy omega > 0, got {self.omega}")
        if not math.isfinite(self.shift):
            problems.append("shift must be finite")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def family(cls, K=1.0, s=2.0, shift=0.0):
        return cls(kind="family", K=float(K), s=float(s), shift=float(shift))

    @classmethod
    def quadratic(cls, omega=1.0, shift=0.0):
        return cls(kind="quadratic", omega=float(omega), shift=float(shift))

    @property
    def gradient_bounded(self) -> bool:
        return self.kind == "family" and self.s == 1.0

    @property
    def grad_inf_norm(self):
        """sup |grad V|, or None when the gradient is unbounded."""
        return self.K if self.gradient_bounded else None

    def to_dict(self):
        if self.kind == "family":
            return {"kind": "family", "K": self.K, "s": self.s, "shift": self.shift}
        return {"kind": "quadratic", "omega": self.omega, "shift": self.shift}


def radial(p: PotentialSpec, r):
    """Return (V, V', V'') as functions of the radius r >= 0."""
    r = np.asarray(r, dtype=float)
    if p.kind == "quadratic":
        w = p.omega
        return 0.5 * w * r**2 + p.shift, w * r, np.full_like(r, w)
    K, s = p.K, p.s
    q = 1.0 + r**2
    V = K * q ** (s / 2) + p.shift
    dV = K * s * r * q ** (s / 2 - 1)
    d2V = K * s * q ** (s / 2 - 2) * (1.0 + (s - 1.0) * r**2)
    return V, dV, d2V


def value(p: PotentialSpec, x):
    x = np.asarray(x, dtype=float)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    if p.kind == "quadratic":
        return 0.5 * p.omega * r2 + p.shift
    return p.K * (1.0 + r2) ** (p.s / 2) + p.shift


def eval_potential(p: PotentialSpec, x):
    """V, grad V (..., 2) and Hessian (..., 2, 2) at the points x."""
    x = np.asarray(x, dtype=float)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    eye = np.eye(2)
    if p.kind == "quadratic":
        w = p.omega
        V = 0.5 * w * r2 + p.shift
        grad = w * x
        hess = np.broadcast_to(w * eye, x.shape[:-1] + (2, 2)).copy()
        return V, grad, hess
    K, s = p.K, p.s
    q = 1.0 + r2
    V = K * q ** (s / 2) + p.shift
    a = K * s * q ** (s / 2 - 1)  # grad V = a x
    grad = a[..., None] * x
    outer = x[..., :, None] * x[..., None, :]
    hess = a[..., None, None] * (eye + ((s - 2.0) / q)[..., None, None] * outer)
    return V, grad, hess


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureCfg:
    """Composite tensor Gauss-Legendre rule on [-L, L]^2.

    ``L`` is chosen so that e^{-V} at (L, 0) is below ``tail`` times its
    value at the origin, unless given explicitly.
    """

    tol: float = 1e-10
    order: int = 6
    panels: int = 16
    max_panels: int = 1024
    tail: float = 1e-14
    L: float | None = None


def truncation_radius(p: PotentialSpec, tail=1e-14):
    """Smallest radius where V(r) - V(0) exceeds log(1/tail)."""
    target = -math.log(tail)
    v0 = float(radial(p, 0.0)[0])
    lo, hi = 0.0, 1.0
    while float(radial(p, hi)[0]) - v0 < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(radial(p, mid)[0]) - v0 < target:
            lo = mid
        else:
            hi = mid
    return hi


def gauss_legendre_nodes(L, panels, order):
    """1D composite Gauss-Legendre nodes and weights on [-L, L]."""
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-L, L, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate_exp_minus_v(p: PotentialSpec, L, panels, order):
    xs, ws = gauss_legendre_nodes(L, panels, order)
    X = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
    # shift factored out to stay away from overflow for large shifts
    vals = np.exp(-(value(p, X) - p.shift))
    return float(ws @ vals @ ws) * math.exp(-p.shift)


def mass_integral(p: PotentialSpec, quad: QuadratureCfg = QuadratureCfg()):
    """Integral of e^{-V} over [-L, L]^2, refined until two levels agree."""
    L = quad.L if quad.L is not None else truncation_radius(p, quad.tail)
    n = quad.panels
    prev = integrate_exp_minus_v(p, L, n, quad.order)
    history = [(n, prev)]
    while n < quad.max_panels:
        n *= 2
        cur = integrate_exp_minus_v(p, L, n, quad.order)
        history.append((n, cur))
        if abs(cur - prev) <= quad.tol * abs(cur):
            return cur
        prev = cur
    raise NumericalError(
        f"quadrature of e^-V did not reach tol={quad.tol} with {n} panels on L={L:.4g}",
        history=history,
    )


def normalize_potential(p: PotentialSpec, quad: QuadratureCfg = QuadratureCfg()):
    """Return p with its shift adjusted so that e^{-V} integrates to one."""
    Z = mass_integral(p, quad)
    return replace(p, shift=p.shift + math.log(Z))


# --------------------------------------------------------------------------
# hypothesis checks


@dataclass
class HypothesisReport:
    h2_integral: float
    h4_c1_estimate: float
    h5_ratios: dict = field(default_factory=dict)
    gradient_bounded: bool = False
    grad_inf_norm: float | None = None

    def to_dict(self):
        return {
            "h2_integral": self.h2_integral,
            "h4_c1_estimate": self.h4_c1_estimate,
            "h5_ratios": {k: list(map(float, v)) for k, v in self.h5_ratios.items()},
            "gradient_bounded": self.gradient_bounded,
            "grad_inf_norm": self.grad_inf_norm,
        }


def check_hypotheses(p: PotentialSpec, radii=None, n_angles=64,
                     quad: QuadratureCfg = QuadratureCfg()):
    """Sample the regularity conditions on concentric circles.

    The Poincare (spectral gap) condition is not checked here; see
    :func:`laydown.constants.estimate_spectral_gap`.
    """
    if radii is None:
        radii = np.geomspace(0.1, 1e3, 41)
    radii = np.asarray(radii, dtype=float)
    phi = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    pts = radii[:, None, None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)[None]
    V, grad, hess = eval_potential(p, pts)
    gnorm = np.linalg.norm(grad, axis=-1)
    hnorm = np.linalg.norm(hess, ord=2, axis=(-2, -1))
    c1 = float(np.max(hnorm / (1.0 + gnorm)))
    # also include the origin, where the Hessian is largest relative to the gradient
    _, g0, h0 = eval_potential(p, np.zeros(2))
    c1 = max(c1, float(np.linalg.norm(h0, 2) / (1.0 + np.linalg.norm(g0))))
    ratios = {
        "radius": radii,
        "grad_over_V": np.max(gnorm / np.abs(V), axis=1),
        "hess_over_grad": np.max(hnorm / gnorm, axis=1),
    }
    return HypothesisReport(
        h2_integral=mass_integral(p, quad),
        h4_c1_estimate=c1,
        h5_ratios=ratios,
        gradient_bounded=p.gradient_bounded,
        grad_inf_norm=p.grad_inf_norm,
    )
