"""Phase-space grid [-L, L]^2 x S^1 and the discrete equilibrium structure.

The x-box is split into nx * ny cells; unknowns are cell averages. The
discrete equilibrium ``rho`` is the cell average of e^{-V}, and every
inner product <f, h>_0 uses the weight 1/rho. The x-difference stencils are
built from ratios of neighbouring ``rho`` values so that

* the transport operator is exactly skew-symmetric in <.,.>_0,
* all operators conserve discrete mass (zero flux through the box edge),
* rho itself is an exact discrete equilibrium of the transport part.

The alpha direction is uniform and handled spectrally (nalpha even).

Field arrays have shape (nx, ny, nalpha); x-fields have shape (nx, ny).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import potential as pot
from ..errors import ConfigError


@dataclass(frozen=True)
class GridCfg:
    nx: int = 128
    ny: int = 128
    nalpha: int = 64
    L: float | None = None
    tail: float = 1e-12  # e^{-V} level at the box edge when L is automatic
    cell_quad: int = 4  # Gauss points per direction for cell averages

    def __post_init__(self):
        bad = []
        if self.nx < 4 or self.ny < 4:
            bad.append("nx, ny must be >= 4")
        if self.nalpha < 4 or self.nalpha % 2:
            bad.append("nalpha must be even and >= 4")
        if self.L is not None and not self.L > 0:
            bad.append("L must be positive")
        if not 0 < self.tail < 1:
            bad.append("tail must lie in (0, 1)")
        if bad:
            raise ConfigError("; ".join(bad))

    def refined(self, factor=2, alpha_factor=None):
        af = factor if alpha_factor is None else alpha_factor
        return GridCfg(self.nx * factor, self.ny * factor, self.nalpha * af,
                       self.L, self.tail, self.cell_quad)


def box_half_width(p: pot.PotentialSpec, tail=1e-12):
    """Radius where e^{-V} (normalised V) drops to ``tail``."""
    target = -math.log(tail)
    if float(pot.radial(p, 0.0)[0]) >= target:
        raise ConfigError("potential is already above the truncation level at the origin")
    lo, hi = 0.0, 1.0
    while float(pot.radial(p, hi)[0]) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(pot.radial(p, mid)[0]) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _neighbour_ratios(rho, axis):
    """q_plus = rho[i+1]/rho[i], q_minus = rho[i-1]/rho[i]; zero where no neighbour."""
    qp = np.zeros_like(rho)
    qm = np.zeros_like(rho)
    sl = [slice(None)] * rho.ndim
    lo, hi = list(sl), list(sl)
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    qp[lo] = rho[hi] / rho[lo]
    qm[hi] = rho[lo] / rho[hi]
    return qp, qm


def _wall(q):
    return np.where(q > 0, q, -1.0)


def _shift_plus(f, axis):
    """f[i+1] along axis, zero past the edge."""
    out = np.zeros_like(f)
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    src[axis] = slice(1, None)
    dst[axis] = slice(0, -1)
    out[tuple(dst)] = f[tuple(src)]
    return out


def _shift_minus(f, axis):
    out = np.zeros_like(f)
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    src[axis] = slice(0, -1)
    dst[axis] = slice(1, None)
    out[tuple(dst)] = f[tuple(src)]
    return out


@dataclass
class Grid:
    potential: pot.PotentialSpec
    cfg: GridCfg
    L: float
    x: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    rho: np.ndarray
    rho_point: np.ndarray
    grad_v: np.ndarray  # analytic grad V at cell centres, (nx, ny, 2)
    qp: tuple = field(repr=False)
    qm: tuple = field(repr=False)
    G: tuple = field(repr=False)  # discrete grad V, one (nx, ny) array per axis
    _lu: object = field(default=None, repr=False)
    _gmats: tuple | None = field(default=None, repr=False)

    # ---- geometry -------------------------------------------------------
    @property
    def shape(self):
        return (self.cfg.nx, self.cfg.ny, self.cfg.nalpha)

    @property
    def h(self):
        return (self.x[1] - self.x[0], self.y[1] - self.y[0])

    @property
    def cell_volume(self):
        hx, hy = self.h
        return hx * hy

    @property
    def eV(self):
        return 1.0 / self.rho

    @property
    def nalpha(self):
        return self.cfg.nalpha

    def tau(self):
        """cos(alpha), sin(alpha) broadcastable against fields."""
        return np.cos(self.alpha), np.sin(self.alpha)

    def points(self):
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([X, Y], axis=-1)

    # ---- x-stencils on fields of shape (nx, ny, ...) ---------------------
    def dflux(self, f, axis):
        """rho * B f: antisymmetric-part difference, approximates d f + (dV/2) f."""
        h = self.h[axis]
        qp, qm = self.qp[axis], self.qm[axis]
        extra = (slice(None), slice(None)) + (None,) * (f.ndim - 2)
        rp = np.where(qp > 0, 1.0 / np.where(qp > 0, qp, 1.0), 0.0)[extra]
        rm = np.where(qm > 0, 1.0 / np.where(qm > 0, qm, 1.0), 0.0)[extra]
        return ((1.0 + rp) * _shift_plus(f, axis) - (1.0 + rm) * _shift_minus(f, axis)) / (4 * h)

    def grad_x(self, u, axis):
        """Discrete weighted gradient of an x-field (annihilates constants)."""
        h = self.h[axis]
        qp, qm = self.qp[axis], self.qm[axis]
        extra = (slice(None), slice(None)) + (None,) * (u.ndim - 2)
        return (((1.0 + qp)[extra] * _shift_plus(u, axis) - (1.0 + qm)[extra] * _shift_minus(u, axis))
                / (4 * h) + 0.5 * self.G[axis][extra] * u)

    # ---- sparse versions of grad_x ---------------------------------------
    def gradient_matrices(self):
        if self._gmats is None:
            nx, ny = self.cfg.nx, self.cfg.ny
            n = nx * ny
            idx = np.arange(n).reshape(nx, ny)
            mats = []
            for axis in (0, 1):
                h = self.h[axis]
                qp, qm = self.qp[axis], self.qm[axis]
                stride = ny if axis == 0 else 1
                rows, cols, vals = [idx.ravel()], [idx.ravel()], [0.5 * self.G[axis].ravel()]
                has_p = qp > 0
                rows.append(idx[has_p])
                cols.append(idx[has_p] + stride)
                vals.append((1.0 + qp[has_p]) / (4 * h))
                has_m = qm > 0
                rows.append(idx[has_m])
                cols.append(idx[has_m] - stride)
                vals.append(-(1.0 + qm[has_m]) / (4 * h))
                mats.append(sp.csr_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(n, n)))
            self._gmats = tuple(mats)
        return self._gmats

    def stiffness(self):
        """K = sum_d G_d^T diag(rho) G_d (discrete -div(e^{-V} grad .))."""
        W = sp.diags(self.rho.ravel())
        return sum(Gd.T @ W @ Gd for Gd in self.gradient_matrices()).tocsc()

    def elliptic_solve(self, rhs):
        """Solve rho u - 1/2 div_h(rho grad_h u) = rhs for an x-field u."""
        if self._lu is None:
            s = np.sqrt(self.rho.ravel())
            S = sp.diags(1.0 / s)
            M = sp.identity(s.size) + 0.5 * (S @ self.stiffness() @ S)
            self._lu = (spla.splu(M.tocsc()), s)
        lu, s = self._lu
        rhs = np.asarray(rhs)
        flat = rhs.reshape(s.size, -1)
        out = lu.solve(np.ascontiguousarray(flat / s[:, None])) / s[:, None]
        return out.reshape(rhs.shape)

    # ---- quadrature -----------------------------------------------------
    def mass(self, f):
        return float(np.sum(f)) * self.cell_volume / self.nalpha

    def alpha_mean(self, f):
        return f.mean(axis=-1)

    def zeros(self):
        return np.zeros(self.shape)

    def equilibrium(self):
        """Discrete F_0: the cell average of e^{-V}, constant in alpha."""
        return np.repeat(self.rho[:, :, None], self.nalpha, axis=2)


def make_grid(p: pot.PotentialSpec, cfg: GridCfg = GridCfg()) -> Grid:
    L = cfg.L if cfg.L is not None else box_half_width(p, cfg.tail)
    nx, ny, na = cfg.nx, cfg.ny, cfg.nalpha
    hx, hy = 2 * L / nx, 2 * L / ny
    x = -L + hx * (np.arange(nx) + 0.5)
    y = -L + hy * (np.arange(ny) + 0.5)
    alpha = 2 * np.pi * np.arange(na) / na
    t, wq = np.polynomial.legendre.leggauss(cfg.cell_quad)
    xs = x[:, None] + 0.5 * hx * t[None, :]
    ys = y[:, None] + 0.5 * hy * t[None, :]
    pts = np.stack(np.broadcast_arrays(xs[:, None, :, None], ys[None, :, None, :]), axis=-1)
    vals = np.exp(-pot.value(p, pts))
    rho = 0.25 * np.einsum("ijab,a,b->ij", vals, wq, wq)
    X, Y = np.meshgrid(x, y, indexing="ij")
    centers = np.stack([X, Y], axis=-1)
    _, grad_v, _ = pot.eval_potential(p, centers)
    if np.any(rho <= 0):
        raise ConfigError("box too large: e^{-V} underflows in some cells; reduce L or tail")
    qp0, qm0 = _neighbour_ratios(rho, 0)
    qp1, qm1 = _neighbour_ratios(rho, 1)
    # a missing neighbour counts as ratio -1: this closes the box with a
    # reflecting wall on which constants stay in the kernel of grad_h
    G0 = -(_wall(qp0) - _wall(qm0)) / (2 * hx)
    G1 = -(_wall(qp1) - _wall(qm1)) / (2 * hy)
    return Grid(
        potential=p, cfg=cfg, L=L, x=x, y=y, alpha=alpha, rho=rho,
        rho_point=np.exp(-pot.value(p, centers)), grad_v=grad_v,
        qp=(qp0, qp1), qm=(qm0, qm1), G=(G0, G1),
    )
