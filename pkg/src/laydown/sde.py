"""Monte Carlo simulation of the lay-down SDE and comparison with the PDE.

    dx = (tau(alpha) + kappa e1) dt
    dalpha = -(tau_perp(alpha) . grad V(x)) dt + sqrt(2 D) dW

Particles are processed in fixed blocks; block b draws its normals from a
Philox generator keyed by (seed, b), so the result does not depend on how
blocks are distributed over threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import potential as pot
from .errors import ConfigError, NumericalError, PreconditionError
from .kinetic.grid import Grid

TWO_PI = 2 * np.pi
INITIAL_LAWS = ("point", "gaussian")


@dataclass(frozen=True)
class SdeConfig:
    kappa: float = 0.0
    D: float = 1.0
    dt: float = 0.01
    n_particles: int = 100_000
    horizon: float = 10.0
    seed: int = 0
    initial: str = "gaussian"
    x0: tuple = (0.0, 0.0)
    alpha0: float = 0.0
    sigma: float = 1.0
    block: int = 8192
    max_dt: float = 0.1  # stability threshold for dt (drift is O(1) where the mass sits)

    def __post_init__(self):
        bad = []
        if not 0 <= self.kappa < 1:
            bad.append("kappa must lie in [0, 1)")
        if not self.D >= 0:
            bad.append("D must satisfy D >= 0")
        if not 0 < self.dt <= self.max_dt:
            bad.append(f"dt must lie in (0, {self.max_dt}]")
        if self.n_particles < 1:
            bad.append("n_particles must be >= 1")
        if not self.horizon >= 0:
            bad.append("horizon must be >= 0")
        if not 0 <= self.seed < 2**64:
            bad.append("seed must be a 64-bit unsigned integer")
        if self.initial not in INITIAL_LAWS:
            bad.append(f"initial must be one of {INITIAL_LAWS}")
        if not self.sigma > 0:
            bad.append("sigma must be positive")
        if self.block < 1:
            bad.append("block must be >= 1")
        if bad:
            raise ConfigError("; ".join(bad))

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    def to_dict(self):
        d = asdict(self)
        d["x0"] = list(self.x0)
        return d


@dataclass
class Ensemble:
    x: np.ndarray  # (n, 2)
    alpha: np.ndarray  # (n,), in [0, 2 pi)
    t: float
    snapshots: list | None = None


def _block_rng(seed, b):
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), b]))


def _grad(p: pot.PotentialSpec | None, x, y):
    if p is None:
        return 0.0, 0.0
    if p.kind == "quadratic":
        return p.omega * x, p.omega * y
    a = p.K * p.s * (1.0 + x * x + y * y) ** (p.s / 2 - 1)
    return a * x, a * y


def _run_block(cfg: SdeConfig, p, b, lo, hi, snap_every):
    rng = _block_rng(cfg.seed, b)
    n = hi - lo
    if cfg.initial == "point":
        x = np.full(n, float(cfg.x0[0]))
        y = np.full(n, float(cfg.x0[1]))
        a = np.full(n, float(cfg.alpha0) % TWO_PI)
    else:
        x = cfg.sigma * rng.standard_normal(n)
        y = cfg.sigma * rng.standard_normal(n)
        a = rng.uniform(0.0, TWO_PI, n)
    dt, k = cfg.dt, cfg.kappa
    amp = math.sqrt(2 * cfg.D * dt)
    snaps = []
    for step in range(1, cfg.n_steps + 1):
        c, s = np.cos(a), np.sin(a)
        gx, gy = _grad(p, x, y)
        drift = -s * gx + c * gy  # tau_perp . grad V
        x = x + (c + k) * dt
        y = y + s * dt
        a = a - drift * dt
        if amp:
            a = a + amp * rng.standard_normal(n)
        a = np.mod(a, TWO_PI)
        if snap_every and step % snap_every == 0:
            snaps.append((step, np.stack([x, y, a], axis=1)))
    bad = ~(np.isfinite(x) & np.isfinite(y) & np.isfinite(a))
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        raise NumericalError(f"non-finite state for particle {lo + i} by step {cfg.n_steps}")
    return x, y, a, snaps


def simulate_ensemble(cfg: SdeConfig, p: pot.PotentialSpec | None, threads=1, snap_every=0):
    """Euler-Maruyama for all particles; ``p=None`` means grad V = 0 (free transport)."""
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    n, B = cfg.n_particles, cfg.block
    blocks = [(b, b * B, min(n, (b + 1) * B)) for b in range((n + B - 1) // B)]
    if threads == 1:
        out = [_run_block(cfg, p, b, lo, hi, snap_every) for b, lo, hi in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(lambda t: _run_block(cfg, p, *t, snap_every), blocks))
    x = np.concatenate([o[0] for o in out])
    y = np.concatenate([o[1] for o in out])
    a = np.concatenate([o[2] for o in out])
    snaps = None
    if snap_every:
        snaps = [(out[0][3][i][0] * cfg.dt, np.concatenate([o[3][i][1] for o in out]))
                 for i in range(len(out[0][3]))]
    return Ensemble(x=np.stack([x, y], axis=1), alpha=a, t=cfg.n_steps * cfg.dt, snapshots=snaps)


# --------------------------------------------------------------------------
# histograms and distances


@dataclass
class Histogram:
    """Cell masses on a (possibly coarsened) phase-space grid; sums to one."""

    mass: np.ndarray  # (nx, ny, na)
    outside: int = 0


def empirical_density(e: Ensemble, grid: Grid, coarsen=(1, 1, 1)) -> Histogram:
    """Bin particles into grid cells (coarsened by integer factors).

    Particles outside the box are counted in the nearest boundary cell and
    reported in ``outside``.
    """
    nx, ny, na = grid.shape
    cx, cy, ca = coarsen
    if nx % cx or ny % cy or na % ca:
        raise ConfigError("coarsening factors must divide the grid shape")
    mx, my, ma = nx // cx, ny // cy, na // ca
    L = grid.L
    fx = (e.x[:, 0] + L) / (2 * L) * mx
    fy = (e.x[:, 1] + L) / (2 * L) * my
    outside = int(np.sum((fx < 0) | (fx >= mx) | (fy < 0) | (fy >= my)))
    ix = np.clip(np.floor(fx).astype(np.int64), 0, mx - 1)
    iy = np.clip(np.floor(fy).astype(np.int64), 0, my - 1)
    # alpha cells are centred on the grid nodes alpha_k
    h = TWO_PI / na
    k = np.floor((e.alpha + 0.5 * h) / h).astype(np.int64) % na
    ik = k // ca
    flat = (ix * my + iy) * ma + ik
    counts = np.bincount(flat, minlength=mx * my * ma).astype(float)
    return Histogram(mass=(counts / counts.sum()).reshape(mx, my, ma), outside=outside)


def field_to_histogram(f, grid: Grid, coarsen=(1, 1, 1)) -> Histogram:
    """Cell masses of a phase field, summed over coarsening blocks."""
    nx, ny, na = grid.shape
    cx, cy, ca = coarsen
    if nx % cx or ny % cy or na % ca:
        raise ConfigError("coarsening factors must divide the grid shape")
    m = f * grid.cell_volume / na
    m = m.reshape(nx // cx, cx, ny // cy, cy, na // ca, ca).sum(axis=(1, 3, 5))
    return Histogram(mass=m)


def compare_distributions(emp: Histogram, ref: Histogram, mass_tol=1e-8):
    """(l1, tv) between two normalised histograms on the same cells."""
    a, b = emp.mass, ref.mass
    if a.shape != b.shape:
        raise ConfigError(f"histogram shapes differ: {a.shape} vs {b.shape}")
    for name, h in (("first", a), ("second", b)):
        if abs(h.sum() - 1.0) > mass_tol:
            raise PreconditionError(f"{name} distribution has mass {h.sum():.12g}, expected 1")
    l1 = float(np.abs(a - b).sum())
    return l1, 0.5 * l1
