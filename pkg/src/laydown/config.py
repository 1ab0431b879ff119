"""Run configuration: strict parsing of TOML/JSON files with environment overrides.

Environment variables prefixed ``LAYDOWN_`` override file values; nested keys
use a double underscore, e.g. ``LAYDOWN_GRID__NX=64`` or ``LAYDOWN_KAPPA=0.05``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .kinetic.grid import GridCfg
from .potential import PotentialSpec
from .sde import SdeConfig

ENV_PREFIX = "LAYDOWN_"


@dataclass(frozen=True)
class Tolerances:
    stationary: float = 1e-8
    quadrature: float = 1e-10
    tmax: float = 400.0


@dataclass(frozen=True)
class DecayCfg:
    horizon: float = 40.0
    every: int = 5
    n_initial: int = 1


@dataclass(frozen=True)
class SdeBlock:
    dt: float = 0.01
    n_particles: int = 100_000
    horizon: float = 10.0
    initial: str = "gaussian"
    x0: tuple = (0.0, 0.0)
    alpha0: float = 0.0
    sigma: float = 1.0
    coarsen: tuple = (4, 4, 4)


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    kappa: float = 0.0
    D: float = 1.0
    grid: GridCfg = field(default_factory=GridCfg)
    sde: SdeBlock = field(default_factory=SdeBlock)
    decay: DecayCfg = field(default_factory=DecayCfg)
    tol: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    out: str = "results"

    def sde_config(self, threads_block=8192) -> SdeConfig:
        s = self.sde
        return SdeConfig(kappa=self.kappa, D=self.D, dt=s.dt, n_particles=s.n_particles,
                         horizon=s.horizon, seed=self.seed, initial=s.initial, x0=tuple(s.x0),
                         alpha0=s.alpha0, sigma=s.sigma, block=threads_block)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["potential"] = self.potential.to_dict()
        return _jsonable(d)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


_SECTIONS = {"grid": GridCfg, "sde": SdeBlock, "decay": DecayCfg, "tol": Tolerances}
_POTENTIAL_KEYS = {"family": {"kind", "K", "s", "shift"}, "quadratic": {"kind", "omega", "shift"}}


def _coerce(name, value, default, errors):
    """Type-check a scalar against the type of its default."""
    if value is None and default is None:
        return None
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int) and not isinstance(default, bool):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float) or default is None:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple))
        if ok:
            value = tuple(value)
    else:
        ok = True
    if not ok:
        errors.append(f"{name}: expected {type(default).__name__}, got {value!r}")
    return value


def _build_section(cls, name, raw, errors):
    if not isinstance(raw, dict):
        errors.append(f"{name}: expected a table")
        return cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in raw.items():
        if k not in fields:
            errors.append(f"{name}.{k}: unknown key")
            continue
        kwargs[k] = _coerce(f"{name}.{k}", v, fields[k].default, errors)
    try:
        return cls(**kwargs)
    except ConfigError as e:
        errors.append(f"{name}: {e}")
    except (TypeError, ValueError) as e:
        errors.append(f"{name}: {e}")
    return cls()


def _validate_block(b: SdeBlock, errors):
    if not 0 < b.dt:
        errors.append("sde.dt: must satisfy dt > 0")
    if b.n_particles < 1:
        errors.append("sde.n_particles: must be >= 1")
    if len(b.coarsen) != 3 or any(int(c) < 1 for c in b.coarsen):
        errors.append("sde.coarsen: expected three positive integers")


def from_dict(raw: dict) -> RunConfig:
    errors = []
    top = {f.name: f for f in dataclasses.fields(RunConfig)}
    kwargs = {}
    for k, v in raw.items():
        if k not in top:
            errors.append(f"{k}: unknown key")
        elif k == "potential":
            if not isinstance(v, dict):
                errors.append("potential: expected a table")
                continue
            kind = v.get("kind", "family")
            allowed = _POTENTIAL_KEYS.get(kind)
            if allowed is None:
                errors.append(f"potential.kind: must be one of {sorted(_POTENTIAL_KEYS)}, got {kind!r}")
                continue
            for kk in v:
                if kk not in allowed:
                    errors.append(f"potential.{kk}: unknown key for kind {kind!r}")
            args = {kk: vv for kk, vv in v.items() if kk in allowed}
            for kk, vv in args.items():
                if kk != "kind" and (isinstance(vv, bool) or not isinstance(vv, (int, float))):
                    errors.append(f"potential.{kk}: expected a number, got {vv!r}")
            try:
                kwargs["potential"] = PotentialSpec(**{kk: (vv if kk == "kind" else float(vv))
                                                       for kk, vv in args.items()})
            except (ConfigError, TypeError, ValueError) as e:
                errors.append(f"potential: {e}")
        elif k in _SECTIONS:
            kwargs[k] = _build_section(_SECTIONS[k], k, v, errors)
        else:
            kwargs[k] = _coerce(k, v, top[k].default, errors)
    kappa = kwargs.get("kappa", 0.0)
    D = kwargs.get("D", 1.0)
    if isinstance(kappa, float) and not 0 <= kappa < 1:
        errors.append(f"kappa: must satisfy 0 <= kappa < 1, got {kappa}")
    if isinstance(D, float) and not D > 0:
        errors.append(f"D: must satisfy D > 0, got {D}")
    seed = kwargs.get("seed", 0)
    if isinstance(seed, int) and not 0 <= seed < 2**64:
        errors.append("seed: must be a 64-bit unsigned integer")
    if "sde" in kwargs:
        _validate_block(kwargs["sde"], errors)
    tol = kwargs.get("tol")
    if isinstance(tol, Tolerances) and not (tol.stationary > 0 and tol.quadrature > 0 and tol.tmax > 0):
        errors.append("tol: stationary, quadrature and tmax must be positive")
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(**kwargs)


def _parse_env_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_env(raw: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = json.loads(json.dumps(raw))
    for key, text in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].split("__")
        # keys are case-insensitive in the environment; match the known spelling
        node = out
        for i, part in enumerate(path):
            name = _match_key(part, i, path)
            if i == len(path) - 1:
                node[name] = _parse_env_value(text)
            else:
                node = node.setdefault(name, {})
    return out


def _match_key(part, depth, path):
    candidates = {"D", "K", "s", "omega", "shift", "kind", "kappa", "seed", "out"}
    for f in dataclasses.fields(RunConfig):
        candidates.add(f.name)
    for cls in _SECTIONS.values():
        candidates.update(f.name for f in dataclasses.fields(cls))
    for c in candidates:
        if c == part:
            return c
    for c in candidates:
        if c.lower() == part.lower():
            return c
    return part.lower()


def load_config(path=None, environ=None) -> RunConfig:
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_bytes()
        try:
            if path.suffix.lower() == ".json":
                raw = json.loads(text)
            else:
                raw = tomllib.loads(text.decode())
        except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"could not parse {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a table")
    return from_dict(apply_env(raw, environ))
