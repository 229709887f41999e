"""Run configuration: a flat ``section.key = value`` text file with strict key checking.

Example::

    # standing wave
    grid.ny = 128
    grid.nz = 64
    physics.eps = 0.1, 0.01, 0.001, 0.0001, 0
    physics.T = 1.0
    physics.dt = 0.01
    initial.k = 1
    out = results/sweep

Lists are comma separated, booleans are ``true``/``false``.  Every key has a default;
see the dataclasses below for the schema.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    ny: int = 128
    nz: int = 64
    L: float = 2 * math.pi
    H: float = 4.0
    d: int = 1


@dataclass
class PhysicsConfig:
    g: float = 1.0
    eps: tuple = (0.0,)
    T: float = 1.0
    dt: float = 0.01  # 0 selects cfl * cfl_limit
    cfl: float = 0.5


@dataclass
class InitialConfig:
    k: int = 1
    a: float = 1e-3
    velocity: str = "rest"  # rest | linear
    noise: float = 0.0  # seeded random perturbation of h (relative to a)


@dataclass
class ChiConfig:
    r1: float = 1.0
    r2: float = 2.0


@dataclass
class TolConfig:
    div: float = 1e-5
    bc: float = 1e-8
    solver: float = 1e-11


@dataclass
class MonitorConfig:
    m: int = 4
    every: int = 10
    checkpoint: bool = True
    window: tuple = (0.5, 0.75)  # depth window of the Q_m volume norms, fractions of H; empty = none


@dataclass
class KernelConfig:
    heat_n: int = 10
    heat_gamma_min: float = 1.0
    sym_n: int = 1000
    sym_m: float = 0.5
    sym_M: float = 4.0
    sym_c0: float = 0.25
    kappa_min: float = 1e-3
    fp_eps: tuple = (0.1, 0.01, 0.001)
    fp_times: tuple = (0.1, 0.5, 1.0)
    fp_drift: float = 0.5


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    chi: ChiConfig = field(default_factory=ChiConfig)
    tol: TolConfig = field(default_factory=TolConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    kernels: KernelConfig = field(default_factory=KernelConfig)
    out: str = "results"
    seed: int = 0
    workers: int = 1

    def validate(self) -> "RunConfig":
        eps = self.physics.eps
        if any(e < 0 for e in eps):
            raise ConfigError("physics.eps entries must be >= 0")
        pos = [e for e in eps if e > 0]
        if any(b >= a for a, b in zip(pos, pos[1:])):
            raise ConfigError("physics.eps must be strictly decreasing")
        if eps.count(0.0) > 1:
            raise ConfigError("physics.eps lists 0 more than once")
        if self.physics.T <= 0 or self.physics.dt < 0:
            raise ConfigError("physics.T must be positive and physics.dt nonnegative")
        if self.initial.velocity not in ("rest", "linear"):
            raise ConfigError("initial.velocity must be 'rest' or 'linear'")
        w = self.monitor.window
        if w and not (len(w) == 2 and 0 < w[0] < w[1] <= 1):
            raise ConfigError("monitor.window must be empty or 'full, zero' with 0 < full < zero <= 1")
        if self.monitor.every < 1 or self.monitor.m < 1:
            raise ConfigError("monitor.every and monitor.m must be >= 1")
        return self


def _convert(raw: str, typ, key):
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        if typ in (tuple, "tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc


def _fields(obj):
    return {f.name: f for f in dataclasses.fields(obj)}


def set_key(cfg: RunConfig, key: str, raw: str) -> None:
    parts = key.split(".")
    target = cfg
    for p in parts[:-1]:
        sub = _fields(target).get(p)
        if sub is None or not dataclasses.is_dataclass(getattr(target, p)):
            raise ConfigError(f"unknown config section {p!r} in {key!r}")
        target = getattr(target, p)
    f = _fields(target).get(parts[-1])
    if f is None or dataclasses.is_dataclass(getattr(target, parts[-1])):
        raise ConfigError(f"unknown config key {key!r}")
    setattr(target, parts[-1], _convert(raw.strip(), f.type, key))


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        set_key(cfg, key.strip(), raw)
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (every key written explicitly)."""
    lines = []

    def walk(obj, prefix):
        for name, f in _fields(obj).items():
            val = getattr(obj, name)
            if dataclasses.is_dataclass(val):
                walk(val, prefix + name + ".")
            elif isinstance(val, tuple):
                lines.append(f"{prefix}{name} = {', '.join(repr(float(x)) for x in val)}")
            elif isinstance(val, bool):
                lines.append(f"{prefix}{name} = {str(val).lower()}")
            else:
                lines.append(f"{prefix}{name} = {val!r}" if isinstance(val, float) else f"{prefix}{name} = {val}")

    walk(cfg, "")
    return "\n".join(lines) + "\n"
