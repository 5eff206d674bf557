"""Flat ``key = value`` sweep configuration files.

Blank lines and ``#`` comments are ignored. List values are comma-separated;
``lo..hi`` expands to every power of ten from ``lo`` to ``hi``, so
``beta = 1e-4..1e2`` means seven decades. See ``DESK_PRESET`` for every key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

from sik.operators import BOUNDARIES
from sik.solvers import Strategy


class ConfigError(ValueError):
    pass


DESK_PRESET = """\
# 64x64 phantom, 5x5 uniform blur, sigma = 1e-2, 30 iterations per cell.
size = 64
sigma = 1e-2
kernel = 5
boundary = circular
levels = 2
seed = 0
iters = 30
strategies = ista, eriwsta, irl1, wlp, nw4
beta = 1e-4..1e2
gamma = 1e-5..1e1
delta = 1e-5..1e1
p = 0.5
record_timing = true
"""


@dataclass
class SweepConfig:
    size: int = 64
    sigma: float = 1e-2
    kernel: int = 5
    boundary: str = "circular"
    levels: int = 2
    seed: int = 0
    modified: bool = False
    iters: int = 100
    strategies: list = field(default_factory=lambda: [s.value for s in Strategy])
    beta: list = field(default_factory=lambda: [1e-3])
    gamma: list = field(default_factory=lambda: [1e-2])
    delta: list = field(default_factory=lambda: [1e-3])
    p: float = 0.5
    workers: Optional[int] = None
    trace_stride: int = 1
    record_timing: bool = True
    observed: Optional[str] = None
    truth: Optional[str] = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_LIST_KEYS = {"beta", "gamma", "delta"}


def _parse_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as a number") from None


def _parse_float_list(key, text):
    values = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        if ".." in item:
            lo_s, hi_s = item.split("..", 1)
            lo, hi = _parse_float(key, lo_s), _parse_float(key, hi_s)
            if lo <= 0 or hi <= 0:
                raise ConfigError(f"{key}: decade range bounds must be positive")
            a, b = math.log10(lo), math.log10(hi)
            if abs(a - round(a)) > 1e-9 or abs(b - round(b)) > 1e-9:
                raise ConfigError(f"{key}: decade range bounds must be powers of ten")
            values.extend(float(f"1e{e}") for e in range(round(a), round(b) + 1))
        else:
            values.append(_parse_float(key, item))
    if not values:
        raise ConfigError(f"{key}: empty list")
    if any(not (v > 0 and math.isfinite(v)) for v in values):
        raise ConfigError(f"{key}: values must be positive")
    return values


def _parse_bool(key, text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as an integer") from None


def parse_config(text: str) -> SweepConfig:
    cfg = SweepConfig()
    known = {f.name for f in fields(SweepConfig)}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key in _LIST_KEYS:
            parsed = _parse_float_list(key, value)
        elif key == "strategies":
            parsed = [s.strip() for s in value.split(",") if s.strip()]
            if not parsed:
                raise ConfigError("strategies: empty list")
            for s in parsed:
                try:
                    Strategy(s)
                except ValueError:
                    raise ConfigError(f"strategies: unknown strategy {s!r}") from None
        elif key in ("size", "kernel", "levels", "seed", "iters", "workers", "trace_stride"):
            parsed = _parse_int(key, value)
        elif key in ("sigma", "p"):
            parsed = _parse_float(key, value)
        elif key in ("modified", "record_timing"):
            parsed = _parse_bool(key, value)
        elif key == "boundary":
            if value not in BOUNDARIES:
                raise ConfigError(f"boundary: must be one of {BOUNDARIES}, got {value!r}")
            parsed = value
        else:
            parsed = value
        setattr(cfg, key, parsed)
    _check(cfg)
    return cfg


def _check(cfg: SweepConfig):
    if cfg.size < 16:
        raise ConfigError(f"size: must be >= 16, got {cfg.size}")
    if cfg.kernel < 1 or cfg.kernel % 2 == 0:
        raise ConfigError(f"kernel: must be a positive odd integer, got {cfg.kernel}")
    if cfg.sigma < 0:
        raise ConfigError("sigma: must be >= 0")
    if cfg.iters < 0:
        raise ConfigError("iters: must be >= 0")
    if cfg.levels < 1:
        raise ConfigError("levels: must be >= 1")
    if not 0 < cfg.p < 1:
        raise ConfigError("p: must lie in (0, 1)")
    if cfg.workers is not None and cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")
    if cfg.trace_stride < 1:
        raise ConfigError("trace_stride: must be >= 1")
    if (cfg.observed is None) != (cfg.truth is None):
        raise ConfigError("observed and truth must be given together")
