"""Simulation configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .grid import Grid
from .turbulence import TurbulenceParams

log = logging.getLogger(__name__)

REGIMES = ("distinguishable", "indistinguishable")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    wavelength: float = 1550e-9
    path_length: float = 10e3
    waist: float = 0.03
    n_points: int = 128
    spacing: float = 2.5e-3
    outer_scale: float = 30.0
    inner_scale: float = 5e-3
    n_slabs: int = 40
    rho_z: float = 0.9
    n_mc: int = 200
    cn2_min: float = 1e-16
    cn2_max: float = 1e-13
    cn2_points: int = 13
    # explicit list; when set it replaces the log-spaced cn2_min..cn2_max grid
    cn2_sweep: tuple[float, ...] | None = None
    n_modes_sweep: tuple[int, ...] = (2, 3, 4, 5)
    master_seed: int = 1
    absorber: bool = False
    guard_fraction: float = 0.1
    subharmonics: bool = False
    regimes: tuple[str, ...] = REGIMES

    def __post_init__(self):
        if self.n_mc < 1:
            raise ConfigError("n_mc must be >= 1")
        if self.cn2_points < 1:
            raise ConfigError("cn2_points must be >= 1")
        if not 0 < self.cn2_min <= self.cn2_max:
            raise ConfigError("need 0 < cn2_min <= cn2_max")
        if self.cn2_sweep is not None and any(c < 0 for c in self.cn2_sweep):
            raise ConfigError("cn2_sweep values must be non-negative")
        bad = [n for n in self.n_modes_sweep if n not in (2, 3, 4, 5)]
        if bad or not self.n_modes_sweep:
            raise ConfigError(f"n_modes_sweep must be a non-empty subset of {{2,3,4,5}}, got {self.n_modes_sweep}")
        bad = [r for r in self.regimes if r not in REGIMES]
        if bad or not self.regimes:
            raise ConfigError(f"unknown regime(s) {bad}; choose from {REGIMES}")
        try:
            self.grid()
            self.params(0.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def cn2_values(self) -> tuple[float, ...]:
        if self.cn2_sweep is not None:
            return tuple(self.cn2_sweep)
        if self.cn2_points == 1:
            return (self.cn2_min,)
        return tuple(float(c) for c in np.logspace(np.log10(self.cn2_min), np.log10(self.cn2_max), self.cn2_points))

    def grid(self) -> Grid:
        return Grid(self.n_points, self.spacing)

    def params(self, cn2: float) -> TurbulenceParams:
        return TurbulenceParams(
            cn2=cn2,
            outer_scale=self.outer_scale,
            inner_scale=self.inner_scale,
            wavelength=self.wavelength,
            path_length=self.path_length,
            n_slabs=self.n_slabs,
            rho_z=self.rho_z,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}
_INT = {"n_points", "n_slabs", "n_mc", "cn2_points", "master_seed"}
_BOOL = {"absorber", "subharmonics"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if key in _INT:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if key == "cn2_sweep":
        if raw.lower() in ("", "none"):
            return None
        return tuple(float(v) for v in raw.split(","))
    if key == "n_modes_sweep":
        return tuple(int(v) for v in raw.split(","))
    if key == "regimes":
        return tuple(v.strip() for v in raw.split(","))
    return float(raw)


def parse_assignments(lines: Iterable[str], source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, raw = text.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        if key not in FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    values = parse_assignments(text.splitlines(), str(path))
    missing = sorted(set(FIELDS) - set(values))
    if missing:
        log.info("config %s: using defaults for %s", path, ", ".join(missing))
    return SimConfig(**values)


def with_overrides(config: SimConfig, overrides: Iterable[str]) -> SimConfig:
    values = parse_assignments(overrides, "--set")
    return dataclasses.replace(config, **values)


def format_config(config: SimConfig) -> str:
    lines = []
    for key, value in config.as_dict().items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif value is None:
            text = "none"
        elif isinstance(value, (tuple, list)):
            text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
