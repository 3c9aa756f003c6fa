"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored; every other line must set one
known key, at most once. Omitted keys take the defaults of :class:`RunConfig`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from typing import Any, Callable

from .errors import ConfigError
from .solver import Forcing

SUITES = ("geometry-identities", "variational", "recovery", "stokes", "energy", "kappa-limit")


@dataclass(frozen=True)
class RunConfig:
    # geometry of the initial curve; the shell's unstressed shape is the unit circle
    shape: str = "circle"
    radius: float = 1.0
    semi_axes: tuple[float, float] = (1.0, 1.0)
    modes: tuple[tuple[int, float], ...] = ()
    initial_velocity: str = "rest"
    omega: float = 0.0
    # resolution
    N: int = 64
    n_rings: int = 8
    # physics
    nu: float = 1.0
    c_mem: float = 1.0
    c_ben: float = 1.0
    kappa: float = 1e-3
    # scheme
    dt: float = 1e-3
    t_end: float = 0.1
    fixed_point_tol: float = 1e-8
    fixed_point_max_iters: int = 1
    forcing: Forcing = Forcing()
    # output
    output_dir: str = "output"
    frame_stride: int = 10
    mode: str = "simulate"

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    @property
    def suite(self) -> str | None:
        return self.mode.split(":", 1)[1] if self.mode.startswith("verify:") else None


def _float(text: str) -> float:
    value = float(text)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError("not a finite number")
    return value


def _int(text: str) -> int:
    return int(text, 10)


def _pair(text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return _float(parts[0]), _float(parts[1])


def _modes(text: str) -> tuple[tuple[int, float], ...]:
    text = text.strip()
    if text in ("", "none"):
        return ()
    out = []
    for item in text.split(","):
        k, sep, eps = item.partition(":")
        if not sep:
            raise ValueError(f"mode {item.strip()!r} is not of the form k:amplitude")
        out.append((_int(k.strip()), _float(eps.strip())))
    return tuple(out)


_CALL = re.compile(r"^(\w+)\s*(?:\((.*)\))?$")


def parse_forcing(text: str) -> Forcing:
    m = _CALL.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse forcing {text!r}")
    kind, args = m.group(1), m.group(2)
    params = () if args is None or not args.strip() else tuple(
        _float(a.strip()) for a in args.split(",")
    )
    return Forcing(kind, params)


def _word(text: str) -> str:
    if not text:
        raise ValueError("empty value")
    return text


_PARSERS: dict[str, Callable[[str], Any]] = {
    "shape": _word,
    "radius": _float,
    "semi_axes": _pair,
    "modes": _modes,
    "initial_velocity": _word,
    "omega": _float,
    "N": _int,
    "n_rings": _int,
    "nu": _float,
    "c_mem": _float,
    "c_ben": _float,
    "kappa": _float,
    "dt": _float,
    "t_end": _float,
    "fixed_point_tol": _float,
    "fixed_point_max_iters": _int,
    "forcing": parse_forcing,
    "output_dir": _word,
    "frame_stride": _int,
    "mode": _word,
}


def _range_error(key: str, value: Any) -> str | None:
    """Message describing why ``value`` is not admissible for ``key``."""
    positive = {"radius", "nu", "dt", "t_end", "fixed_point_tol"}
    nonneg = {"c_mem", "c_ben", "kappa"}
    if key in positive and not value > 0:
        return f"{key} must be positive"
    if key in nonneg and not value >= 0:
        return f"{key} must be nonnegative"
    if key == "shape" and value not in ("circle", "ellipse"):
        return "shape must be circle or ellipse"
    if key == "semi_axes" and not min(value) > 0:
        return "semi_axes must be positive"
    if key == "modes":
        for k, eps in value:
            if k < 1:
                return "mode numbers must be at least 1"
            if not abs(eps) < 0.5:
                return "mode amplitudes must be below 0.5 in magnitude"
    if key == "initial_velocity" and value not in ("rest", "rotation"):
        return "initial_velocity must be rest or rotation"
    if key == "N" and (value < 16 or value % 4):
        return "N must be a multiple of 4 and at least 16"
    if key == "n_rings" and value < 1:
        return "n_rings must be at least 1"
    if key in ("fixed_point_max_iters", "frame_stride") and value < 1:
        return f"{key} must be at least 1"
    if key == "mode" and value != "simulate":
        suite = value[len("verify:"):] if value.startswith("verify:") else None
        if suite not in SUITES:
            return f"mode must be simulate or verify:<{'|'.join(SUITES)}>"
    return None


def validate(config: RunConfig, lines: dict[str, int] | None = None) -> RunConfig:
    lines = lines or {}
    for f in fields(RunConfig):
        msg = _range_error(f.name, getattr(config, f.name))
        if msg:
            raise ConfigError(msg, lines.get(f.name), f.name)
    if round(config.N / 2 / config.n_rings) < 3:
        key = "n_rings" if "n_rings" in lines else "N"
        raise ConfigError("N/2 per ring too small: need N >= 6 n_rings", lines.get(key), key)
    return config


def parse_config(text: str) -> RunConfig:
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {key} = {value!r}: {exc}", lineno, key) from None
        msg = _range_error(key, values[key])
        if msg:
            raise ConfigError(msg, lineno, key)
        lines[key] = lineno
    return validate(RunConfig(**values), lines)


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Forcing):
        return str(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{k}:{eps!r}" for k, eps in value)
        if not value:
            return "none"
        return ", ".join(repr(v) for v in value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(config, f.name))}\n" for f in fields(RunConfig))
