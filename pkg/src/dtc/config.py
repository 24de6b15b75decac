"""Run configuration for the ``dtc`` command.

A configuration is a flat TOML table. Numbers may be written as arithmetic
strings in ``pi`` (``T = "2.5*pi"``). Ranges are ``[start, stop, steps]``
and expand to ``steps`` equally spaced values including both ends. Energies
are in units of the tunneling ``J`` and times in units of ``1/J``.

Presets are ordinary configuration files shipped in ``dtc/presets``; a
user file given together with a preset overrides the preset key by key.
"""

from __future__ import annotations

import ast
import math
import operator
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("spectrum", "evolve", "mf-dimer", "mf-ring", "scaling", "ucr")
DRIVES = ("two-step", "constant")
INITIAL_STATES = ("site1", "site2", "bec", "coherent")
DIMER_AXES = ("gammaN", "UN", "alpha", "T")
RING_AXES = ("gammaN", "UN", "alpha", "Jf")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval(node.operand))
    raise ValueError("only numbers, pi and + - * / ** are allowed")


def parse_number(value, name: str = "value") -> float:
    """Float from a number or an arithmetic string such as ``"pi/8"``."""
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(_eval(ast.parse(value, mode="eval")))
        except (SyntaxError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{name}: cannot evaluate {value!r}: {exc}") from None
    raise ConfigError(f"{name}: expected a number, got {type(value).__name__}")


def _int(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    return value


def _str(value, name):
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def _float_list(value, name):
    if not isinstance(value, list):
        raise ConfigError(f"{name}: expected a list")
    return [parse_number(v, f"{name}[{i}]") for i, v in enumerate(value)]


def _int_list(value, name):
    if not isinstance(value, list):
        raise ConfigError(f"{name}: expected a list")
    return [_int(v, f"{name}[{i}]") for i, v in enumerate(value)]


def _range(value, name):
    if not isinstance(value, list) or len(value) not in (0, 3):
        raise ConfigError(f"{name}: expected [start, stop, steps]")
    if not value:
        return []
    start, stop = parse_number(value[0], f"{name}[0]"), parse_number(value[1], f"{name}[1]")
    steps = _int(value[2], f"{name}[2]")
    if steps < 1:
        raise ConfigError(f"{name}: steps must be >= 1")
    return [start, stop, steps]


def _num(value, name):
    return parse_number(value, name)


def _opt(kind, default, doc):
    return field(default=default, metadata={"kind": kind, "doc": doc})


@dataclass
class RunConfig:
    mode: str = _opt(_str, "spectrum", "one of " + ", ".join(MODES))
    # dimer model
    N: int = _opt(_int, 30, "particle number")
    N_list: list = _opt(_int_list, None, "particle numbers for the scaling mode")
    J: float = _opt(_num, 1.0, "base tunneling (energy unit)")
    J1: float = _opt(_num, 4.0, "tunneling during the flip segment [0, xi)")
    J2: float = _opt(_num, 1.0, "tunneling during [xi, T)")
    alpha: float = _opt(_num, 0.0, "on-site offset (site 1; odd sites on the ring)")
    UN: float = _opt(_num, -4.0, "interaction U*N")
    gammaN: float = _opt(_num, 0.1, "dissipation gamma*N")
    T: float = _opt(_num, 2.5 * math.pi, "drive period")
    xi: float = _opt(_num, math.pi / 8, "flip duration")
    drive: str = _opt(_str, "two-step", "two-step or constant (J throughout)")
    # ring
    M: int = _opt(_int, 6, "ring size (even)")
    Jf: float = _opt(_num, 5.0, "ring flip tunneling")
    initial_site: int = _opt(_int, 1, "ring site initially holding all atoms (1-based)")
    W: int = _opt(_int, 512, "Fourier window in periods")
    transient: int = _opt(_int, 100, "periods discarded before the Fourier window")
    # sweeps
    J1_range: list = _opt(_range, None, "spectrum grid axis [start, stop, steps]")
    UN_range: list = _opt(_range, None, "spectrum grid axis [start, stop, steps]")
    axis: str = _opt(_str, "", "mean-field scan axis")
    axis_range: list = _opt(_range, None, "scan values as [start, stop, steps]")
    axis_values: list = _opt(_float_list, None, "explicit scan values (used if axis_range is empty)")
    gammaN_list: list = _opt(_float_list, None, "dissipation values for the ucr mode")
    # runs
    initial: str = _opt(_str, "site2", "initial quantum state: " + ", ".join(INITIAL_STATES))
    theta: float = _opt(_num, math.pi / 2, "coherent-state polar angle")
    phi: float = _opt(_num, 0.0, "coherent-state azimuth")
    n_periods: int = _opt(_int, 40, "periods of quantum evolution")
    samples_per_segment: int = _opt(_int, 0, "extra samples inside each drive segment")
    n_random_inits: int = _opt(_int, 10, "random initial states per scan value")
    n_transient: int = _opt(_int, 500, "mean-field transient periods")
    n_record: int = _opt(_int, 50, "mean-field recorded periods")
    radius: float = _opt(_num, 1e-3, "attractor clustering radius")
    seed: int = _opt(_int, 0, "base seed for random initial states")
    rtol: float = _opt(_num, 1e-9, "ODE relative tolerance")
    atol: float = _opt(_num, 1e-12, "ODE absolute tolerance")
    max_N: int = _opt(_int, 40, "resource guard on the particle number")

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) is None:
                setattr(self, f.name, [])
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.N < 1:
            raise ConfigError("N: must be >= 1")
        if self.J <= 0 or self.J1 <= 0 or self.J2 <= 0 or self.Jf <= 0:
            raise ConfigError("J, J1, J2, Jf: tunneling must be > 0")
        if self.gammaN < 0:
            raise ConfigError("gammaN: must be >= 0")
        if self.drive not in DRIVES:
            raise ConfigError(f"drive: must be one of {', '.join(DRIVES)}")
        if self.T <= 0:
            raise ConfigError("T: must be > 0")
        if self.drive == "two-step" and not 0 < self.xi < self.T:
            raise ConfigError("xi: need 0 < xi < T")
        if self.initial not in INITIAL_STATES:
            raise ConfigError(f"initial: must be one of {', '.join(INITIAL_STATES)}")
        if self.M < 2 or self.M % 2:
            raise ConfigError("M: ring size must be even and >= 2")
        if self.mode == "mf-ring" and not 0 < self.xi < self.T / 2:
            raise ConfigError("xi: ring drive needs 0 < xi < T/2")
        if not 1 <= self.initial_site <= self.M:
            raise ConfigError("initial_site: must lie in 1..M")
        for name in ("W", "n_periods", "n_random_inits", "n_record", "max_N"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        for name in ("transient", "n_transient", "samples_per_segment", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0")
        if self.seed >= 2**64:
            raise ConfigError("seed: must fit in 64 bits")
        if self.rtol <= 0 or self.atol <= 0:
            raise ConfigError("rtol, atol: must be > 0")
        if self.axis:
            allowed = RING_AXES if self.mode == "mf-ring" else DIMER_AXES
            if self.axis not in allowed:
                raise ConfigError(f"axis: must be one of {', '.join(allowed)} for mode {self.mode}")
        if bool(self.J1_range) != bool(self.UN_range):
            raise ConfigError("J1_range, UN_range: give both or neither")

    @property
    def scan_values(self) -> np.ndarray:
        if self.axis_range:
            start, stop, steps = self.axis_range
            return np.linspace(start, stop, steps)
        return np.asarray(self.axis_values, dtype=float)

    def expanded(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def header_lines(self) -> list[str]:
        """Every field as ``key = value``, defaults included."""
        return [f"{k} = {_format(v)}" for k, v in self.expanded().items()]


def _format(v) -> str:
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_format(x) for x in v) + "]"
    return str(v)


def schema() -> list[tuple[str, str, object]]:
    """``(name, description, default)`` for every configuration key."""
    return [(f.name, f.metadata["doc"], f.default if f.default is not None else []) for f in fields(RunConfig)]


def preset_names() -> list[str]:
    d = resources.files("dtc") / "presets"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".toml"))


def _read_toml(text: str, where: str) -> dict:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{where}: tables are not supported (found [{nested[0]}])")
    return data


def load_preset(name: str) -> dict:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = (resources.files("dtc") / "presets" / f"{name}.toml").read_text()
    return _read_toml(text, f"preset {name}")


def build_config(data: dict) -> RunConfig:
    kinds = {f.name: f.metadata["kind"] for f in fields(RunConfig)}
    kwargs = {}
    for key, value in data.items():
        if key not in kinds:
            raise ConfigError(f"unknown field {key!r}")
        kwargs[key] = kinds[key](value, key)
    return RunConfig(**kwargs)


def load_config(
    path: str | Path | None = None,
    preset: str | None = None,
    overrides: dict | None = None,
    mode: str | None = None,
) -> RunConfig:
    """Preset values, then the file at `path`, then `overrides`. `mode` is
    used when no source sets one."""
    data = load_preset(preset) if preset else {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        data.update(_read_toml(text, str(p)))
    data.update(overrides or {})
    if mode is not None:
        data.setdefault("mode", mode)
    return build_config(data)
