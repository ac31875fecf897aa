"""Line-oriented experiment configuration: ``[section]`` headers and ``key = value`` lines."""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from .dynamics import (
    MISIUREWICZ_A0,
    CircleTimesD,
    FullShift,
    MapSystem,
    Quadratic,
    SineMorse,
    TabulatedMorse,
    Viana,
)
from .errors import ConfigError, ErgolabError
from .potentials import (
    Analytic,
    BumpRegion,
    Constant,
    CylinderSet,
    Potential,
    PrefixTable,
    ShiftBump,
    SineBump,
    TentBump,
    make_bump_pair,
)

SECTIONS = ("map", "potential", "run", "output")

MAP_KEYS = {"kind", "d", "a0", "alpha", "b", "k", "beta_step", "grid_bits"}
POTENTIAL_KEYS = {"kind", "c", "family", "t", "region", "theta_region", "bump", "amp",
                  "word", "values", "length", "table"}
RUN_KEYS = {
    "operation", "seed", "n", "theta0", "x0", "word", "sigma", "delta", "horizon", "threshold",
    "seeds", "horizon_n", "samples", "n_list", "eps_list", "resolution", "sub_alphabet",
    "N", "n_max", "gamma_tol", "m", "m_x", "mode", "samples_per_cell", "tol", "max_iter",
    "triplets",
}
OUTPUT_KEYS = {"dir", "svg"}
ALLOWED = {"map": MAP_KEYS, "potential": POTENTIAL_KEYS, "run": RUN_KEYS, "output": OUTPUT_KEYS}


@dataclass
class ExperimentConfig:
    map: dict = field(default_factory=dict)
    potential: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @property
    def operation(self) -> str | None:
        return self.run.get("operation")

    def serialize(self, include_output: bool = True) -> str:
        lines = []
        for sec in SECTIONS:
            if sec == "output" and not include_output:
                continue
            body = getattr(self, sec)
            if not body:
                continue
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {body[k]}" for k in sorted(body))
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        return hashlib.sha256(self.serialize(include_output=False).encode()).hexdigest()[:16]

    def set(self, dotted: str, value: str):
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key=value")
        sec, key = dotted.split(".", 1)
        _check_key(sec, key)
        getattr(self, sec)[key] = value.strip()


def _check_key(sec: str, key: str):
    if sec not in ALLOWED:
        raise ConfigError(f"unknown section [{sec}]")
    if key not in ALLOWED[sec]:
        raise ConfigError(f"unknown key {key!r} in [{sec}]")


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = ExperimentConfig()
    for sec in cp.sections():
        if sec not in ALLOWED:
            raise ConfigError(f"unknown section [{sec}]")
        for key, val in cp.items(sec):
            _check_key(sec, key)
            getattr(cfg, sec)[key] = val.strip()
    if cfg.map:
        build_map(cfg.map)  # validate eagerly
    return cfg


# ---------------------------------------------------------------------------
# typed accessors

def get_int(sec: dict, key: str, default=None, name: str = "") -> int:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing required key {key!r}{name}")
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ConfigError(f"key {key!r} must be an integer, got {sec[key]!r}") from None


def get_float(sec: dict, key: str, default=None, name: str = "") -> float:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing required key {key!r}{name}")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"key {key!r} must be a number, got {sec[key]!r}") from None


def get_floats(sec: dict, key: str, default=None) -> list[float]:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return list(default)
    try:
        return [float(v) for v in sec[key].split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"key {key!r} must be a comma-separated list of numbers") from None


def get_ints(sec: dict, key: str, default=None) -> list[int]:
    vals = get_floats(sec, key, default)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"key {key!r} must list integers")
    return [int(v) for v in vals]


def build_map(sec: dict) -> MapSystem:
    kind = sec.get("kind")
    if kind is None:
        raise ConfigError("missing required key 'kind' in [map]")
    try:
        if kind == "circle_times_d":
            d = get_int(sec, "d", name=" in [map]")
            if d < 2:
                raise ConfigError("degree must be >= 2")
            return CircleTimesD(d)
        if kind == "quadratic":
            return Quadratic(_a0(sec))
        if kind == "viana":
            d = get_int(sec, "d", 16)
            if d < 2:
                raise ConfigError("degree must be >= 2")
            b = sec.get("b", "sine")
            morse = SineMorse() if b == "sine" else TabulatedMorse(tuple(get_floats(sec, "b")))
            return Viana(d, _a0(sec), get_float(sec, "alpha", 0.01), morse,
                         get_int(sec, "grid_bits", 14), get_float(sec, "beta_step", 1e-3))
        if kind == "full_shift":
            return FullShift(get_int(sec, "k", name=" in [map]"))
    except ConfigError:
        raise
    except ErgolabError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown map kind {kind!r}")


def _a0(sec: dict) -> float:
    if sec.get("a0", "misiurewicz") == "misiurewicz":
        return MISIUREWICZ_A0
    return get_float(sec, "a0")


def _pair(sec: dict, key: str, default=None):
    vals = get_floats(sec, key, default)
    if len(vals) != 2:
        raise ConfigError(f"key {key!r} needs two comma-separated numbers")
    return vals


def build_potential(sec: dict, system: MapSystem) -> Potential:
    kind = sec.get("kind", "constant")
    if kind == "constant":
        return Constant(get_float(sec, "c", 0.0))
    if kind == "analytic":
        return Analytic(sec.get("family", "cos"), get_float(sec, "t"))
    if kind == "prefix_table":
        k = system.k if isinstance(system, FullShift) else 2
        return PrefixTable(k, get_int(sec, "length"), tuple(get_floats(sec, "table")))
    if kind == "bump_pair":
        if isinstance(system, FullShift):
            word = tuple(int(ch) for ch in sec.get("word", "01"))
            return make_bump_pair(system, CylinderSet(word), ShiftBump(tuple(get_floats(sec, "values", [1.0]))))
        lo, hi = _pair(sec, "region")
        tlo, thi = _pair(sec, "theta_region", [0.0, 1.0])
        amp = get_float(sec, "amp", 1.0)
        shape = sec.get("bump", "sine")
        if shape not in ("sine", "tent"):
            raise ConfigError(f"unknown bump shape {shape!r}")
        bump = SineBump(amp) if shape == "sine" else TentBump(amp)
        return make_bump_pair(system, BumpRegion(lo, hi, tlo, thi), bump)
    raise ConfigError(f"unknown potential kind {kind!r}")
