"""TOML run configuration: parsing with line-referenced errors, and serialization.

Grammar (all sections except ``domain``/``system`` optional)::

    [domain]
    kind = "interval"            # or "rectangle"
    lengths = [1.0]              # [L] or [a, b]

    [system]
    k = 50.0

    [[actuators]]                # repeat per device; same keys for [[sensors]]
    label = "a1"
    zone = [[0.0, 0.5]]          # one [lo, hi] per axis
    profile = { kind = "constant", value = 1.0 }
    # profile kinds: constant{value} | polynomial{coefficients}
    #   | sine_product{modes, amplitude} | tabulated{positions, values} | tabulated{csv}

    [tolerances]
    cluster = 1e-9
    rank = 1e-10
    zero = 1e-9

    [quadrature]
    order = 16
    cells = 8

    [truncation]
    verdict_policy = "auto"      # auto | count | threshold
    verdict_modes = 20
    simulation_modes = 200       # interval: number of clusters
    simulation_max_index = 30    # rectangle: max mode index per axis

    [analysis]
    k_reading = "refined"        # or "literal"

    [simulation]
    sigma = 1.0
    t_max = 10.0                 # default 10 / sigma
    points = 400
    feedback = true
    initial_state = { kind = "polynomial", coefficients = [0.0, 1.0, -1.0] }
    # initial_state kinds: eigenfunction{modes} | combination{modes, coefficients}
    #   | polynomial{coefficients} | tabulated{positions, values}

    [oracle]
    resolution = 511             # interior nodes per axis (default 511 in 1-D, 63 in 2-D)
    rank = 1e-8
    cluster = 1e-6
    guard_factor = 10.0
    t_max = 1.0
    points = 101

    [output]
    dir = "out"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import tomli

from outstab.devices import Device, Profile, QuadratureSettings, Zone, validate_device_set
from outstab.mode_analysis import K_READINGS, AnalysisSettings
from outstab.simulator import InitialState
from outstab.spectral_core import Domain


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class Tolerances:
    cluster: float = 1e-9
    rank: float = 1e-10
    zero: float = 1e-9


@dataclass(frozen=True)
class Truncation:
    verdict_policy: str = "auto"
    verdict_modes: int = 20
    simulation_modes: int = 200
    simulation_max_index: int = 30


@dataclass(frozen=True)
class SimulationSettings:
    sigma: float = 1.0
    t_max: float | None = None
    points: int = 400
    feedback: bool = True
    initial_state: InitialState | None = None

    @property
    def horizon(self) -> float:
        return self.t_max if self.t_max is not None else 10.0 / self.sigma


@dataclass(frozen=True)
class OracleSettings:
    resolution: int | None = None
    rank: float = 1e-8
    cluster: float = 1e-6
    guard_factor: float = 10.0
    t_max: float = 1.0
    points: int = 101


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    k: float
    actuators: tuple[Device, ...] = ()
    sensors: tuple[Device, ...] = ()
    tolerances: Tolerances = Tolerances()
    quadrature: QuadratureSettings = QuadratureSettings()
    truncation: Truncation = Truncation()
    k_reading: str = "refined"
    simulation: SimulationSettings = SimulationSettings()
    oracle: OracleSettings = OracleSettings()
    output_dir: str | None = None

    def analysis_settings(self) -> AnalysisSettings:
        t = self.tolerances
        return AnalysisSettings(
            cluster_tol=t.cluster,
            rank_tol=t.rank,
            zero_tol=t.zero,
            policy=self.truncation.verdict_policy,
            modes=self.truncation.verdict_modes,
            reading=self.k_reading,
            quadrature=self.quadrature,
        )

    def with_overrides(self, k_reading: str | None = None, modes: int | None = None, output_dir: str | None = None) -> "RunConfig":
        cfg = self
        if k_reading is not None:
            cfg = replace(cfg, k_reading=k_reading)
        if modes is not None:
            cfg = replace(cfg, truncation=replace(cfg.truncation, verdict_modes=modes))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        return cfg


# -- parsing ------------------------------------------------------------------

_SECTIONS = {
    "domain": {"kind", "lengths"},
    "system": {"k"},
    "actuators": {"label", "zone", "profile"},
    "sensors": {"label", "zone", "profile"},
    "tolerances": {f.name for f in fields(Tolerances)},
    "quadrature": {"order", "cells"},
    "truncation": {f.name for f in fields(Truncation)},
    "analysis": {"k_reading"},
    "simulation": {f.name for f in fields(SimulationSettings)},
    "oracle": {f.name for f in fields(OracleSettings)},
    "output": {"dir"},
}
_PROFILE_KEYS = {
    "constant": {"kind", "value"},
    "polynomial": {"kind", "coefficients"},
    "sine_product": {"kind", "modes", "amplitude"},
    "tabulated": {"kind", "positions", "values", "csv"},
}
_STATE_KEYS = {
    "eigenfunction": {"kind", "modes"},
    "combination": {"kind", "modes", "coefficients"},
    "polynomial": {"kind", "coefficients"},
    "tabulated": {"kind", "positions", "values"},
}


class _Locator:
    """Maps a key path to the first line that mentions it (1-based)."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line(self, section: str, index: int | None = None, key: str | None = None) -> int | None:
        header = re.compile(r"^\s*\[\[?\s*" + re.escape(section) + r"\s*\]\]?\s*(#.*)?$")
        seen = -1
        start = None
        for i, ln in enumerate(self.lines):
            if header.match(ln):
                seen += 1
                if index is None or seen == index:
                    start = i
                    break
        if start is None:
            return None
        if key is None:
            return start + 1
        pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
        for i in range(start + 1, len(self.lines)):
            if re.match(r"^\s*\[", self.lines[i]):
                break
            if pat.match(self.lines[i]):
                return i + 1
        return start + 1


class _Errors:
    def __init__(self, loc: _Locator):
        self.loc = loc
        self.items: list[str] = []

    def add(self, msg: str, section: str, index: int | None = None, key: str | None = None) -> None:
        line = self.loc.line(section, index, key)
        where = f"line {line}: " if line else ""
        self.items.append(f"{where}{msg}")


def _num(value: Any, what: str, err: _Errors, section: str, index=None, key=None, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        err.add(f"{what}: expected a number, got {value!r}", section, index, key)
        return None
    if integer and not isinstance(value, int):
        err.add(f"{what}: expected an integer, got {value!r}", section, index, key)
        return None
    if not math.isfinite(value):
        err.add(f"{what}: must be finite", section, index, key)
        return None
    return value


def _parse_profile(raw: Any, base: Path | None, err: _Errors, section: str, idx: int, label: str) -> Profile | None:
    if raw is None:
        return Profile.constant()
    if not isinstance(raw, dict) or "kind" not in raw:
        err.add(f"{section} {label!r}: profile must be a table with a 'kind'", section, idx, "profile")
        return None
    kind = raw["kind"]
    if kind not in _PROFILE_KEYS:
        err.add(f"{section} {label!r}: unknown profile kind {kind!r}", section, idx, "profile")
        return None
    unknown = set(raw) - _PROFILE_KEYS[kind]
    if unknown:
        err.add(f"{section} {label!r}: unknown profile key(s) {sorted(unknown)}", section, idx, "profile")
        return None
    try:
        if kind == "constant":
            v = _num(raw.get("value", 1.0), f"{section} {label!r} profile value", err, section, idx, "profile")
            return None if v is None else Profile.constant(v)
        if kind == "polynomial":
            return Profile.polynomial(raw["coefficients"])
        if kind == "sine_product":
            return Profile.sine_product(raw["modes"], raw.get("amplitude", 1.0))
        if "csv" in raw:
            path = Path(raw["csv"])
            if base is not None and not path.is_absolute():
                path = base / path
            return Profile.from_csv(path)
        return Profile.tabulated(raw["positions"], raw["values"])
    except (KeyError, TypeError, ValueError, OSError) as exc:
        err.add(f"{section} {label!r}: bad {kind} profile ({exc})", section, idx, "profile")
        return None


def _parse_devices(items: Any, role: str, section: str, domain: Domain | None, base, err: _Errors) -> list[Device]:
    if not isinstance(items, list):
        err.add(f"'{section}' must be an array of tables ([[{section}]])", section)
        return []
    out = []
    for idx, raw in enumerate(items):
        label = str(raw.get("label", f"{role[0]}{idx + 1}"))
        unknown = set(raw) - _SECTIONS[section]
        for key in sorted(unknown):
            err.add(f"unknown key '{key}' in {section} {label!r}", section, idx, key)
        zone_raw = raw.get("zone")
        if zone_raw is None:
            err.add(f"{section} {label!r}: missing required key 'zone'", section, idx)
            continue
        try:
            zone = Zone(tuple(tuple(pair) for pair in zone_raw))
            if any(len(pair) != 2 for pair in zone_raw):
                raise ValueError("each zone axis needs [lo, hi]")
        except (TypeError, ValueError) as exc:
            err.add(f"{section} {label!r}: bad zone ({exc})", section, idx, "zone")
            continue
        profile = _parse_profile(raw.get("profile"), base, err, section, idx, label)
        if profile is None:
            continue
        dev = Device(role, zone, profile, label)
        if domain is not None:
            for msg in validate_device_set(domain, [dev]).errors:
                err.add(msg, section, idx, "zone")
        out.append(dev)
    return out


def _parse_initial_state(raw: Any, err: _Errors) -> InitialState | None:
    if raw is None:
        return None
    if not isinstance(raw, dict) or raw.get("kind") not in _STATE_KEYS:
        err.add(f"initial_state must be a table with kind in {sorted(_STATE_KEYS)}", "simulation", None, "initial_state")
        return None
    kind = raw["kind"]
    unknown = set(raw) - _STATE_KEYS[kind]
    if unknown:
        err.add(f"unknown initial_state key(s) {sorted(unknown)}", "simulation", None, "initial_state")
        return None
    try:
        if kind == "eigenfunction":
            return InitialState.eigenfunction(raw["modes"])
        if kind == "combination":
            modes, coefs = raw["modes"], raw["coefficients"]
            if len(modes) != len(coefs):
                raise ValueError("modes and coefficients differ in length")
            return InitialState.combination({tuple(m) if isinstance(m, list) else m: c for m, c in zip(modes, coefs)})
        if kind == "polynomial":
            return InitialState.polynomial(raw["coefficients"])
        return InitialState.tabulated(raw["positions"], raw["values"])
    except (KeyError, TypeError, ValueError) as exc:
        err.add(f"bad {kind} initial_state ({exc})", "simulation", None, "initial_state")
        return None


def _scalar_section(data: dict, name: str, cls, err: _Errors, int_keys=(), str_keys=(), bool_keys=(), optional_keys=()):
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        err.add(f"[{name}] must be a table", name)
        return cls()
    kwargs = {}
    for key, value in raw.items():
        if key not in _SECTIONS[name]:
            err.add(f"unknown key '{key}' in [{name}]", name, None, key)
            continue
        if key in str_keys:
            if not isinstance(value, str):
                err.add(f"[{name}] {key}: expected a string", name, None, key)
                continue
            kwargs[key] = value
        elif key in bool_keys:
            if not isinstance(value, bool):
                err.add(f"[{name}] {key}: expected true/false", name, None, key)
                continue
            kwargs[key] = value
        elif key == "initial_state":
            kwargs[key] = _parse_initial_state(value, err)
        else:
            v = _num(value, f"[{name}] {key}", err, name, None, key, integer=key in int_keys)
            if v is None:
                continue
            if v <= 0 and key not in optional_keys:
                err.add(f"[{name}] {key}: must be positive", name, None, key)
                continue
            kwargs[key] = float(v) if key not in int_keys else int(v)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        err.add(f"[{name}]: {exc}", name)
        return cls()


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfig:
    """Parse and validate a TOML run configuration; raises :class:`ConfigError`."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"TOML syntax error: {exc}"]) from None
    loc = _Locator(text)
    err = _Errors(loc)
    base = Path(base_dir) if base_dir is not None else None

    for key in data:
        if key not in _SECTIONS:
            err.add(f"unknown section or key '{key}'", key)

    domain = None
    dom_raw = data.get("domain")
    if not isinstance(dom_raw, dict):
        err.add("missing required section [domain]", "domain")
    else:
        for key in sorted(set(dom_raw) - _SECTIONS["domain"]):
            err.add(f"unknown key '{key}' in [domain]", "domain", None, key)
        if "kind" not in dom_raw or "lengths" not in dom_raw:
            err.add("[domain] needs 'kind' and 'lengths'", "domain")
        else:
            try:
                domain = Domain(dom_raw["kind"], tuple(dom_raw["lengths"]))
            except (TypeError, ValueError) as exc:
                err.add(f"[domain]: {exc}", "domain", None, "lengths")

    k = None
    sys_raw = data.get("system")
    if not isinstance(sys_raw, dict) or "k" not in sys_raw:
        err.add("missing required key 'k' in [system]", "system")
    else:
        for key in sorted(set(sys_raw) - _SECTIONS["system"]):
            err.add(f"unknown key '{key}' in [system]", "system", None, key)
        k = _num(sys_raw["k"], "[system] k", err, "system", None, "k")

    actuators = _parse_devices(data.get("actuators", []), "actuator", "actuators", domain, base, err)
    sensors = _parse_devices(data.get("sensors", []), "sensor", "sensors", domain, base, err)
    if domain is not None:
        for msg in validate_device_set(domain, actuators).overlaps:
            err.add(msg, "actuators")

    tolerances = _scalar_section(data, "tolerances", Tolerances, err)
    quadrature = _scalar_section(data, "quadrature", QuadratureSettings, err, int_keys=("order", "cells"))
    truncation = _scalar_section(
        data, "truncation", Truncation, err,
        int_keys=("verdict_modes", "simulation_modes", "simulation_max_index"), str_keys=("verdict_policy",),
    )
    if truncation.verdict_policy not in ("auto", "count", "threshold"):
        err.add(f"[truncation] verdict_policy must be auto, count or threshold", "truncation", None, "verdict_policy")
    simulation = _scalar_section(data, "simulation", SimulationSettings, err, int_keys=("points",), bool_keys=("feedback",))
    oracle = _scalar_section(data, "oracle", OracleSettings, err, int_keys=("resolution", "points"))

    reading = "refined"
    an_raw = data.get("analysis", {})
    if isinstance(an_raw, dict):
        for key in sorted(set(an_raw) - _SECTIONS["analysis"]):
            err.add(f"unknown key '{key}' in [analysis]", "analysis", None, key)
        reading = an_raw.get("k_reading", "refined")
        if reading not in K_READINGS:
            err.add(f"[analysis] k_reading must be one of {K_READINGS}", "analysis", None, "k_reading")
            reading = "refined"

    output_dir = None
    out_raw = data.get("output", {})
    if isinstance(out_raw, dict):
        for key in sorted(set(out_raw) - _SECTIONS["output"]):
            err.add(f"unknown key '{key}' in [output]", "output", None, key)
        output_dir = out_raw.get("dir")

    if err.items or domain is None or k is None:
        raise ConfigError(err.items or ["incomplete configuration"])
    return RunConfig(
        domain=domain,
        k=float(k),
        actuators=tuple(actuators),
        sensors=tuple(sensors),
        tolerances=tolerances,
        quadrature=quadrature,
        truncation=truncation,
        k_reading=reading,
        simulation=simulation,
        oracle=oracle,
        output_dir=output_dir,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


# -- serialization ------------------------------------------------------------

def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{ " + ", ".join(f"{k} = {_fmt(v)}" for k, v in value.items()) + " }"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def profile_to_dict(p: Profile) -> dict:
    if p.kind == "constant":
        return {"kind": "constant", "value": p.value}
    if p.kind == "polynomial":
        return {"kind": "polynomial", "coefficients": p.coefficients}
    if p.kind == "sine_product":
        return {"kind": "sine_product", "modes": p.modes, "amplitude": p.amplitude}
    positions = p.positions[0] if len(p.positions) == 1 else p.positions
    return {"kind": "tabulated", "positions": positions, "values": p.values}


def initial_state_to_dict(s: InitialState) -> dict:
    if s.kind == "eigenfunction":
        modes = s.terms[0][0]
        return {"kind": "eigenfunction", "modes": modes[0] if len(modes) == 1 else modes}
    if s.kind == "combination":
        modes = [m[0] if len(m) == 1 else m for m, _ in s.terms]
        return {"kind": "combination", "modes": modes, "coefficients": [c for _, c in s.terms]}
    if s.kind == "polynomial":
        return {"kind": "polynomial", "coefficients": s.coefficients}
    if s.kind == "tabulated":
        positions = s.positions[0] if len(s.positions) == 1 else s.positions
        return {"kind": "tabulated", "positions": positions, "values": s.values}
    raise ValueError("function initial states cannot be serialized")


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain nested dict with every field (used for report echo and TOML output)."""

    def devices(devs):
        return [{"label": d.label, "zone": [list(b) for b in d.zone.bounds], "profile": profile_to_dict(d.profile)} for d in devs]

    sim = {f.name: getattr(cfg.simulation, f.name) for f in fields(SimulationSettings) if f.name != "initial_state"}
    if cfg.simulation.initial_state is not None:
        sim["initial_state"] = initial_state_to_dict(cfg.simulation.initial_state)
    out = {
        "domain": {"kind": cfg.domain.kind, "lengths": list(cfg.domain.lengths)},
        "system": {"k": cfg.k},
        "actuators": devices(cfg.actuators),
        "sensors": devices(cfg.sensors),
        "tolerances": {f.name: getattr(cfg.tolerances, f.name) for f in fields(Tolerances)},
        "quadrature": {"order": cfg.quadrature.order, "cells": cfg.quadrature.cells},
        "truncation": {f.name: getattr(cfg.truncation, f.name) for f in fields(Truncation)},
        "analysis": {"k_reading": cfg.k_reading},
        "simulation": {k: v for k, v in sim.items() if v is not None},
        "oracle": {f.name: getattr(cfg.oracle, f.name) for f in fields(OracleSettings) if getattr(cfg.oracle, f.name) is not None},
    }
    if cfg.output_dir is not None:
        out["output"] = {"dir": cfg.output_dir}
    return out


def serialize_config(cfg: RunConfig) -> str:
    data = config_to_dict(cfg)
    lines: list[str] = []
    for section, body in data.items():
        if section in ("actuators", "sensors"):
            for dev in body:
                lines.append(f"[[{section}]]")
                lines.extend(f"{k} = {_fmt(v)}" for k, v in dev.items())
                lines.append("")
            continue
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in body.items())
        lines.append("")
    return "\n".join(lines)
