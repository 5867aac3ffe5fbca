"""Scenario files: an INI document with ``[scenario]``, ``[circuit]`` and
``[control]`` sections.

Example::

    [scenario]
    name = table1-open-loop
    engine = net
    horizon_ticks = 100000
    monitors = iL, vo, gate

    [circuit]
    Vi = 12
    L = 9.5e-3
    C = 20e-6
    R = 2.4

    [control]
    fsw = 200e3
    Tsf = 100
    duty = 0.5
    mode = DutyRatio
    pipeline_stages = 2
    cpu_clk_ticks = 1
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .buck import CircuitParams
from .controller import ControlConfig, Mode
from .oracle import OracleConfig, simulate
from .system import simulate_net
from .trace import TraceRecord, write_csv

__all__ = ["Scenario", "ScenarioError", "load_scenario", "simulate_scenario", "run_scenario", "ENGINES", "MONITORS"]

ENGINES = ("net", "oracle")
MONITORS = ("iL", "vo", "gate")

_CIRCUIT = ("Vi", "L", "C", "R")
_CONTROL = ("fsw", "Tsf", "duty", "mode", "VREF", "ILIM", "pipeline_stages", "cpu_clk_ticks")
_SCENARIO = ("name", "engine", "horizon_ticks", "monitors")


class ScenarioError(ValueError):
    def __init__(self, path, message: str, line: int | None = None):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclass(frozen=True)
class Scenario:
    name: str
    circuit: CircuitParams
    control: ControlConfig
    horizon_ticks: int
    engine: str = "net"
    monitors: tuple[str, ...] = field(default=MONITORS)

    def __post_init__(self):
        if not self.name or any(c.isspace() for c in self.name):
            raise ValueError("name must be non-empty and contain no whitespace")
        if isinstance(self.horizon_ticks, bool) or not isinstance(self.horizon_ticks, int) or self.horizon_ticks < 1:
            raise ValueError(f"horizon_ticks must be an integer ≥ 1, got {self.horizon_ticks!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not self.monitors:
            raise ValueError("monitors must not be empty")
        bad = [m for m in self.monitors if m not in MONITORS]
        if bad:
            raise ValueError(f"monitors: unknown quantity {bad[0]!r} (choose from {', '.join(MONITORS)})")

    def digest(self) -> str:
        """Hash of everything that determines the trace except the engine."""
        c = self.control
        doc = {
            "circuit": [self.circuit.Vi, self.circuit.L, self.circuit.C, self.circuit.R],
            "control": [c.fsw, c.Tsf, c.duty, c.mode.value, c.VREF, repr(c.ILIM),
                        c.pipeline_stages, c.cpu_clk_ticks],
            "horizon_ticks": self.horizon_ticks,
            "monitors": sorted(self.monitors),
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _field_line(path: Path, section: str, key: str) -> int | None:
    current = None
    for n, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and line.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return n
    return None


def _real(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _int(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError("expected an integer")
    return int(v)


_CONVERT = {
    "Vi": _real, "L": _real, "C": _real, "R": _real,
    "fsw": _real, "Tsf": _int, "duty": _real, "mode": str, "VREF": _real, "ILIM": _real,
    "pipeline_stages": _int, "cpu_clk_ticks": _int,
    "name": str, "engine": str, "horizon_ticks": _int, "monitors": str,
}


def _invalid(path: Path, section: str, exc: ValueError) -> ScenarioError:
    # validation messages lead with the offending field name
    key = str(exc).split()[0]
    return ScenarioError(path, f"[{section}] {exc}", _field_line(path, section, key))


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(path, "no such scenario file")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ScenarioError(path, f"parse error: {exc.message.splitlines()[0]}", line) from None

    known = {"scenario": _SCENARIO, "circuit": _CIRCUIT, "control": _CONTROL}
    for section in cp.sections():
        if section not in known:
            raise ScenarioError(path, f"unknown section [{section}]")
        for key in cp[section]:
            if key not in known[section]:
                raise ScenarioError(path, f"[{section}] unknown field {key!r}", _field_line(path, section, key))
    for section in ("scenario", "circuit", "control"):
        if not cp.has_section(section):
            raise ScenarioError(path, f"missing section [{section}]")

    def get(section: str, key: str, required: bool = True):
        if key not in cp[section]:
            if required:
                raise ScenarioError(path, f"[{section}] missing field {key!r}")
            return None
        raw = cp[section][key].strip()
        try:
            return _CONVERT[key](raw)
        except ValueError as exc:
            raise ScenarioError(path, f"{key}: cannot parse {raw!r} ({exc})", _field_line(path, section, key)) from None

    values = {k: get("circuit", k) for k in _CIRCUIT}
    try:
        circuit = CircuitParams(**values)
    except ValueError as exc:
        raise _invalid(path, "circuit", exc) from None

    ctl = {k: get("control", k, required=k in ("fsw", "Tsf", "mode")) for k in _CONTROL}
    ctl = {k: v for k, v in ctl.items() if v is not None}
    if "mode" in ctl:
        try:
            ctl["mode"] = Mode(ctl["mode"])
        except ValueError:
            raise ScenarioError(path, f"mode must be DutyRatio or VRef, got {ctl['mode']!r}",
                                _field_line(path, "control", "mode")) from None
    if ctl["mode"] is Mode.DUTY_RATIO and "duty" not in ctl:
        raise ScenarioError(path, "[control] missing field 'duty' (required in DutyRatio mode)")
    try:
        control = ControlConfig(**ctl)
    except ValueError as exc:
        raise _invalid(path, "control", exc) from None

    monitors = get("scenario", "monitors", required=False)
    monitors = tuple(m.strip() for m in monitors.split(",") if m.strip()) if monitors is not None else MONITORS
    name = get("scenario", "name")
    horizon = get("scenario", "horizon_ticks")
    engine = get("scenario", "engine", required=False) or "net"
    try:
        return Scenario(name=name, circuit=circuit, control=control,
                        horizon_ticks=horizon, engine=engine, monitors=monitors)
    except ValueError as exc:
        raise ScenarioError(path, f"[scenario] {exc}") from None


def simulate_scenario(s: Scenario, engine: str | None = None) -> list[TraceRecord]:
    engine = engine or s.engine
    if engine == "net":
        return simulate_net(s.circuit, s.control, s.horizon_ticks, quantities=s.monitors)
    if engine == "oracle":
        records = simulate(OracleConfig(s.circuit, s.control, s.horizon_ticks))
        return [_mask(r, s.monitors) for r in records]
    raise ValueError(f"unknown engine {engine!r}")


def _mask(r: TraceRecord, monitors) -> TraceRecord:
    return TraceRecord(
        r.k, r.t,
        r.iL if "iL" in monitors else None,
        r.vo if "vo" in monitors else None,
        r.u if "gate" in monitors else None,
    )


def run_scenario(s: Scenario, out, engine: str | None = None) -> Path:
    records = simulate_scenario(s, engine)
    write_csv(out, records, s.name, s.digest())
    return Path(out)

