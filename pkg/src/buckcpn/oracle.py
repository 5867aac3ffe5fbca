"""Plain-loop forward-Euler reference for the converter and its control rules.

Written without tokens or nets on purpose: when it agrees with the net
simulation the agreement says something about the net's wiring. The update
expressions keep the association and operation order of the net's arc
functions, so agreement is expected to be bitwise.

Control here is an ideal comparator evaluated on the current state, with no
sensing latency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .buck import CircuitParams, ConverterState, SimulationFault
from .controller import ControlConfig, Mode
from .trace import TraceRecord

__all__ = ["OracleConfig", "euler_step", "simulate_open_loop", "simulate_closed_loop", "simulate"]

BLOWUP = 1e9


@dataclass(frozen=True)
class OracleConfig:
    params: CircuitParams
    control: ControlConfig
    steps: int
    initial: ConverterState = ConverterState()

    def __post_init__(self):
        if isinstance(self.steps, bool) or not isinstance(self.steps, int) or self.steps < 0:
            raise ValueError(f"steps must be a non-negative integer, got {self.steps!r}")

    @property
    def Ts(self) -> float:
        return 1.0 / (self.control.fsw * self.control.Tsf)


def euler_step(state: ConverterState, u: int, p: CircuitParams, Ts: float, k: int | None = None) -> ConverterState:
    iL, vo = state
    drive = (p.Vi / p.L) * Ts if u == 1 else 0.0
    iL_new = iL + (drive - (vo / p.L) * Ts)
    vo_new = vo + ((iL / p.C) * Ts - Ts * vo / (p.R * p.C))
    if not (math.isfinite(iL_new) and math.isfinite(vo_new)):
        raise SimulationFault(f"non-finite state iL={iL_new!r} vo={vo_new!r}", k)
    return ConverterState(iL_new, vo_new)


def _run(cfg: OracleConfig, closed: bool) -> list[TraceRecord]:
    p, c = cfg.params, cfg.control
    Ts = cfg.Ts
    Tsf = c.Tsf
    n_on = int((Decimal(repr(float(c.duty))) * Tsf).to_integral_value(ROUND_HALF_UP))
    ilim = c.ILIM
    vref = c.VREF
    state = ConverterState(float(cfg.initial.iL), float(cfg.initial.vo))
    out = []
    for k in range(cfg.steps):
        iL, vo = state
        if closed:
            u = 1 if (vo < vref and iL < ilim) else 0
        else:
            u = 1 if (k % Tsf < n_on and iL < ilim) else 0
        state = euler_step(state, u, p, Ts, k)
        if abs(state.iL) > BLOWUP or abs(state.vo) > BLOWUP:
            raise SimulationFault(f"state diverged: iL={state.iL:g} A, vo={state.vo:g} V", k)
        out.append(TraceRecord(k, k * Ts, state.iL, state.vo, u))
    return out


def simulate_open_loop(cfg: OracleConfig) -> list[TraceRecord]:
    if cfg.control.mode is not Mode.DUTY_RATIO:
        raise ValueError("open-loop simulation needs mode DutyRatio")
    return _run(cfg, closed=False)


def simulate_closed_loop(cfg: OracleConfig) -> list[TraceRecord]:
    if cfg.control.mode is not Mode.VREF:
        raise ValueError("closed-loop simulation needs mode VRef")
    return _run(cfg, closed=True)


def simulate(cfg: OracleConfig) -> list[TraceRecord]:
    if cfg.control.mode is Mode.VREF:
        return simulate_closed_loop(cfg)
    return simulate_open_loop(cfg)
