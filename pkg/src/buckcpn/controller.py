"""Controller half of the model: XADC sensing pipeline, control logic and
PWM modulation.

Timing, in ticks of ``Ts``::

    converter iteration k publishes (iL, vo) ........ tick k
    sample usable by the control logic .............. tick k + latency
    decision emitted as a gate token ................ one tick after the
                                                      acknowledgement it answers

where ``latency = (pipeline_stages + 1) * cpu_clk_ticks``. A sample produced
by iteration ``k`` therefore first shows up in the gate applied at iteration
``k + latency + 1``. With ``cpu_clk_ticks = 0`` the controller reacts to the
state the converter has just produced, exactly like an ideal sampled
comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

from .buck import ConverterState
from .kernel import KernelError, Net, UNIT

__all__ = [
    "Mode",
    "ControlConfig",
    "SensedPair",
    "on_slots",
    "xadc_pipeline",
    "gate_enable",
    "modulation",
    "build_controller_net",
]


class Mode(str, Enum):
    DUTY_RATIO = "DutyRatio"
    VREF = "VRef"


@dataclass(frozen=True)
class ControlConfig:
    fsw: float = 200e3
    Tsf: int = 100
    duty: float = 0.5
    mode: Mode = Mode.DUTY_RATIO
    VREF: float | None = None
    ILIM: float = math.inf
    pipeline_stages: int = 2
    cpu_clk_ticks: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not (_num(self.fsw) and math.isfinite(self.fsw) and self.fsw > 0):
            raise ValueError(f"fsw must be finite and > 0, got {self.fsw!r}")
        if not _int(self.Tsf) or self.Tsf < 2:
            raise ValueError(f"Tsf ≥ 2 required (integer ticks per period), got {self.Tsf!r}")
        if not _num(self.duty) or not 0.0 <= self.duty <= 1.0:
            raise ValueError(f"duty out of [0,1]: {self.duty!r}")
        if self.mode is Mode.VREF and (self.VREF is None or not _num(self.VREF) or not math.isfinite(self.VREF)):
            raise ValueError(f"VREF must be a finite voltage in VRef mode, got {self.VREF!r}")
        if self.VREF is not None and not _num(self.VREF):
            raise ValueError(f"VREF must be a number, got {self.VREF!r}")
        if not _num(self.ILIM) or math.isnan(self.ILIM):
            raise ValueError(f"ILIM must be a number, got {self.ILIM!r}")
        if not _int(self.pipeline_stages) or self.pipeline_stages < 0:
            raise ValueError(f"pipeline_stages must be an integer ≥ 0, got {self.pipeline_stages!r}")
        if not _int(self.cpu_clk_ticks) or self.cpu_clk_ticks < 0:
            raise ValueError(f"cpu_clk_ticks must be an integer ≥ 0, got {self.cpu_clk_ticks!r}")

    @property
    def Tp(self) -> float:
        return 1.0 / self.fsw

    @property
    def Ts(self) -> float:
        return 1.0 / (self.fsw * self.Tsf)

    @property
    def latency(self) -> int:
        return (self.pipeline_stages + 1) * self.cpu_clk_ticks


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


class SensedPair(NamedTuple):
    iL: float
    vo: float
    available_at: int


@lru_cache(maxsize=256)
def on_slots(duty: float, Tsf: int) -> int:
    """Number of gate-on ticks per switching period: duty*Tsf rounded half up.

    The duty is taken as the decimal it prints as and the product is formed
    exactly, so 0.285 * 100 gives 29 rather than the 28 that binary floating
    point would produce.
    """
    return math.floor(Fraction(repr(float(duty))) * Tsf + Fraction(1, 2))


def xadc_pipeline(sample: tuple[float, float], sampled_at: int, cfg: ControlConfig) -> SensedPair:
    iL, vo = sample
    return SensedPair(iL, vo, sampled_at + cfg.latency)


def gate_enable(sensed, cfg: ControlConfig) -> bool:
    if cfg.mode is Mode.VREF:
        return sensed.vo < cfg.VREF and sensed.iL < cfg.ILIM
    return sensed.iL < cfg.ILIM


def modulation(cfg: ControlConfig, gate: bool, now: int) -> int:
    """Gate level for tick ``now``.

    The tick's position inside its switching period is compared against the
    on-window. Closed-loop operation drops the window and follows ``gate``.
    """
    if not gate:
        return 0
    if cfg.mode is Mode.VREF:
        return 1
    return 1 if now % cfg.Tsf < on_slots(cfg.duty, cfg.Tsf) else 0


def build_controller_net(cfg: ControlConfig, initial: ConverterState = ConverterState()) -> Net:
    """Controller subnet with ports ``iL-vo`` and ``Buck-loop`` (in), ``Gate`` (out).

    ``Buck-loop`` starts with one unit token and ``Control iL``/``Control Vo``
    with ``latency + 1`` readings of ``initial``, the reset contents of the
    sensing registers. One decision is taken per acknowledgement; decision
    ``n`` consumes the n-th sensed reading and emits the gate token for
    tick ``n``.
    """
    stages, clk = cfg.pipeline_stages, cfg.cpu_clk_ticks
    reset = (float(initial.iL), float(initial.vo))

    net = Net("controller")
    net.add_place("iL-vo", "pair", port="in")
    net.add_place("Buck-loop", "unit", [UNIT], port="in")
    net.add_place("Gate", "int", port="out")
    net.add_place("Parameters", "record", [cfg])
    net.add_place("Cycle", "int", [0])
    regs = ["Register in"] + [f"Register {i}" for i in range(1, stages + 1)]
    for r in regs:
        net.add_place(r, "pair")
    net.add_place("Control iL", "real", [reset[0]] * (cfg.latency + 1))
    net.add_place("Control Vo", "real", [reset[1]] * (cfg.latency + 1))

    # XADC conditioning
    net.add_transition("Input read", ["iL-vo"], ["Register in"],
                       lambda now, s: (("Register in", s, now),))
    for src, dst in zip(regs, regs[1:]):
        net.add_transition(f"Transfer {dst}", [src], [dst],
                           lambda now, s, dst=dst: ((dst, s, now + clk),))
    net.add_transition(
        "Bulk read", [regs[-1]], ["Control iL", "Control Vo"],
        lambda now, s: (("Control iL", s[0], now + clk), ("Control Vo", s[1], now + clk)),
    )

    # control logic
    def control(now, _ack, n, iL, vo, p):
        if n < now:
            raise KernelError(f"control decision for tick {n} taken late, at clock {now}")
        u = modulation(p, gate_enable(SensedPair(iL, vo, now), p), n)
        return (("Gate", u, n), ("Cycle", n + 1, n))

    net.add_transition(
        "Control logic",
        ["Buck-loop", "Cycle", "Control iL", "Control Vo"],
        ["Gate", "Cycle"],
        control,
        reads=["Parameters"],
    )
    return net
