"""Buck converter half of the model: inductor-current and output-voltage
submodules driven by a timed gate signal.

The four update functions split one forward-Euler step of the converter ODEs
the same way the net does, so the same floating point operations happen in
the same order wherever they are used.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields
from typing import NamedTuple

from .kernel import UNIT, FireEvent, Monitor, Net

__all__ = [
    "CircuitParams",
    "ConverterState",
    "SimulationFault",
    "TABLE1",
    "fiL_k1",
    "fiL_k2",
    "fvo_k1",
    "fvo_k2",
    "build_buck_net",
    "trace_monitor",
]


class SimulationFault(RuntimeError):
    """Non-finite or runaway converter state."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class CircuitParams:
    Vi: float
    L: float
    C: float
    R: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError(f"{f.name} must be a number, got {v!r}")
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, f.name, float(v))


#: Circuit of the reference experiments.
TABLE1 = CircuitParams(Vi=12.0, L=9.5e-3, C=20e-6, R=2.4)


class ConverterState(NamedTuple):
    iL: float = 0.0
    vo: float = 0.0


def fiL_k1(Vi, L, u, Ts):
    return ((Vi / L) * Ts if u == 1 else 0.0, L, Ts)


def fiL_k2(iL_k1, L, vo, iL, Ts):
    return iL + (iL_k1 - (vo / L) * Ts)


def fvo_k1(C, R, iL, Ts):
    return ((iL / C) * Ts, C, R, Ts)


def fvo_k2(vo_k1, C, R, vo, Ts):
    return vo + (vo_k1 - Ts * vo / (R * C))


def build_buck_net(params: CircuitParams, Ts: float, initial: ConverterState = ConverterState()) -> Net:
    """Converter subnet with ports ``Gate`` (in), ``Buck-loop`` and ``iL-vo`` (out).

    Each gate token stamped ``k`` drives one iteration at tick ``k``: the
    acknowledgement leaves on ``Buck-loop`` at ``k`` and the new ``(iL, vo)``
    is published on ``iL-vo`` at ``k``. The state places are restamped
    ``k + 1`` so a second gate token cannot be processed in the same tick.
    """
    if not (isinstance(Ts, (int, float)) and math.isfinite(Ts) and Ts > 0):
        raise ValueError(f"Ts must be finite and > 0, got {Ts!r}")
    Vi, L, C, R = params.Vi, params.L, params.C, params.R
    if Ts >= R * C or Ts >= L / R:
        warnings.warn(
            f"Ts={Ts:g} s is not small against R*C={R * C:g} s and L/R={L / R:g} s; "
            "forward Euler may be unstable",
            RuntimeWarning,
            stacklevel=2,
        )

    net = Net("buck")
    net.add_place("Gate", "int", port="in")
    net.add_place("Buck-loop", "unit", port="out")
    net.add_place("iL-vo", "pair", port="out")
    net.add_place("Parameters", "record", [(Vi, L, C, R, float(Ts))])
    # IL submodule
    net.add_place("iL k1", "record")
    net.add_place("iL", "real", [float(initial.iL)])
    net.add_place("iL sum", "record")
    net.add_place("iL next", "real")
    # Vo submodule
    net.add_place("vo", "real", [float(initial.vo)])
    net.add_place("iL to Vo", "real")
    net.add_place("vo loop", "real")
    net.add_place("Vo ready", "unit", [UNIT])
    net.add_place("vo k1", "record")

    def mux_gate(now, u, p):
        if u != 0 and u != 1:
            raise SimulationFault(f"gate signal must be 0 or 1, got {u!r}", now)
        Vi, L, _, _, Ts = p
        return (("iL k1", fiL_k1(Vi, L, u, Ts), now), ("Buck-loop", UNIT, now))

    def sum_iL(now, k1, iL):
        il_k1, L, Ts = k1
        return (("iL sum", (il_k1, L, Ts, iL), now), ("iL to Vo", iL, now))

    def mux_il_vo(now, acc, vo):
        il_k1, L, Ts, iL = acc
        return (("iL next", fiL_k2(il_k1, L, vo, iL, Ts), now), ("vo loop", vo, now))

    def mux_iL(now, _ready, iL, p):
        _, _, C, R, Ts = p
        return (("vo k1", fvo_k1(C, R, iL, Ts), now),)

    def mux_vo(now, k1, vo, iL_next):
        vo_k1, C, R, Ts = k1
        vo_next = fvo_k2(vo_k1, C, R, vo, Ts)
        if not (math.isfinite(iL_next) and math.isfinite(vo_next)):
            raise SimulationFault(f"non-finite state iL={iL_next!r} vo={vo_next!r}", now)
        nxt = now + 1
        return (
            ("iL", iL_next, nxt),
            ("vo", vo_next, nxt),
            ("iL-vo", (iL_next, vo_next), now),
            ("Vo ready", UNIT, nxt),
        )

    net.add_transition("mux gate", ["Gate"], ["iL k1", "Buck-loop"], mux_gate, reads=["Parameters"])
    net.add_transition("sum iL", ["iL k1", "iL"], ["iL sum", "iL to Vo"], sum_iL)
    net.add_transition("mux Il,vo", ["iL sum", "vo"], ["iL next", "vo loop"], mux_il_vo)
    net.add_transition("mux iL", ["Vo ready", "iL to Vo"], ["vo k1"], mux_iL, reads=["Parameters"])
    net.add_transition("mux vo", ["vo k1", "vo loop", "iL next"], ["iL", "vo", "iL-vo", "Vo ready"], mux_vo)
    return net


def trace_monitor(net: Net, Ts: float, gate: str = "Gate", state: str = "iL-vo",
                  quantities=("iL", "vo", "gate")) -> Monitor:
    """One :class:`~buckcpn.trace.TraceRecord` per converter iteration.

    The gate value is latched when the converter consumes it; the record is
    emitted when the matching state is published. Quantities missing from
    ``quantities`` are recorded as ``None``.
    """
    from .trace import TraceRecord

    gate_id = net.place(gate).id
    state_id = net.place(state).id
    want_i, want_v, want_u = "iL" in quantities, "vo" in quantities, "gate" in quantities
    latch = {}

    def sample(ev: FireEvent):
        for pid, vals in ev.consumed:
            if pid == gate_id:
                latch[ev.clock] = vals[0]
        for pid, value, _ in ev.produced:
            if pid == state_id:
                k = ev.clock
                u = latch.pop(k)
                iL, vo = value
                return TraceRecord(
                    k, k * Ts,
                    iL if want_i else None,
                    vo if want_v else None,
                    u if want_u else None,
                )
        return None

    # only the converter's gate consumer and state producer carry the data
    trigger = [t.id for t in net.transitions
               if any(p == gate_id for p, _ in t.inputs) or state_id in t.outputs]
    return Monitor([gate_id, state_id], sample, trigger)

