"""Top-level composition: controller and converter joined on their sockets."""

from __future__ import annotations

from .buck import CircuitParams, ConverterState, build_buck_net, trace_monitor
from .controller import ControlConfig, build_controller_net
from .kernel import Net
from .trace import TraceRecord

__all__ = ["build_cps_net", "simulate_net"]


def build_cps_net(params: CircuitParams, cfg: ControlConfig,
                  initial: ConverterState = ConverterState()) -> Net:
    net = Net("cps")
    net.add_place("Gate", "int")
    net.add_place("Buck-loop", "unit")
    net.add_place("iL-vo", "pair")
    sockets = {"Gate": "Gate", "Buck-loop": "Buck-loop", "iL-vo": "iL-vo"}
    net.merge(build_controller_net(cfg, initial), "controller", sockets)
    net.merge(build_buck_net(params, cfg.Ts, initial), "buck", sockets)
    return net


def simulate_net(params: CircuitParams, cfg: ControlConfig, ticks: int,
                 initial: ConverterState = ConverterState(),
                 quantities=("iL", "vo", "gate"), check_conflicts: bool = False) -> list[TraceRecord]:
    """Run the composed net for ``ticks`` converter iterations (ticks 0..ticks-1)."""
    if ticks < 1:
        raise ValueError(f"ticks must be ≥ 1, got {ticks}")
    net = build_cps_net(params, cfg, initial)
    mon = trace_monitor(net, cfg.Ts, quantities=quantities)
    records = net.run(ticks - 1, [mon], check_conflicts=check_conflicts)
    if len(records) != ticks:
        raise RuntimeError(f"expected {ticks} converter iterations, got {len(records)}")
    return records
