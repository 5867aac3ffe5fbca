"""Timed coloured Petri net kernel and a buck converter / controller model built on it."""

from .buck import TABLE1, CircuitParams, ConverterState, SimulationFault, build_buck_net
from .controller import ControlConfig, Mode, build_controller_net
from .kernel import DEADLOCK, Monitor, Net
from .oracle import OracleConfig, simulate
from .system import build_cps_net, simulate_net
from .trace import TraceRecord

__version__ = "0.1.0"

__all__ = [
    "TABLE1",
    "CircuitParams",
    "ConverterState",
    "SimulationFault",
    "ControlConfig",
    "Mode",
    "Net",
    "Monitor",
    "DEADLOCK",
    "OracleConfig",
    "TraceRecord",
    "build_buck_net",
    "build_controller_net",
    "build_cps_net",
    "simulate",
    "simulate_net",
]
