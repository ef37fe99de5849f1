"""Deterministic ride-hailing fleet simulator with value-refined dispatch
and demand-aware repositioning over a hexagonal service grid."""

from .world import GeoPoint, HexWorld
from .entities import Order, Driver, DispatchDecision, RepositionDecision, SimState
from .engine import RunConfig, RunMetrics, run, gini

__all__ = [
    "GeoPoint",
    "HexWorld",
    "Order",
    "Driver",
    "DispatchDecision",
    "RepositionDecision",
    "SimState",
    "RunConfig",
    "RunMetrics",
    "run",
    "gini",
]

__version__ = "0.1.0"
