"""Throughput-optimal random access: analytic model, Kiefer-Wolfowitz controllers
(wTOP-CSMA, TORA-CSMA) and a discrete-event CSMA/CA simulator."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    PhyMacConfig,
    ResetDistribution,
    approx_optimal_p,
    check_unimodal,
    derive_timing,
    gradient_indicator,
    optimal_p,
    rr_tau,
    rr_throughput,
    solve_attempt_fixed_point,
    system_throughput,
)
from .controllers import ApController  # noqa: E402
from .sim.engine import SimReport, run_sim  # noqa: E402
from .sim.strategies import StrategySpec  # noqa: E402
from .sim.topology import Topology, build_topology, place_disc, place_ring  # noqa: E402

__all__ = [
    "__version__",
    "PhyMacConfig",
    "ResetDistribution",
    "approx_optimal_p",
    "check_unimodal",
    "derive_timing",
    "gradient_indicator",
    "optimal_p",
    "rr_tau",
    "rr_throughput",
    "solve_attempt_fixed_point",
    "system_throughput",
    "ApController",
    "SimReport",
    "run_sim",
    "StrategySpec",
    "Topology",
    "build_topology",
    "place_disc",
    "place_ring",
]
