"""Distributed block proximal method: simulator, diagnostics and experiment driver."""

from .blockcore import BlockPartition, BlockVector
from .engine import EngineConfig, Simulation, run
from .geometry import BregmanGeometry, prox
from .graph import NetworkModel, erdos_renyi, metropolis_hastings_weights
from .metrics import RunTrace
from .problems import LogisticL1Oracle, SeparableQuadraticOracle, ZeroOracle, make_synthetic_clusters
from .schedules import StepsizeSchedule

__version__ = "0.1.0"

__all__ = [
    "BlockPartition", "BlockVector", "BregmanGeometry", "EngineConfig", "LogisticL1Oracle", "NetworkModel",
    "RunTrace", "SeparableQuadraticOracle", "Simulation", "StepsizeSchedule", "ZeroOracle", "erdos_renyi",
    "make_synthetic_clusters", "metropolis_hastings_weights", "prox", "run",
]
