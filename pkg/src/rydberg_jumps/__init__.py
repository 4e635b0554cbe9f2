"""Quantum jumps in driven chains of three-level Rydberg atoms."""

__version__ = "0.1.0"

from .model import LatticeSpec, SystemParams
from .presets import get_preset
from .trajectory import TrajectoryRecord, run_ensemble, run_trajectory

__all__ = [
    "LatticeSpec",
    "SystemParams",
    "TrajectoryRecord",
    "get_preset",
    "run_ensemble",
    "run_trajectory",
]
