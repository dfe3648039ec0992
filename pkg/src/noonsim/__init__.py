"""Dissipative N00N-state dynamics in cascaded ring-resonator QED networks."""

__version__ = "0.1.0"

from .basis import (
    BasisState,
    ExcitationBasis,
    SlotLayout,
    TruncatedSpace,
    enumerate_basis,
    scheme1_layout,
    scheme2_layout,
)
from .dynamics import TimeGrid, master_solve, propagate_nojump
from .fidelity import NoonTarget, build_noon_state, fidelity_series
from .model import OperatorSet, SchemeIConfig, SchemeIIConfig, build_operators
from .sweep import SweepSpec, preset, run_sweep
from .trajectories import TrajectoryConfig, run_trajectories

__all__ = [
    "BasisState",
    "ExcitationBasis",
    "NoonTarget",
    "OperatorSet",
    "SchemeIConfig",
    "SchemeIIConfig",
    "SlotLayout",
    "SweepSpec",
    "TimeGrid",
    "TrajectoryConfig",
    "TruncatedSpace",
    "build_noon_state",
    "build_operators",
    "enumerate_basis",
    "fidelity_series",
    "master_solve",
    "preset",
    "propagate_nojump",
    "run_sweep",
    "run_trajectories",
    "scheme1_layout",
    "scheme2_layout",
]
