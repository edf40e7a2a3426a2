"""CMA-ES with adaptive ranking constraint handling for linear constraints."""

from .arch import ArchState, arch_generation
from .cmaes import CmaParameters, CmaState, default_parameters
from .constraints import LinearConstraintSet, box_to_linear, transform
from .numerics import NumericalError
from .repair import InfeasibleProblem, RepairConfig, repair

__all__ = [
    "ArchState",
    "CmaParameters",
    "CmaState",
    "InfeasibleProblem",
    "LinearConstraintSet",
    "NumericalError",
    "RepairConfig",
    "arch_generation",
    "box_to_linear",
    "default_parameters",
    "repair",
    "transform",
]
