"""Distributed approximate Newton methods for resource allocation.

Agents on a graph share a fixed total ``d`` of a resource. Writing
``x = x0 + L z`` with a weighted Laplacian ``L`` keeps ``1^T x = d`` for
every ``z``; the package designs ``L`` and runs discrete- and
continuous-time approximate Newton iterations on ``z``.
"""

from .dana_c import DanaC, integrate, integrate_robust
from .dana_d import DanaD, newton_direction, run_matrix_form
from .agents import run_message_passing
from .exceptions import (AssumptionViolated, DanaError, InfeasibleOrDegenerate, InvalidInput,
                         LocalityBreach, NoFeasiblePoint, StateCorruption, StepSizeTooLarge,
                         StepTooLarge)
from .graph import GraphTopology, WeightedLaplacian, random_connected
from .problem import DispatchProblem, random_instance, three_node_instance
from .reference import oracle, run_dgd
from .weight_design import DesignResult, LaplacianDesigner, design, post_scale

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolated", "DanaC", "DanaD", "DanaError", "DesignResult", "DispatchProblem",
    "GraphTopology", "InfeasibleOrDegenerate", "InvalidInput", "LaplacianDesigner",
    "LocalityBreach", "NoFeasiblePoint", "StateCorruption", "StepSizeTooLarge", "StepTooLarge",
    "WeightedLaplacian", "design", "integrate", "integrate_robust", "newton_direction",
    "oracle", "post_scale", "random_connected", "random_instance", "run_dgd",
    "run_matrix_form", "run_message_passing", "three_node_instance",
]
