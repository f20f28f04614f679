"""Optimization-based spatial access to pediatric primary care."""
from .assignment import AssignmentInfeasible, AssignmentSolution, audit_solution, solve_assignment
from .metrics import AccessibilityMeasures, all_scopes, compute_measures
from .model import (CensusTract, CoverageMode, DistanceMatrix, Physician, ScenarioError, ScenarioInstance,
                    SystemParameters, generate_synthetic_state, load_scenario)

__version__ = "0.1.0"

__all__ = [
    "AccessibilityMeasures", "AssignmentInfeasible", "AssignmentSolution", "CensusTract", "CoverageMode",
    "DistanceMatrix", "Physician", "ScenarioError", "ScenarioInstance", "SystemParameters",
    "all_scopes", "audit_solution", "compute_measures", "generate_synthetic_state", "load_scenario",
    "solve_assignment",
]
