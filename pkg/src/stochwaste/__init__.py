"""Multi-stage stochastic inventory routing for recyclable waste collection."""

__version__ = "0.1.0"

from .instance import Instance, Parameters, load_instance, random_instance  # noqa: E402
from .markers import NEG_INF, POS_INF, is_finite  # noqa: E402
from .measures import MeasureReport, compute_measures  # noqa: E402
from .milp import SolverConfig, Status, enumerate_oracle, solve_milp  # noqa: E402
from .models import (build_model, build_model_M, build_model_Msym, closed_form_profit_C0,  # noqa: E402
                     decode_solution, worst_case_instance)
from .rollhorizon import RhConfig, run_rolling_horizon  # noqa: E402
from .scentree import BranchingStructure, ScenarioTree, fit_tree, random_tree  # noqa: E402

__all__ = [
    "BranchingStructure", "Instance", "MeasureReport", "NEG_INF", "POS_INF", "Parameters",
    "RhConfig", "ScenarioTree", "SolverConfig", "Status", "build_model", "build_model_M",
    "build_model_Msym", "closed_form_profit_C0", "compute_measures", "decode_solution",
    "enumerate_oracle", "fit_tree", "is_finite", "load_instance", "random_instance",
    "random_tree", "run_rolling_horizon", "solve_milp", "worst_case_instance",
]
