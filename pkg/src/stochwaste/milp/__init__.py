"""Generic MILP representation and solvers."""

from .bnb import SolverConfig, fix_variables, solve_milp
from .lp import solve_lp
from .mps import MpsExport, SolutionFileError, export_mps, import_solution, read_mps
from .oracle import enumerate_oracle
from .problem import (EQ, GE, LE, MilpError, MilpProblem, MilpSolution, ProblemBuilder, Status,
                      relative_gap)
from .simplex import LPError, LPResult

__all__ = [
    "EQ", "GE", "LE", "LPError", "LPResult", "MilpError", "MilpProblem", "MilpSolution",
    "MpsExport", "ProblemBuilder", "SolutionFileError", "SolverConfig", "Status",
    "enumerate_oracle", "export_mps", "fix_variables", "import_solution", "read_mps",
    "relative_gap", "solve_lp", "solve_milp",
]
