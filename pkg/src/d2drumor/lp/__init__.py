"""Linear and mixed-integer programming."""

from .bnb import solve_mip
from .model import (
    EQ,
    GE,
    INF,
    INFEASIBLE,
    LE,
    MAXIMIZE,
    MINIMIZE,
    OPTIMAL,
    UNBOUNDED,
    Constraint,
    LinearProgram,
    LpSolution,
    MipSolution,
    MixedIntegerProgram,
    Variable,
    format_lp,
)
from .simplex import dual_objective, solve_lp

__all__ = [
    "EQ", "GE", "INF", "INFEASIBLE", "LE", "MAXIMIZE", "MINIMIZE", "OPTIMAL",
    "UNBOUNDED", "Constraint", "LinearProgram", "LpSolution", "MipSolution",
    "MixedIntegerProgram", "Variable", "dual_objective", "format_lp",
    "solve_lp", "solve_mip",
]
