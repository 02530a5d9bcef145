"""Program containers for the LP/MIP solvers.

Infinite bounds use ``math.inf`` (exported as :data:`INF`); callers that need
a finite stand-in build their own big-M values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

INF = math.inf

MINIMIZE = "min"
MAXIMIZE = "max"

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = (LE, EQ, GE)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class Variable:
    name: str
    lower: float = 0.0
    upper: float = INF


@dataclass
class Constraint:
    coeffs: Dict[str, float]
    relation: str
    rhs: float
    name: Optional[str] = None


@dataclass
class LinearProgram:
    """A linear program over named variables.

    Variables keep their insertion order; that order is the solver's column
    order and drives every deterministic tie-break.
    """

    variables: List[Variable] = field(default_factory=list)
    sense: str = MINIMIZE
    objective: Dict[str, float] = field(default_factory=dict)
    constraints: List[Constraint] = field(default_factory=list)

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}

    def add_variable(self, name: str, lower: float = 0.0, upper: float = INF) -> str:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lower), float(upper)))
        return name

    def add_constraint(self, coeffs, relation: str, rhs: float, name=None) -> int:
        coeffs = {k: float(v) for k, v in coeffs.items() if v != 0}
        self.constraints.append(Constraint(coeffs, relation, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, sense: str, coeffs) -> None:
        self.sense = sense
        self.objective = {k: float(v) for k, v in coeffs.items() if v != 0}

    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    def validate(self) -> None:
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"unknown sense {self.sense!r}")
        for v in self.variables:
            if math.isnan(v.lower) or math.isnan(v.upper) or v.lower > v.upper:
                raise ValueError(f"bad bounds on {v.name}: [{v.lower}, {v.upper}]")
        for name in self.objective:
            if name not in self._index:
                raise ValueError(f"objective references undeclared variable {name!r}")
        for i, con in enumerate(self.constraints):
            if con.relation not in _RELATIONS:
                raise ValueError(f"constraint {i}: unknown relation {con.relation!r}")
            if not math.isfinite(con.rhs):
                raise ValueError(f"constraint {i}: non-finite right-hand side")
            for name, a in con.coeffs.items():
                if name not in self._index:
                    raise ValueError(f"constraint {i} references undeclared variable {name!r}")
                if not math.isfinite(a):
                    raise ValueError(f"constraint {i}: non-finite coefficient on {name}")

    def copy(self) -> "LinearProgram":
        return LinearProgram(
            [Variable(v.name, v.lower, v.upper) for v in self.variables],
            self.sense,
            dict(self.objective),
            [Constraint(dict(c.coeffs), c.relation, c.rhs, c.name) for c in self.constraints],
        )

    def evaluate(self, values: Dict[str, float]) -> float:
        return sum(a * values.get(n, 0.0) for n, a in self.objective.items())

    def max_violation(self, values: Dict[str, float]) -> float:
        """Largest constraint or bound violation of ``values`` (0 when feasible)."""
        worst = 0.0
        for con in self.constraints:
            lhs = sum(a * values.get(n, 0.0) for n, a in con.coeffs.items())
            if con.relation == LE:
                worst = max(worst, lhs - con.rhs)
            elif con.relation == GE:
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        for v in self.variables:
            x = values.get(v.name, 0.0)
            worst = max(worst, v.lower - x, x - v.upper)
        return worst

    def to_lp_text(self) -> str:
        return format_lp(self)


@dataclass
class LpSolution:
    status: str
    objective: float = math.nan
    values: Dict[str, float] = field(default_factory=dict)
    duals: Dict[int, float] = field(default_factory=dict)
    dual_objective: float = math.nan
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class MixedIntegerProgram:
    base: LinearProgram
    binaries: Set[str] = field(default_factory=set)

    def validate(self) -> None:
        self.base.validate()
        for name in self.binaries:
            v = self.base.variables[self.base.index(name)]
            if v.lower not in (0.0, 1.0) or v.upper not in (0.0, 1.0) or v.lower > v.upper:
                raise ValueError(f"binary {name} needs integral bounds inside [0, 1]")

    def to_lp_text(self) -> str:
        return format_lp(self.base, self.binaries)


@dataclass
class MipSolution:
    status: str
    objective: float = math.nan
    values: Dict[str, float] = field(default_factory=dict)
    bound: float = math.nan
    nodes: int = 0
    bound_history: List[float] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _term(coef: float, name: str, first: bool) -> str:
    sign = "-" if coef < 0 else ("" if first else "+")
    mag = abs(coef)
    body = name if mag == 1 else f"{mag:.17g} {name}"
    return f"{sign} {body}".strip() if first else f"{sign} {body}"


def _expr(coeffs: Dict[str, float], order: Dict[str, int]) -> str:
    items = sorted(coeffs.items(), key=lambda kv: order[kv[0]])
    if not items:
        return "0"
    return " ".join(_term(a, n, i == 0) for i, (n, a) in enumerate(items))


def format_lp(lp: LinearProgram, binaries=()) -> str:
    """Render ``lp`` in CPLEX-LP-like text.

    Layout, one item per line::

        \\ <comment>
        Minimize | Maximize
         obj: <terms>
        Subject To
         c<i>: <terms> <= | = | >= <rhs>
        Bounds
         <lo> <= <name> <= <hi>      (inf written as +inf / -inf)
        Binaries
         <name> ...
        End

    Terms are ``<coef> <name>`` joined by explicit signs; coefficients are
    printed with 17 significant digits so the dump round-trips exactly.
    """
    order = {v.name: i for i, v in enumerate(lp.variables)}
    lines = ["\\ d2drumor LP dump", "Maximize" if lp.sense == MAXIMIZE else "Minimize"]
    lines.append(f" obj: {_expr(lp.objective, order)}")
    lines.append("Subject To")
    for i, con in enumerate(lp.constraints):
        label = con.name or f"c{i}"
        lines.append(f" {label}: {_expr(con.coeffs, order)} {con.relation} {con.rhs:.17g}")
    lines.append("Bounds")
    for v in lp.variables:
        lo = "-inf" if v.lower == -INF else f"{v.lower:.17g}"
        hi = "+inf" if v.upper == INF else f"{v.upper:.17g}"
        lines.append(f" {lo} <= {v.name} <= {hi}")
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(n for n in lp.names if n in set(binaries)))
    lines.append("End")
    return "\n".join(lines) + "\n"
