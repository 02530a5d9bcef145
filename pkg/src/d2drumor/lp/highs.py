"""HiGHS (via scipy) backend for full-scale programs.

Same contracts as the in-house solvers; only the engine differs.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp
from scipy.sparse import csr_matrix

from ..errors import SolverError
from .model import (
    EQ,
    GE,
    INFEASIBLE,
    MAXIMIZE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LpSolution,
    MipSolution,
    MixedIntegerProgram,
)


def _matrix(lp: LinearProgram, rows):
    data, ri, ci = [], [], []
    for k, i in enumerate(rows):
        for name, a in lp.constraints[i].coeffs.items():
            data.append(a)
            ri.append(k)
            ci.append(lp.index(name))
    return csr_matrix((data, (ri, ci)), shape=(len(rows), len(lp.variables)))


def _cost(lp: LinearProgram) -> np.ndarray:
    sign = -1.0 if lp.sense == MAXIMIZE else 1.0
    c = np.zeros(len(lp.variables))
    for name, a in lp.objective.items():
        c[lp.index(name)] = sign * a
    return c


def solve_lp_highs(lp: LinearProgram) -> LpSolution:
    from .simplex import dual_objective

    c = _cost(lp)
    ub_rows = [i for i, con in enumerate(lp.constraints) if con.relation != EQ]
    eq_rows = [i for i, con in enumerate(lp.constraints) if con.relation == EQ]
    flips = np.array([-1.0 if lp.constraints[i].relation == GE else 1.0 for i in ub_rows])
    A_ub = _matrix(lp, ub_rows)
    b_ub = np.array([lp.constraints[i].rhs for i in ub_rows])
    if ub_rows:
        A_ub = csr_matrix(A_ub.multiply(flips[:, None]))
        b_ub = b_ub * flips
    A_eq = _matrix(lp, eq_rows)
    b_eq = np.array([lp.constraints[i].rhs for i in eq_rows])
    bounds = [(v.lower, v.upper) for v in lp.variables]
    kw = dict(
        A_ub=A_ub if ub_rows else None,
        b_ub=b_ub if ub_rows else None,
        A_eq=A_eq if eq_rows else None,
        b_eq=b_eq if eq_rows else None,
        bounds=bounds,
        method="highs",
    )
    res = linprog(c, **kw)
    if res.status == 2:
        # presolve can flag an unbounded program as infeasible; a
        # feasibility-only solve tells the two apart
        if c.any() and linprog(np.zeros_like(c), **kw).status == 0:
            return LpSolution(UNBOUNDED)
        return LpSolution(INFEASIBLE)
    if res.status == 3:
        return LpSolution(UNBOUNDED)
    if res.status != 0:
        raise SolverError(f"HiGHS LP failed: {res.message}")
    values = {v.name: float(x) for v, x in zip(lp.variables, res.x)}
    sign = -1.0 if lp.sense == MAXIMIZE else 1.0
    duals = {}
    if ub_rows:
        for i, f, y in zip(ub_rows, flips, res.ineqlin.marginals):
            duals[i] = float(sign * f * y)
    if eq_rows:
        for i, y in zip(eq_rows, res.eqlin.marginals):
            duals[i] = float(sign * y)
    obj = lp.evaluate(values)
    return LpSolution(OPTIMAL, obj, values, duals, dual_objective(lp, duals, values), int(res.nit))


def solve_mip_highs(mip: MixedIntegerProgram, node_limit=None) -> MipSolution:
    lp = mip.base
    c = _cost(lp)
    n = len(lp.variables)
    cons = []
    rows = list(range(len(lp.constraints)))
    if rows:
        A = _matrix(lp, rows)
        lo = np.array([-np.inf if con.relation == "<=" else con.rhs for con in lp.constraints])
        hi = np.array([np.inf if con.relation == ">=" else con.rhs for con in lp.constraints])
        cons.append(LinearConstraint(A, lo, hi))
    integrality = np.zeros(n)
    for name in mip.binaries:
        integrality[lp.index(name)] = 1
    bounds = Bounds([v.lower for v in lp.variables], [v.upper for v in lp.variables])
    options = {"mip_rel_gap": 0.0}
    if node_limit is not None:
        options["node_limit"] = node_limit
    res = milp(c, constraints=cons, integrality=integrality, bounds=bounds, options=options)
    if res.status == 2:
        return MipSolution(INFEASIBLE)
    if res.status == 3:
        return MipSolution(UNBOUNDED)
    if res.x is None or res.status not in (0,):
        raise SolverError(f"HiGHS MIP failed: {res.message}")
    values = {v.name: float(x) for v, x in zip(lp.variables, res.x)}
    for name in mip.binaries:
        values[name] = float(round(values[name]))
    obj = lp.evaluate(values)
    sign = -1.0 if lp.sense == MAXIMIZE else 1.0
    bound = sign * float(getattr(res, "mip_dual_bound", sign * obj))
    return MipSolution(OPTIMAL, obj, values, bound, int(getattr(res, "mip_node_count", 0) or 0))
