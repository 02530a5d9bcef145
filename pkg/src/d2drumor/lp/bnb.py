"""Best-bound branch-and-bound over LP relaxations."""

from __future__ import annotations

import heapq
import math

from ..errors import NodeLimitError
from .model import (
    INFEASIBLE,
    MAXIMIZE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    MipSolution,
    MixedIntegerProgram,
)
from .simplex import solve_lp

INT_TOL = 1e-6
DEFAULT_NODE_LIMIT = 100_000


def _with_fixings(base: LinearProgram, fixings) -> LinearProgram:
    lp = base.copy()
    for name, val in fixings:
        v = lp.variables[lp.index(name)]
        v.lower = v.upper = float(val)
    return lp


def _branch_var(values, order):
    """Most fractional binary; lowest column index among equals."""
    best, best_dist = None, None
    for name in order:
        x = values[name]
        frac = x - math.floor(x)
        if frac <= INT_TOL or frac >= 1 - INT_TOL:
            continue
        dist = abs(frac - 0.5)
        if best is None or dist < best_dist - 1e-12:
            best, best_dist = name, dist
    return best


def solve_mip(
    mip: MixedIntegerProgram,
    backend: str = "simplex",
    node_limit: int = DEFAULT_NODE_LIMIT,
) -> MipSolution:
    """Solve a 0/1 mixed-integer program to proven optimality.

    ``backend`` selects the engine: ``"simplex"`` runs this module's
    branch-and-bound on the in-house LP solver, ``"highs-bb"`` runs the same
    search over HiGHS relaxations, and ``"highs"`` hands the whole program to
    HiGHS' MIP solver.
    """
    mip.validate()
    if backend == "highs":
        from .highs import solve_mip_highs

        return solve_mip_highs(mip)
    lp_backend = {"simplex": "simplex", "highs-bb": "highs"}.get(backend)
    if lp_backend is None:
        raise ValueError(f"unknown MIP backend {backend!r}")

    base = mip.base
    sign = -1.0 if base.sense == MAXIMIZE else 1.0
    order = [n for n in base.names if n in mip.binaries]

    def relax(fixings):
        sol = solve_lp(_with_fixings(base, fixings), backend=lp_backend)
        return sol

    root = relax(())
    if root.status == INFEASIBLE:
        return MipSolution(INFEASIBLE, nodes=1)
    if root.status == UNBOUNDED:
        return MipSolution(UNBOUNDED, nodes=1)

    incumbent = None
    inc_val = math.inf  # minimization form
    heap = [(sign * root.objective, 0, (), root)]
    seq = 1
    nodes = 0
    history = []

    def tol(v):
        return 1e-9 * max(1.0, abs(v)) if math.isfinite(v) else 0.0

    while heap:
        bound, _, fixings, sol = heapq.heappop(heap)
        global_lb = min([bound] + [h[0] for h in heap])
        history.append(sign * min(global_lb, inc_val))
        if bound >= inc_val - tol(inc_val):
            continue
        nodes += 1
        if nodes > node_limit:
            best = None
            if incumbent is not None:
                best = MipSolution(OPTIMAL, sign * inc_val, incumbent, sign * global_lb, nodes, history)
            raise NodeLimitError(f"node limit {node_limit} exceeded", best)
        var = _branch_var(sol.values, order)
        if var is None:
            incumbent = dict(sol.values)
            for name in order:
                incumbent[name] = float(round(incumbent[name]))
            inc_val = bound
            continue
        for val in (0, 1):
            child = relax(fixings + ((var, val),))
            if child.status != OPTIMAL:
                continue
            cb = sign * child.objective
            if cb < inc_val - tol(inc_val):
                heapq.heappush(heap, (max(cb, bound), seq, fixings + ((var, val),), child))
                seq += 1

    if incumbent is None:
        return MipSolution(INFEASIBLE, nodes=nodes, bound_history=history)
    history.append(sign * inc_val)
    obj = base.evaluate(incumbent)
    return MipSolution(OPTIMAL, obj, incumbent, sign * inc_val, nodes, history)
