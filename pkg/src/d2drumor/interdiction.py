"""Throughput LP, the dualized interdiction MILP, and node criticality (NCE).

Removable edges carry infinite capacity in the graph. Wherever a finite
number is needed (the removal constraint and the dual objective) a big-M is
used: ``M_e = W * sum of c(e')`` over the finite-capacity edges entering the
split node ``i-``, which bounds any flow through ``e_i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Sequence

import numpy as np

from .cellular import BS, CELLULAR, D2D, INF, REMOVABLE, SINK, VIRTUAL, ModifiedFlowGraph
from .errors import OracleCapError, SolverError
from .lp import (
    GE,
    LE,
    MAXIMIZE,
    MINIMIZE,
    EQ,
    LinearProgram,
    MixedIntegerProgram,
    solve_lp,
    solve_mip,
)

BIG_M_NOTE = "removable-edge capacity read as big-M = W * sum of weights on edges entering the split inlet"
TIE_BREAK_NOTE = "ties among optimal removal sets resolved by the MIP engine's fixed branching order"


@dataclass
class ThroughputProblem:
    graph: ModifiedFlowGraph
    bandwidth: float
    removals: Dict[int, int] = field(default_factory=dict)  # removable edge id -> z

    def z(self) -> Dict[int, int]:
        """z over all of E^m; devices disabled in the graph view count as removed."""
        out = {e.id: 0 for e in self.graph.removable_edges}
        for eid, val in self.removals.items():
            if eid not in out:
                raise KeyError(f"edge {eid} is not removable")
            out[eid] = int(val)
        for eid in self.graph.disabled_edges:
            out[eid] = 1
        return out


@dataclass
class InterdictionResult:
    removals: FrozenSet[int]
    throughput: float
    devices: FrozenSet[int] = frozenset()
    certificate: Dict[str, float] = field(default_factory=dict)


@dataclass
class CriticalityMap:
    values: Dict[int, float]
    budgets: List[int] = field(default_factory=list)
    hits: Dict[int, List[int]] = field(default_factory=dict)
    metadata: Dict[str, str] = field(default_factory=dict)

    def __getitem__(self, device_id):
        return self.values.get(device_id, 0.0)

    def ranked(self) -> List[int]:
        """Device ids by descending criticality, ties by ascending id."""
        return sorted(self.values, key=lambda d: (-self.values[d], d))

    def to_csv(self) -> str:
        lines = ["device_id,cr,budgets_hit"]
        for d in sorted(self.values):
            hits = " ".join(str(u) for u in self.hits.get(d, []))
            lines.append(f"{d},{self.values[d]:g},{hits}")
        return "\n".join(lines) + "\n"


def big_m(graph: ModifiedFlowGraph, bandwidth: float) -> Dict[int, float]:
    incoming: Dict[str, float] = {}
    for e in graph.edges:
        if e.capacity != INF:
            incoming[e.head] = incoming.get(e.head, 0.0) + e.capacity
    return {e.id: bandwidth * incoming.get(e.tail, 0.0) for e in graph.removable_edges}


def interference_rows(graph: ModifiedFlowGraph, kind: str) -> List[FrozenSet[int]]:
    """Distinct interference sets of ``kind`` edges, in first-appearance order.

    Edges with the same set produce identical constraints; one row each is
    kept.
    """
    seen = {}
    for e in graph.of_kind(kind):
        seen.setdefault(e.interference, None)
    return list(seen)


def build_inner_lp(problem: ThroughputProblem) -> LinearProgram:
    g = problem.graph
    W = problem.bandwidth
    z = problem.z()
    M = big_m(g, W)
    lp = LinearProgram()
    zero_cap = set()
    for e in g.edges:
        finite = e.capacity != INF
        if finite and e.capacity <= 0:
            zero_cap.add(e.id)
        lp.add_variable(f"f{e.id}", 0.0, 0.0 if e.id in zero_cap else INF)
    lp.add_variable("Wc")
    lp.add_variable("Wd")
    lp.set_objective(MAXIMIZE, {f"f{_circulation_edge(g)}": 1.0})

    balance = {n: {} for n in g.nodes}
    for e in g.edges:
        balance[e.head][f"f{e.id}"] = balance[e.head].get(f"f{e.id}", 0.0) + 1.0
        balance[e.tail][f"f{e.id}"] = balance[e.tail].get(f"f{e.id}", 0.0) - 1.0
    for n in g.nodes:
        lp.add_constraint(balance[n], EQ, 0.0, name=f"bal[{n}]")

    for kind, bw in ((CELLULAR, "Wc"), (D2D, "Wd")):
        for k, members in enumerate(interference_rows(g, kind)):
            coeffs = {f"f{i}": 1.0 / g.edges[i].capacity for i in sorted(members) if i not in zero_cap}
            coeffs[bw] = -1.0
            lp.add_constraint(coeffs, LE, 0.0, name=f"int_{kind}[{k}]")
    for e in g.removable_edges:
        lp.add_constraint({f"f{e.id}": 1.0}, LE, M[e.id] * (1 - z[e.id]), name=f"rm[{e.id}]")
    lp.add_constraint({"Wc": 1.0, "Wd": 1.0}, LE, W, name="bandwidth")
    return lp


def _circulation_edge(g: ModifiedFlowGraph) -> int:
    for e in g.edges:
        if e.kind == VIRTUAL and e.tail == SINK and e.head == BS:
            return e.id
    raise ValueError("graph has no (vt, B) edge")


def solve_throughput(problem: ThroughputProblem, backend: str = "simplex"):
    """Max-flow throughput ``T`` (bits/s) and the underlying LP solution."""
    lp = build_inner_lp(problem)
    sol = solve_lp(lp, backend=backend)
    if not sol.optimal:
        raise SolverError(f"throughput LP is {sol.status}")
    return max(sol.objective, 0.0), sol


def throughput(graph: ModifiedFlowGraph, bandwidth: float, removed: Iterable[int] = (), backend="simplex") -> float:
    problem = ThroughputProblem(graph, bandwidth, {e: 1 for e in removed})
    return solve_throughput(problem, backend)[0]


def build_dual_milp(graph: ModifiedFlowGraph, bandwidth: float, budget: int) -> MixedIntegerProgram:
    """Single-level interdiction MILP: dual of the throughput LP plus ``z``.

    Devices already disabled in the graph view enter with ``z`` fixed to 1
    and do not consume budget.
    """
    g = graph
    W = bandwidth
    rem = g.removable_edges
    if not 0 <= budget <= len(rem):
        raise ValueError(f"budget {budget} outside [0, {len(rem)}]")
    M = big_m(g, W)
    off = g.disabled_edges
    lp = LinearProgram()
    for n in g.nodes:
        lp.add_variable(f"p[{n}]", -INF, INF)
    cell_rows = interference_rows(g, CELLULAR)
    d2d_rows = interference_rows(g, D2D)
    for k in range(len(cell_rows)):
        lp.add_variable(f"qc[{k}]")
    for k in range(len(d2d_rows)):
        lp.add_variable(f"qd[{k}]")
    for e in rem:
        lp.add_variable(f"r[{e.id}]")
        lp.add_variable(f"delta[{e.id}]")
        lp.add_variable(f"z[{e.id}]", 1.0 if e.id in off else 0.0, 1.0)
    lp.add_variable("l")

    obj = {"l": W}
    for e in rem:
        obj[f"r[{e.id}]"] = M[e.id]
        obj[f"delta[{e.id}]"] = -M[e.id]
    lp.set_objective(MINIMIZE, obj)

    lp.add_constraint({f"z[{e.id}]": 1.0 for e in rem if e.id not in off}, LE, budget, name="budget")
    for e in rem:
        r, d, z = f"r[{e.id}]", f"delta[{e.id}]", f"z[{e.id}]"
        lp.add_constraint({d: 1.0, z: -1.0}, LE, 0.0, name=f"lin1[{e.id}]")
        lp.add_constraint({d: 1.0, r: -1.0}, LE, 0.0, name=f"lin2[{e.id}]")
        lp.add_constraint({d: 1.0, r: -1.0, z: -1.0}, GE, -1.0, name=f"lin3[{e.id}]")

    rows_of = {}
    for kind, rows, prefix in ((CELLULAR, cell_rows, "qc"), (D2D, d2d_rows, "qd")):
        for k, members in enumerate(rows):
            for i in members:
                rows_of.setdefault(i, []).append(f"{prefix}[{k}]")
    for e in g.edges:
        coeffs = {f"p[{e.head}]": 1.0, f"p[{e.tail}]": -1.0}
        rhs = 0.0
        if e.kind in (CELLULAR, D2D):
            if e.capacity <= 0:
                continue  # flow pinned to zero; no dual row
            for q in rows_of.get(e.id, ()):
                coeffs[q] = coeffs.get(q, 0.0) + 1.0 / e.capacity
        elif e.kind == REMOVABLE:
            coeffs[f"r[{e.id}]"] = 1.0
        elif e.tail == SINK and e.head == BS:
            rhs = 1.0
        lp.add_constraint(coeffs, GE, rhs, name=f"dual[{e.id}]")
    lp.add_constraint({"l": 1.0, **{f"qc[{k}]": -1.0 for k in range(len(cell_rows))}}, GE, 0.0, name="l_cell")
    lp.add_constraint({"l": 1.0, **{f"qd[{k}]": -1.0 for k in range(len(d2d_rows))}}, GE, 0.0, name="l_d2d")
    return MixedIntegerProgram(lp, {f"z[{e.id}]" for e in rem})


def freeze_removals(mip: MixedIntegerProgram, removals: Iterable[int]) -> LinearProgram:
    """The dual MILP with every ``z`` fixed: an LP whose optimum is ``T(z)``."""
    removals = set(removals)
    lp = mip.base.copy()
    for name in mip.binaries:
        eid = int(name[2:-1])
        v = lp.variables[lp.index(name)]
        if v.lower == 1.0:
            continue
        v.lower = v.upper = 1.0 if eid in removals else 0.0
    # the budget row would reject frozen vectors larger than u
    for con in lp.constraints:
        if con.name == "budget":
            con.rhs = float(len(mip.binaries))
    return lp


def solve_interdiction(
    graph: ModifiedFlowGraph, bandwidth: float, budget: int, backend: str = "simplex"
) -> InterdictionResult:
    mip = build_dual_milp(graph, bandwidth, budget)
    sol = solve_mip(mip, backend=backend)
    if not sol.optimal:
        raise SolverError(f"interdiction MILP is {sol.status}")
    off = graph.disabled_edges
    chosen = frozenset(
        e.id for e in graph.removable_edges if e.id not in off and sol.values[f"z[{e.id}]"] > 0.5
    )
    devices = frozenset(e.device for e in graph.removable_edges if e.id in chosen)
    return InterdictionResult(chosen, max(sol.objective, 0.0), devices, dict(sol.values))


def brute_force_interdiction(
    graph: ModifiedFlowGraph, bandwidth: float, budget: int, cap: int = 100_000, backend: str = "simplex"
) -> InterdictionResult:
    """Exhaustive bilevel oracle over every removal set of size <= budget."""
    off = graph.disabled_edges
    ids = sorted(e.id for e in graph.removable_edges if e.id not in off)
    budget = min(budget, len(ids))
    count = sum(math.comb(len(ids), s) for s in range(budget + 1))
    if count > cap:
        raise OracleCapError(f"{count} removal subsets exceed the cap of {cap}")
    results = []
    for size in range(budget + 1):
        for subset in itertools.combinations(ids, size):
            results.append((throughput(graph, bandwidth, subset, backend), subset))
    best = min(t for t, _ in results)
    tol = 1e-9 * max(1.0, abs(best))
    t, subset = min((s, t) for t, s in results if t <= best + tol)[::-1]
    chosen = frozenset(subset)
    devices = frozenset(graph.edges[i].device for i in chosen)
    return InterdictionResult(chosen, t, devices)


def default_budgets(k: int, n_d2d: int, max_count: int = 20) -> List[int]:
    """Evenly spaced budgets spanning [k, n_d2d], at most ``max_count`` of them."""
    if n_d2d < k:
        return []
    count = int(min(max_count, n_d2d - k + 1))
    return sorted({int(round(x)) for x in np.linspace(k, n_d2d, count)})


def nce(
    graph: ModifiedFlowGraph,
    bandwidth: float,
    budgets: Sequence[int],
    backend: str = "simplex",
    solver=None,
) -> CriticalityMap:
    """Count, per D2D device, how many budgets' optimal interdictions remove it."""
    solver = solver or solve_interdiction
    budgets = sorted(budgets)
    n_rem = len(graph.removable_edges)
    if any(u < 0 or u > n_rem for u in budgets):
        raise ValueError(f"budgets must lie in [0, {n_rem}]")
    cr = {d: 0.0 for d in graph.removable}
    hits: Dict[int, List[int]] = {d: [] for d in graph.removable}
    for u in budgets:
        res = solver(graph, bandwidth, u, backend=backend)
        for d in res.devices:
            cr[d] += 1.0
            hits[d].append(u)
    meta = {"big_m": BIG_M_NOTE, "tie_break": TIE_BREAK_NOTE, "backend": backend}
    return CriticalityMap(cr, list(budgets), hits, meta)


def merge_criticality(maps: Sequence[CriticalityMap]) -> CriticalityMap:
    """Sum criticality across snapshots."""
    total: Dict[int, float] = {}
    hits: Dict[int, List[int]] = {}
    budgets: List[int] = []
    for m in maps:
        budgets.extend(m.budgets)
        for d, v in m.values.items():
            total[d] = total.get(d, 0.0) + v
            hits.setdefault(d, []).extend(m.hits.get(d, []))
    meta = dict(maps[0].metadata) if maps else {}
    meta["snapshots"] = str(len(maps))
    return CriticalityMap(total, budgets, hits, meta)
