"""Shared instance builders and brute-force oracles for the test-suite."""

import itertools
import math

import numpy as np

from d2drumor.cellular import small_random_topology
from d2drumor.lp import EQ, GE, LE, MAXIMIZE, MINIMIZE, LinearProgram
from d2drumor.osn import Interconnection, SocialGraph
from d2drumor.scenario import ScenarioBundle


def random_lp(rng, n_vars=None, n_cons=None, bounded=False):
    """Random LP mixing relations, bound styles and senses."""
    n = n_vars or int(rng.integers(1, 5))
    m = n_cons or int(rng.integers(1, 5))
    sense = MAXIMIZE if rng.random() < 0.5 else MINIMIZE
    lp = LinearProgram()
    for j in range(n):
        kind = rng.integers(4) if not bounded else 3
        lo, hi = 0.0, math.inf
        if kind == 1:
            lo = float(rng.integers(-3, 3))
        elif kind == 2:
            lo, hi = -math.inf, math.inf
        elif kind == 3:
            lo = float(rng.integers(-3, 1))
            hi = lo + float(rng.integers(1, 6))
        lp.add_variable(f"x{j}", lo, hi)
    for i in range(m):
        coeffs = {f"x{j}": float(rng.integers(-4, 5)) for j in range(n) if rng.random() < 0.8}
        rel = [LE, GE, EQ][int(rng.integers(3)) if rng.random() < 0.9 else 2]
        lp.add_constraint(coeffs, rel, float(rng.integers(-5, 10)), f"c{i}")
    lp.set_objective(sense, {f"x{j}": float(rng.integers(-5, 6)) for j in range(n)})
    return lp


def vertex_optimum(lp):
    """Best objective over basic solutions of a bounded LP, or None if infeasible.

    Every vertex is the unique solution of n tight rows. Equality rows are
    always tight, so an independent subset of them is kept in every basis
    and only the remaining rows are drawn from inequalities and bounds.
    """
    names = lp.names
    n = len(names)
    eq, ineq = [], []
    for con in lp.constraints:
        row = ([con.coeffs.get(v, 0.0) for v in names], con.rhs)
        (eq if con.relation == EQ else ineq).append(row)
    for j, v in enumerate(lp.variables):
        e = [0.0] * n
        e[j] = 1.0
        for bound in (v.lower, v.upper):
            if math.isfinite(bound):
                ineq.append((e, bound))
    base = []
    for row in eq:
        trial = base + [row]
        if np.linalg.matrix_rank(np.array([r[0] for r in trial])) == len(trial):
            base = trial
    best = None
    for combo in itertools.combinations(range(len(ineq)), n - len(base)):
        rows = base + [ineq[i] for i in combo]
        A = np.array([r[0] for r in rows]).reshape(n, n)
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, np.array([r[1] for r in rows]))
        values = dict(zip(names, x))
        if lp.max_violation(values) > 1e-7:
            continue
        val = lp.evaluate(values)
        if best is None or (val > best if lp.sense == MAXIMIZE else val < best):
            best = val
    return best


def brute_force_binary(mip):
    """Optimum of a pure-binary program by enumeration, or None if infeasible."""
    names = mip.base.names
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(names)):
        values = dict(zip(names, bits))
        if mip.base.max_violation(values) > 1e-9:
            continue
        val = mip.base.evaluate(values)
        if best is None or (val > best if mip.base.sense == MAXIMIZE else val < best):
            best = val
    return best


def random_social(rng, n=None, m=None, ceiling=1.0):
    """Random simple digraph with at most 22 edges and U(0, ceiling) weights."""
    n = n or int(rng.integers(3, 13))
    cap = n * (n - 1)
    m = min(m or int(rng.integers(1, 23)), cap, 22)
    pairs = set()
    while len(pairs) < m:
        u, v = (int(x) for x in rng.integers(n, size=2))
        if u != v:
            pairs.add((u, v))
    src, dst = zip(*sorted(pairs))
    return SocialGraph(list(range(n)), src, dst, rng.random(m) * ceiling)


def chain(p=0.5):
    return SocialGraph(["a", "b", "c"], [0, 1], [1, 2], [p, p])


def small_bundle(seed=0, p=0.6, n_users=16):
    """Oracle-sized topology wired to a small random social graph."""
    top = small_random_topology(seed)
    rng = np.random.default_rng(seed + 99)
    pairs = set()
    while len(pairs) < 3 * n_users:
        u, v = (int(x) for x in rng.integers(n_users, size=2))
        if u != v:
            pairs.add((u, v))
    src, dst = zip(*sorted(pairs))
    g = SocialGraph(list(range(n_users)), src, dst, np.full(len(src), p))
    users = rng.permutation(n_users)
    ic = Interconnection({d.id: int(u) for d, u in zip(top.d2d_devices, users)})
    return ScenarioBundle([top], g, ic, None, seed)
