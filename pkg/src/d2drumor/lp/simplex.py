"""Dense two-phase tableau simplex with Bland fallback.

The program is brought to ``min c^T x, A x = b, x >= 0, b >= 0`` form:
finite lower bounds are shifted out, upper-bounded-only variables are
mirrored, free variables are split, and finite upper bounds of shifted
variables become extra rows. Slack columns double as the starting basis
where their sign allows; the remaining rows receive artificials.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalInstabilityError
from .model import (
    EQ,
    INF,
    INFEASIBLE,
    LE,
    MAXIMIZE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LpSolution,
)

FEAS_TOL = 1e-6
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
STALL_LIMIT = 50
PROGRESS_TOL = 1e-9
REFACTOR_EVERY = 100
PERTURB_SIZE = 1e-6
HARRIS_TOL = 1e-9
PERTURB_SEED = 0
SCALE_PASSES = 4


def solve_lp(lp: LinearProgram, backend: str = "simplex") -> LpSolution:
    """Solve ``lp`` and return primal values, duals and the dual objective.

    ``duals[i]`` is the shadow price of constraint ``i``: the rate of change
    of the optimal objective (in the program's own sense) per unit increase
    of its right-hand side.
    """
    lp.validate()
    if backend == "highs":
        from .highs import solve_lp_highs

        return solve_lp_highs(lp)
    if backend != "simplex":
        raise ValueError(f"unknown LP backend {backend!r}")
    return _TableauSolver(lp).solve()


def dual_objective(lp: LinearProgram, duals, values) -> float:
    """Lagrangian dual value ``b^T y + sum_j d_j * bound_j``.

    Reduced costs are recomputed from the duals, so the value is an
    independent certificate rather than an echo of the primal objective.
    """
    sign = -1.0 if lp.sense == MAXIMIZE else 1.0
    y = {i: sign * v for i, v in duals.items()}
    reduced = {v.name: sign * lp.objective.get(v.name, 0.0) for v in lp.variables}
    total = 0.0
    for i, con in enumerate(lp.constraints):
        yi = y.get(i, 0.0)
        if yi == 0.0:
            continue
        total += yi * con.rhs
        for name, a in con.coeffs.items():
            reduced[name] -= yi * a
    for v in lp.variables:
        d = reduced[v.name]
        if d > 0 and v.lower != -INF:
            total += d * v.lower
        elif d < 0 and v.upper != INF:
            total += d * v.upper
        else:
            total += d * values.get(v.name, 0.0)
    return sign * total


def _equilibrate(rows: np.ndarray, passes: int = SCALE_PASSES):
    """Power-of-two row and column factors bringing entries near 1.

    Geometric-mean passes: each row, then each column, is divided by the
    square root of its largest times smallest magnitude. Powers of two keep
    the scaling itself free of round-off.
    """
    m, n = rows.shape
    r, c = np.ones(m), np.ones(n)
    a = np.abs(rows)
    if a.size == 0 or not a.any():
        return r, c
    for _ in range(passes):
        scaled = a * r[:, None] * c[None, :]
        r /= _geo(scaled, axis=1)
        scaled = a * r[:, None] * c[None, :]
        c /= _geo(scaled, axis=0)
    return np.exp2(np.round(np.log2(r))), np.exp2(np.round(np.log2(c)))


def _geo(a: np.ndarray, axis: int) -> np.ndarray:
    big = a.max(axis=axis)
    small = np.where(a > 0, a, np.inf).min(axis=axis)
    empty = big == 0
    out = np.sqrt(np.where(empty, 1.0, big) * np.where(empty, 1.0, small))
    return out


class _TableauSolver:
    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self._build()

    def _build(self):
        lp = self.lp
        n0 = len(lp.variables)
        # per original variable: (offset, [(std_col, factor)]) with x = offset + sum factor*x'
        self.maps = []
        ncol = 0
        ub_rows = []
        for v in lp.variables:
            if v.lower != -INF:
                self.maps.append((v.lower, [(ncol, 1.0)]))
                if v.upper != INF:
                    ub_rows.append((ncol, v.upper - v.lower))
                ncol += 1
            elif v.upper != INF:
                self.maps.append((v.upper, [(ncol, -1.0)]))
                ncol += 1
            else:
                self.maps.append((0.0, [(ncol, 1.0), (ncol + 1, -1.0)]))
                ncol += 2
        self.n_struct = ncol
        m0 = len(lp.constraints)
        m = m0 + len(ub_rows)
        rows = np.zeros((m, ncol))
        rhs = np.zeros(m)
        rel = []
        for i, con in enumerate(lp.constraints):
            b = con.rhs
            for name, a in con.coeffs.items():
                offset, cols = self.maps[lp.index(name)]
                b -= a * offset
                for col, f in cols:
                    rows[i, col] += a * f
            rhs[i] = b
            rel.append(con.relation)
        for k, (col, width) in enumerate(ub_rows):
            rows[m0 + k, col] = 1.0
            rhs[m0 + k] = width
            rel.append(LE)
        self.row_scale, self.col_scale = _equilibrate(rows)
        rows *= self.row_scale[:, None] * self.col_scale[None, :]
        rhs *= self.row_scale

        n_slack = sum(1 for r in rel if r != EQ)
        self.flip = np.where(rhs < 0, -1.0, 1.0)
        slack_cols = {}
        col = ncol
        for i, r in enumerate(rel):
            if r != EQ:
                slack_cols[i] = (col, 1.0 if r == LE else -1.0)
                col += 1
        basis = [-1] * m
        art_rows = []
        for i in range(m):
            sc = slack_cols.get(i)
            if sc is not None and sc[1] * self.flip[i] > 0:
                basis[i] = sc[0]
            else:
                art_rows.append(i)
        self.n_art = len(art_rows)
        total = ncol + n_slack + self.n_art
        T = np.zeros((m + 1, total + 1))
        T[:m, :ncol] = rows
        for i, (c, s) in slack_cols.items():
            T[i, c] = s
        T[:m, total] = rhs
        T[:m, :] *= self.flip[:, None]
        self.art_start = ncol + n_slack
        for k, i in enumerate(art_rows):
            T[i, self.art_start + k] = 1.0
            basis[i] = self.art_start + k
        self.init_basis = list(basis)
        self.A0 = T[:m, :].copy()
        self.b0 = self.A0[:, total].copy()
        self.T = T
        self.basis = basis
        self.m = m
        self.m0 = m0
        self.ntot = total

        cost = np.zeros(total)
        sign = -1.0 if lp.sense == MAXIMIZE else 1.0
        for j, v in enumerate(lp.variables):
            cj = sign * lp.objective.get(v.name, 0.0)
            if cj:
                for c, f in self.maps[j][1]:
                    cost[c] += cj * f * self.col_scale[c]
        self.cost = cost
        self.iterations = 0
        assert n0 == len(self.maps)

    # -- pivoting -----------------------------------------------------------
    def _price(self, cost):
        m = self.m
        self.cur_cost = cost
        cb = cost[self.basis]
        self.T[m, :] = 0.0
        self.T[m, : self.ntot] = cost
        self.T[m, :] -= cb @ self.T[:m, :]

    def _pivot(self, row, col):
        T = self.T
        T[row, :] /= T[row, col]
        colv = T[:, col].copy()
        colv[row] = 0.0
        T -= np.outer(colv, T[row, :])
        self.basis[row] = col

    def _refactor(self):
        """Rebuild the tableau rows from the original matrix to shed round-off."""
        B = self.A0[:, self.basis]
        try:
            self.T[: self.m, :] = np.linalg.solve(B, self.A0)
        except np.linalg.LinAlgError:
            return
        rhs = self.T[: self.m, self.ntot]
        rhs[(rhs < 0) & (rhs > -FEAS_TOL)] = 0.0
        self._price(self.cur_cost)

    def _ratio_test(self, column, rhs, bland):
        """Harris two-pass ratio test; returns the leaving row or None.

        The first pass finds the largest step that keeps every basic
        variable above ``-HARRIS_TOL``; the second picks, among rows blocking
        within that step, the largest pivot element.
        """
        # entries this small relative to the column are round-off, not pivots
        pos = np.flatnonzero(column > PIVOT_TOL * max(1.0, float(np.abs(column).max())))
        if pos.size == 0:
            return None
        a = column[pos]
        b = np.maximum(rhs[pos], 0.0)
        limit = ((b + HARRIS_TOL) / a).min()
        cand = pos[b / a <= limit]
        basis = np.asarray(self.basis)
        if bland:
            ratios = np.maximum(rhs[cand], 0.0) / column[cand]
            tight = cand[ratios <= ratios.min() + 1e-12 * max(1.0, ratios.min())]
            return int(tight[np.argmin(basis[tight])])
        mags = column[cand]
        top = cand[mags >= mags.max() * (1 - 1e-12)]
        return int(top[np.argmin(basis[top])])

    def _perturb(self):
        """Lift every basic value by a small positive shift.

        Breaks primal degeneracy so each pivot makes strict progress. The
        shifted right-hand side is kept in ``A0`` so refactoring honours it;
        ``_restore`` puts the original back.
        """
        m, n = self.m, self.ntot
        rng = np.random.default_rng(PERTURB_SEED)
        x = self.T[:m, n]
        x += PERTURB_SIZE * (1.0 + np.abs(x)) * rng.uniform(0.5, 1.0, m)
        self.A0[:, n] = self.A0[:, self.basis] @ x
        self._price(self.cur_cost)

    def _restore(self, allowed):
        """Drop the shift; repair leftover infeasibility with dual pivots."""
        m, n = self.m, self.ntot
        self.A0[:, n] = self.b0
        self._refactor()
        T = self.T
        tol = FEAS_TOL
        for _ in range(10 * m + 100):
            rhs = T[:m, n]
            row = int(np.argmin(rhs))
            if rhs[row] >= -tol:
                rhs[rhs < 0] = 0.0
                return
            entries = T[row, :n]
            scale = max(1.0, float(np.abs(entries).max()))
            cols = np.flatnonzero(allowed & (entries < -PIVOT_TOL * scale))
            if cols.size == 0:
                raise NumericalInstabilityError("no dual pivot repairs the perturbed basis")
            ratios = np.maximum(T[m, cols], 0.0) / -entries[cols]
            tight = cols[ratios <= ratios.min() + OPT_TOL]
            self._pivot(row, int(tight[np.argmin(entries[tight])]))
            T = self.T
        raise NumericalInstabilityError("dual repair did not converge")

    def _run(self, allowed, phase1=False):
        while True:
            status, perturbed = self._primal(allowed, phase1)
            if not perturbed or status != OPTIMAL:
                if perturbed:
                    self.A0[:, self.ntot] = self.b0
                    self._refactor()
                return status
            self._restore(allowed)

    def _primal(self, allowed, phase1=False):
        T, m, n = self.T, self.m, self.ntot
        bland = False
        perturbed = False
        fresh = False
        stall = 0
        max_iter = 50 * (m + n) + 1000
        while True:
            self.iterations += 1
            if self.iterations > max_iter:
                raise NumericalInstabilityError(
                    f"simplex made no progress after {max_iter} pivots"
                )
            if phase1 and -T[m, n] <= FEAS_TOL:
                # no artificial weight left to remove
                return OPTIMAL, perturbed
            d = T[m, :n]
            cand = np.flatnonzero(allowed & (d < -OPT_TOL))
            if cand.size == 0:
                if fresh:
                    return OPTIMAL, perturbed
                # confirm optimality on a freshly rebuilt tableau
                self._refactor()
                T = self.T
                fresh = True
                continue
            fresh = False
            if bland:
                col = int(cand[0])
            else:
                col = int(cand[np.argmin(d[cand])])
            column = T[:m, col]
            row = self._ratio_test(column, T[:m, n], bland)
            if row is None:
                return UNBOUNDED, perturbed
            # predicted gain from the step, relative to the objective, so
            # round-off steps on large flows count as degenerate
            gain = max(T[row, n], 0.0) / column[row] * -d[col]
            degenerate = gain <= (0.0 if perturbed else PROGRESS_TOL) * max(1.0, abs(T[m, n]))
            self._pivot(row, col)
            T = self.T
            if self.iterations % REFACTOR_EVERY == 0:
                self._refactor()
            if degenerate:
                stall += 1
                if stall > STALL_LIMIT:
                    if not perturbed:
                        self._perturb()
                        perturbed = True
                    else:
                        bland = True
                    stall = 0
            else:
                stall = 0
                bland = False

    def solve(self) -> LpSolution:
        m, n = self.m, self.ntot
        allowed = np.ones(n, dtype=bool)
        if self.n_art:
            phase1 = np.zeros(n)
            phase1[self.art_start :] = 1.0
            self._price(phase1)
            self._run(allowed, phase1=True)
            infeas = -self.T[m, n]
            scale = max(1.0, float(np.abs(self.T[:m, n]).max(initial=0.0)))
            if infeas > FEAS_TOL * scale:
                return LpSolution(INFEASIBLE, iterations=self.iterations)
            for row in range(m):
                if self.basis[row] >= self.art_start:
                    entries = np.abs(self.T[row, : self.art_start])
                    cols = np.flatnonzero(entries > PIVOT_TOL * max(1.0, float(entries.max(initial=0.0))))
                    if cols.size:
                        self._pivot(row, int(cols[np.argmax(entries[cols])]))
            allowed[self.art_start :] = False
        self._price(self.cost)
        status = self._run(allowed)
        if status == UNBOUNDED:
            return LpSolution(UNBOUNDED, iterations=self.iterations)
        return self._extract()

    def _extract(self) -> LpSolution:
        lp, T, m, n = self.lp, self.T, self.m, self.ntot
        xs = np.zeros(n)
        for row, col in enumerate(self.basis):
            xs[col] = T[row, n]
        xs[: self.n_struct] *= self.col_scale
        values = {}
        for j, v in enumerate(lp.variables):
            offset, cols = self.maps[j]
            values[v.name] = float(offset + sum(f * xs[c] for c, f in cols))
        # y_i = -(reduced cost of the row's initial basic column)
        sign = -1.0 if lp.sense == MAXIMIZE else 1.0
        duals = {}
        for i in range(self.m0):
            y = -T[m, self.init_basis[i]]
            duals[i] = float(sign * self.flip[i] * self.row_scale[i] * y) + 0.0
        obj = float(lp.evaluate(values))
        dobj = dual_objective(lp, duals, values)
        return LpSolution(OPTIMAL, obj, values, duals, dobj, self.iterations)
