"""Criticality-targeted influence maximization with reverse-reachable sets.

Origins are drawn in proportion to criticality, so the share of RR sets a
seed set covers, scaled by the total criticality, estimates its
criticality-weighted spread.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, IterationCapError
from .osn import SocialGraph, criticality_vector, effective_probabilities

DEFAULT_MAX_DOUBLINGS = 40


def log_binomial(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@dataclass(frozen=True)
class ImParams:
    """Stopping-rule constants; ``failure_split`` is the 2 in ln(2/delta)."""

    n: int
    k: int
    epsilon: float
    delta: float
    failure_split: float = 2.0

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"k must lie in [1, {self.n}], got {self.k}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")

    @property
    def log_term(self) -> float:
        return math.log(self.failure_split / self.delta)

    @property
    def tau(self) -> float:
        return math.sqrt(self.log_term)

    @property
    def sigma(self) -> float:
        return math.sqrt((1 - 1 / math.e) * (log_binomial(self.n, self.k) + self.log_term))

    @property
    def phi(self) -> float:
        return ((1 - 1 / math.e) * self.sigma + self.tau) / self.epsilon

    @property
    def gamma(self) -> float:
        return 2 * (self.phi**2 + self.log_term)


class OriginSampler:
    """Draws node indices with probability cr_v / sum(cr)."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("criticality values must be finite and non-negative")
        self.cum = np.cumsum(w)
        self.total = float(self.cum[-1]) if w.size else 0.0
        if self.total <= 0:
            raise ConfigError("all-zero criticality: no RR set origin can be drawn")

    def __call__(self, rng) -> int:
        x = rng.random() * self.total
        i = int(np.searchsorted(self.cum, x, side="right"))
        # guard against landing on a zero-weight tail through rounding
        return min(i, int(np.searchsorted(self.cum, self.total, side="left")))


def sample_origin(criticality, rng) -> int:
    """Index of a node drawn proportionally to ``criticality``."""
    return OriginSampler(criticality)(rng)


@dataclass
class RrSet:
    origin: int
    members: np.ndarray  # sorted node indices

    def __contains__(self, node: int) -> bool:
        i = np.searchsorted(self.members, node)
        return bool(i < self.members.size and self.members[i] == node)


def reverse_reachable(graph: SocialGraph, origin: int, p_eff: np.ndarray, rng) -> np.ndarray:
    """Nodes reaching ``origin`` through incoming edges kept with ``p_eff``."""
    seen = np.zeros(graph.n, dtype=bool)
    seen[origin] = True
    frontier = np.array([origin], dtype=np.int64)
    found = [frontier]
    ptr, order = graph.in_ptr, graph.in_edges
    while frontier.size:
        if frontier.size == 1:
            v = int(frontier[0])
            e = order[ptr[v] : ptr[v + 1]]
        else:
            starts = ptr[frontier]
            lens = ptr[frontier + 1] - starts
            idx = np.repeat(starts - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
            e = order[idx + np.arange(int(lens.sum()))]
        if e.size == 0:
            break
        e = e[rng.random(e.size) < p_eff[e]]
        tails = np.unique(graph.src[e])
        tails = tails[~seen[tails]]
        seen[tails] = True
        frontier = tails
        found.append(tails)
    return np.sort(np.concatenate(found))


def generate_rr_set(graph: SocialGraph, criticality=None, awareness=None, rng=None, origin: Optional[int] = None) -> RrSet:
    rng = rng if rng is not None else np.random.default_rng()
    p_eff = effective_probabilities(graph, awareness)
    if origin is None:
        origin = sample_origin(criticality_vector(graph, criticality), rng)
    return RrSet(origin, reverse_reachable(graph, origin, p_eff, rng))


@dataclass
class RrCollection:
    """RR sets over a fixed graph plus an inverted node -> set index."""

    nodes: Sequence
    omega: float
    sets: List[np.ndarray] = field(default_factory=list)
    origins: List[int] = field(default_factory=list)

    def __post_init__(self):
        if self.omega <= 0:
            raise ConfigError("total criticality must be positive")
        self._index = None

    def __len__(self):
        return len(self.sets)

    def add(self, rr: RrSet) -> None:
        self.sets.append(rr.members)
        self.origins.append(rr.origin)
        self._index = None

    def index(self):
        """CSR inverted index: sets containing node v are ``ids[ptr[v]:ptr[v+1]]``."""
        if self._index is None:
            n = len(self.nodes)
            if self.sets:
                members = np.concatenate(self.sets)
                owners = np.repeat(np.arange(len(self.sets)), [s.size for s in self.sets])
            else:
                members = owners = np.zeros(0, dtype=np.int64)
            order = np.argsort(members, kind="stable")
            ptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(members, minlength=n), out=ptr[1:])
            self._index = (ptr, owners[order])
        return self._index

    def id_rank(self) -> np.ndarray:
        """Position of each node when ids are sorted."""
        if getattr(self, "_rank", None) is None:
            order = sorted(range(len(self.nodes)), key=lambda i: _id_key(self.nodes[i]))
            self._rank = np.empty(len(order), dtype=np.int64)
            self._rank[order] = np.arange(len(order))
        return self._rank

    def sets_containing(self, node: int) -> np.ndarray:
        ptr, ids = self.index()
        return ids[ptr[node] : ptr[node + 1]]

    def coverage(self, seeds) -> int:
        hit = np.zeros(len(self.sets), dtype=bool)
        for v in seeds:
            hit[self.sets_containing(int(v))] = True
        return int(hit.sum())


def estimate_from_collection(collection: RrCollection, seeds) -> float:
    """Coverage share of ``seeds`` (node indices) times total criticality."""
    if len(collection) == 0:
        raise ValueError("empty RR collection")
    return collection.coverage(seeds) / len(collection) * collection.omega


def greedy_max_coverage(collection: RrCollection, k: int):
    """Greedy seed picks as (node indices, covered count, marginal gains).

    Ties go to the node whose id sorts first. Stops early once every set
    is covered.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ptr, ids = collection.index()
    counts = np.diff(ptr).astype(np.int64)
    covered = np.zeros(len(collection), dtype=bool)
    rank = collection.id_rank()
    seeds, gains = [], []
    total = 0
    for _ in range(k):
        best = counts.max(initial=0)
        if best <= 0:
            break
        ties = np.flatnonzero(counts == best)
        v = int(ties[np.argmin(rank[ties])])
        fresh = ids[ptr[v] : ptr[v + 1]]
        fresh = fresh[~covered[fresh]]
        covered[fresh] = True
        members = np.concatenate([collection.sets[s] for s in fresh])
        counts -= np.bincount(members, minlength=counts.size)
        seeds.append(v)
        gains.append(int(fresh.size))
        total += int(fresh.size)
    return seeds, total, gains


def _id_key(u):
    return (0, u, "") if isinstance(u, (int, np.integer)) else (1, 0, str(u))


@dataclass
class SeedResult:
    seeds: List  # user ids in pick order
    estimate: float
    rr_sets: int
    coverage: int
    gamma: float
    marginals: List[int]
    params: Optional[ImParams] = None
    rounds: int = 1

    def to_csv(self) -> str:
        lines = ["# schema: seeds/v1", "rank,user_id,marginal_coverage"]
        lines += [f"{r},{u},{g}" for r, (u, g) in enumerate(zip(self.seeds, self.marginals), 1)]
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        p = self.params
        return json.dumps(
            {
                "epsilon": p.epsilon if p else None,
                "delta": p.delta if p else None,
                "gamma": self.gamma,
                "rr_sets": self.rr_sets,
                "coverage": self.coverage,
                "estimate": self.estimate,
            },
            sort_keys=True,
        )


def targeted_im(
    graph: SocialGraph,
    criticality,
    awareness=None,
    k: int = 10,
    epsilon: float = 0.1,
    delta: float = 0.1,
    seed: int = 0,
    max_doublings: int = DEFAULT_MAX_DOUBLINGS,
    failure_split: float = 2.0,
) -> SeedResult:
    """Seed set of size <= k maximizing criticality-weighted influence.

    Samples ceil(gamma) RR sets, runs greedy coverage, and doubles the
    collection until the chosen seeds cover at least gamma sets. RR set
    ``i`` always uses the stream ``(seed, i)``.
    """
    params = ImParams(graph.n, k, epsilon, delta, failure_split)
    cr = criticality_vector(graph, criticality) if not isinstance(criticality, np.ndarray) else criticality
    sampler = OriginSampler(cr)
    p_eff = effective_probabilities(graph, awareness)
    coll = RrCollection(graph.nodes, sampler.total)
    gamma = params.gamma
    target = math.ceil(gamma)
    for rnd in range(max_doublings + 1):
        while len(coll) < target:
            rng = np.random.default_rng([seed, len(coll)])
            o = sampler(rng)
            coll.add(RrSet(o, reverse_reachable(graph, o, p_eff, rng)))
        picks, cov, gains = greedy_max_coverage(coll, k)
        if cov >= gamma:
            return SeedResult(
                [graph.nodes[v] for v in picks],
                cov / len(coll) * coll.omega,
                len(coll),
                cov,
                gamma,
                gains,
                params,
                rnd + 1,
            )
        target *= 2
    raise IterationCapError(
        f"coverage {cov} still below gamma={gamma:.1f} after {max_doublings} doublings "
        f"({len(coll)} RR sets, omega={coll.omega:g})"
    )


def exhaustive_best(graph: SocialGraph, k: int, value) -> float:
    """max over all size-k node subsets of ``value(subset)``; oracle helper."""
    from itertools import combinations

    return max(value(list(c)) for c in combinations(graph.nodes, k))
