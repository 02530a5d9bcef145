"""Social graph, device/user interconnection, and Independent Cascade.

Cascades use live-edge semantics: every edge (u, v) gets one uniform draw
per run and is live when the draw falls below ``p(u, v) * (1 - W_v)``.
Sharing the draws across seed sets or awareness levels couples runs, so
activation is monotone in the seeds and anti-monotone in awareness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import sparse

from .errors import ConfigError, ParseError

MAX_EXACT_EDGES = 22


class SocialGraph:
    """Directed graph with per-edge propagation probabilities.

    Edges are stored sorted by (source, target) index; ``out_ptr`` indexes
    that order CSR-style and ``in_ptr``/``in_edges`` give the reverse view.
    Unassigned weights are NaN.
    """

    def __init__(self, nodes: Sequence, src, dst, prob=None):
        self.nodes = list(nodes)
        self.index = {u: i for i, u in enumerate(self.nodes)}
        if len(self.index) != len(self.nodes):
            raise ValueError("duplicate node ids")
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        prob = np.full(src.shape, np.nan) if prob is None else np.asarray(prob, dtype=float)
        order = np.lexsort((dst, src))
        self.src, self.dst, self.prob = src[order], dst[order], prob[order]
        if np.any(self.src == self.dst):
            raise ValueError("self-loops are not allowed")
        if self.m and np.any((np.diff(self.src) == 0) & (np.diff(self.dst) == 0)):
            raise ValueError("parallel edges are not allowed")
        w = self.prob[~np.isnan(self.prob)]
        if np.any((w < 0) | (w > 1)):
            raise ValueError("propagation probabilities must lie in [0, 1]")
        n = len(self.nodes)
        self.out_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.src, minlength=n), out=self.out_ptr[1:])
        self.in_edges = np.argsort(self.dst, kind="stable")
        self.in_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.dst, minlength=n), out=self.in_ptr[1:])
        self._incidence = None
        self._undirected = None

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return int(self.src.size)

    @property
    def weighted(self) -> bool:
        return not np.any(np.isnan(self.prob))

    def with_probabilities(self, prob) -> "SocialGraph":
        return SocialGraph(self.nodes, self.src, self.dst, prob)

    def edges(self):
        for s, d, p in zip(self.src, self.dst, self.prob):
            yield self.nodes[s], self.nodes[d], float(p)

    def out_degree(self, user) -> int:
        i = self.index[user]
        return int(self.out_ptr[i + 1] - self.out_ptr[i])

    def neighbors(self, user) -> List:
        """Users adjacent to ``user`` in either direction, sorted by index."""
        if self._undirected is None:
            adj: List[Set[int]] = [set() for _ in range(self.n)]
            for s, d in zip(self.src.tolist(), self.dst.tolist()):
                adj[s].add(d)
                adj[d].add(s)
            self._undirected = [sorted(a) for a in adj]
        return [self.nodes[j] for j in self._undirected[self.index[user]]]

    def incidence(self):
        """Sparse (m x n) matrix mapping each edge to its target node."""
        if self._incidence is None:
            data = np.ones(self.m, dtype=np.float32)
            self._incidence = sparse.csr_matrix(
                (data, (np.arange(self.m), self.dst)), shape=(self.m, self.n)
            )
        return self._incidence

    def indices(self, users: Iterable) -> np.ndarray:
        return np.array(sorted(self.index[u] for u in users), dtype=np.int64)

    def write(self, path) -> None:
        """Weighted edge list, one ``u v p`` line per directed edge."""
        with open(path, "w") as fh:
            fh.write("# u v p\n")
            for u, v, p in self.edges():
                fh.write(f"{u} {v} {p:.17g}\n")


def _parse_id(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def load_edge_list(path) -> SocialGraph:
    """SNAP-style undirected edge list; each pair becomes two directed edges.

    ``#`` lines and blank lines are skipped, repeated pairs are merged and
    self-pairs dropped. Weights stay NaN until :func:`assign_weights`.
    """
    pairs = set()
    order: Dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 2:
                raise ParseError(f"expected two node ids, got {len(toks)} fields", lineno)
            u, v = _parse_id(toks[0]), _parse_id(toks[1])
            for x in (u, v):
                order.setdefault(x, len(order))
            if u != v:
                pairs.add((u, v) if (order[u], str(u)) <= (order[v], str(v)) else (v, u))
    return _from_pairs(order, pairs)


def _from_pairs(order: Mapping, pairs) -> SocialGraph:
    nodes = sorted(order, key=lambda x: (not isinstance(x, int), x if isinstance(x, int) else str(x)))
    idx = {u: i for i, u in enumerate(nodes)}
    src, dst = [], []
    for u, v in pairs:
        src += [idx[u], idx[v]]
        dst += [idx[v], idx[u]]
    return SocialGraph(nodes, src, dst)


def load_weighted_edge_list(path) -> SocialGraph:
    """Directed ``u v p`` lines as written by :meth:`SocialGraph.write`."""
    nodes: Dict = {}
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 3:
                raise ParseError("expected 'u v p'", lineno)
            try:
                p = float(toks[2])
            except ValueError:
                raise ParseError(f"bad probability {toks[2]!r}", lineno) from None
            u, v = _parse_id(toks[0]), _parse_id(toks[1])
            nodes.setdefault(u, None)
            nodes.setdefault(v, None)
            rows.append((u, v, p))
    ordered = sorted(nodes, key=lambda x: (not isinstance(x, int), x if isinstance(x, int) else str(x)))
    idx = {u: i for i, u in enumerate(ordered)}
    return SocialGraph(
        ordered,
        [idx[u] for u, _, _ in rows],
        [idx[v] for _, v, _ in rows],
        [p for _, _, p in rows],
    )


def assign_weights(graph: SocialGraph, seed: int, ceiling: float = 0.1, distribution: str = "uniform") -> SocialGraph:
    """Independent ``U(0, 1) * ceiling`` weight per directed edge."""
    if distribution != "uniform":
        raise ConfigError(f"unsupported weight distribution {distribution!r}")
    if not 0.0 <= ceiling <= 1.0:
        raise ConfigError("weight ceiling must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return graph.with_probabilities(rng.random(graph.m) * ceiling)


def synthetic_social_graph(n: int = 4039, m: int = 88234, seed: int = 0, attach: Optional[int] = None) -> SocialGraph:
    """Clustered power-law stand-in with exactly ``n`` users and ``m`` interactions.

    Used when the SNAP Facebook file is not at hand; the defaults match its
    published node and edge counts.
    """
    import networkx as nx

    attach = attach or max(1, math.ceil(m / n))
    while attach * (n - attach) < m:
        attach += 1
    g = nx.powerlaw_cluster_graph(n, attach, 0.5, seed=seed)
    edges = sorted(tuple(sorted(e)) for e in g.edges())
    rng = np.random.default_rng(seed)
    if len(edges) > m:
        deg = np.zeros(n, dtype=int)
        for u, v in edges:
            deg[u] += 1
            deg[v] += 1
        keep = np.ones(len(edges), dtype=bool)
        for k in rng.permutation(len(edges)):
            if len(edges) - (~keep).sum() == m:
                break
            u, v = edges[k]
            if deg[u] > 1 and deg[v] > 1:
                keep[k] = False
                deg[u] -= 1
                deg[v] -= 1
        edges = [e for e, k in zip(edges, keep) if k]
    present = set(edges)
    while len(present) < m:
        u, v = sorted(int(x) for x in rng.integers(n, size=2))
        if u != v:
            present.add((u, v))
    edges = sorted(present)
    return _from_pairs({u: u for u in range(n)}, edges)


# -- awareness -----------------------------------------------------------------


def awareness_vector(graph: SocialGraph, awareness=None) -> np.ndarray:
    """Per-node W_v as an array; accepts None, a uniform level, or a mapping."""
    if awareness is None:
        return np.zeros(graph.n)
    if isinstance(awareness, (int, float)):
        vec = np.full(graph.n, float(awareness))
    else:
        vec = np.zeros(graph.n)
        for u, w in dict(awareness).items():
            vec[graph.index[u]] = float(w)
    if np.any((vec < 0) | (vec > 1)):
        raise ConfigError("awareness values must lie in [0, 1]")
    return vec


def effective_probabilities(graph: SocialGraph, awareness=None) -> np.ndarray:
    """``p(u, v) * (1 - W_v)`` per edge."""
    if not graph.weighted:
        raise ConfigError("social graph weights are unassigned")
    return graph.prob * (1.0 - awareness_vector(graph, awareness)[graph.dst])


def load_awareness(path) -> Dict:
    """``user_id=W`` lines; ``#`` comments allowed."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected user_id=W", lineno)
            k, v = line.split("=", 1)
            try:
                w = float(v)
            except ValueError:
                raise ParseError(f"bad awareness {v.strip()!r}", lineno) from None
            if not 0.0 <= w <= 1.0:
                raise ParseError("awareness outside [0, 1]", lineno)
            out[_parse_id(k.strip())] = w
    return out


# -- interconnection -----------------------------------------------------------


@dataclass
class Interconnection:
    device_to_user: Dict[int, object] = field(default_factory=dict)
    # device linked by the uniform first step -> neighbour links it spawned
    primary: Dict[int, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.user_to_device = {}
        for d, u in self.device_to_user.items():
            if u in self.user_to_device:
                raise ConfigError(f"user {u} is linked to two devices")
            self.user_to_device[u] = d

    def link(self, device, user) -> None:
        if device in self.device_to_user or user in self.user_to_device:
            raise ConfigError("interconnection must stay one-to-one")
        self.device_to_user[device] = user
        self.user_to_device[user] = device

    def __len__(self):
        return len(self.device_to_user)

    def devices_of(self, users: Iterable) -> Set[int]:
        return {self.user_to_device[u] for u in users if u in self.user_to_device}

    def to_csv(self) -> str:
        lines = ["# schema: interconnection/v1", "device_id,user_id"]
        lines += [f"{d},{u}" for d, u in sorted(self.device_to_user.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Interconnection":
        rows = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
        if rows and rows[0].startswith("device_id"):
            rows = rows[1:]
        out = {}
        for l in rows:
            d, u = l.split(",")
            out[int(d)] = _parse_id(u.strip())
        return cls(out)


STADIUM = (0.7, 0.4)
MALL = (0.9, 0.6)
PRESETS = {"stadium": STADIUM, "mall": MALL}


def d2d_neighbors(topology) -> Dict[int, List[int]]:
    """Undirected D2D adjacency: both ends enabled and within range."""
    devs = sorted(topology.d2d_devices, key=lambda d: d.id)
    out = {d.id: [] for d in devs}
    for a in devs:
        for b in devs:
            if a.id != b.id and math.hypot(a.x - b.x, a.y - b.y) <= topology.d2d_range:
                out[a.id].append(b.id)
    return out


def generate_interconnection(topology, graph: SocialGraph, p1: float, p2: float, seed: int) -> Interconnection:
    """Randomly link D2D devices to users, cascading to neighbours with p1 then p2.

    Endpoints already linked are never reused; a step with no free
    candidate is skipped.
    """
    if not (0 <= p1 <= 1 and 0 <= p2 <= 1):
        raise ConfigError("p1 and p2 must lie in [0, 1]")
    dev_adj = d2d_neighbors(topology)
    if len(dev_adj) > graph.n:
        raise ConfigError("more D2D devices than social users")
    rng = np.random.default_rng(seed)
    ic = Interconnection()

    def free_user():
        if len(ic.user_to_device) >= graph.n:
            return None
        while True:
            u = graph.nodes[int(rng.integers(graph.n))]
            if u not in ic.user_to_device:
                return u

    def pick(options):
        return options[int(rng.integers(len(options)))] if options else None

    def extend(i, v):
        di = pick([j for j in dev_adj[i] if j not in ic.device_to_user])
        uv = pick([w for w in graph.neighbors(v) if w not in ic.user_to_device])
        if di is None or uv is None:
            return None
        ic.link(di, uv)
        return di, uv

    for i in sorted(dev_adj):
        if i in ic.device_to_user:
            continue
        v = free_user()
        if v is None:
            break
        ic.link(i, v)
        ic.primary[i] = 0
        if rng.random() < p1:
            nxt = extend(i, v)
            if nxt is not None:
                ic.primary[i] = 1
                if rng.random() < p2 and extend(*nxt) is not None:
                    ic.primary[i] = 2
    return ic


# -- cascades ------------------------------------------------------------------


@dataclass
class CascadeOutcome:
    activated: Set
    rounds: int


def _gather(ptr: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Concatenated CSR ranges ``ptr[v]:ptr[v+1]`` for every v in ``nodes``."""
    starts = ptr[nodes]
    lens = ptr[nodes + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
    return offsets + np.arange(total)


def cascade_from_draws(graph: SocialGraph, seed_idx: np.ndarray, live: np.ndarray) -> Tuple[np.ndarray, int]:
    """Breadth-first spread over live edges; returns (active mask, rounds)."""
    active = np.zeros(graph.n, dtype=bool)
    active[seed_idx] = True
    frontier = np.unique(seed_idx)
    rounds = 0
    while frontier.size:
        e = _gather(graph.out_ptr, frontier)
        e = e[live[e]]
        heads = np.unique(graph.dst[e])
        heads = heads[~active[heads]]
        if heads.size == 0:
            break
        active[heads] = True
        frontier = heads
        rounds += 1
    return active, rounds


def simulate_ic(graph: SocialGraph, seeds: Iterable, awareness=None, rng=None) -> CascadeOutcome:
    """One Independent Cascade run from ``seeds``."""
    rng = rng if rng is not None else np.random.default_rng()
    seed_idx = graph.indices(seeds)
    live = rng.random(graph.m) < effective_probabilities(graph, awareness)
    active, rounds = cascade_from_draws(graph, seed_idx, live)
    return CascadeOutcome({graph.nodes[i] for i in np.flatnonzero(active)}, rounds)


def criticality_vector(graph: SocialGraph, criticality=None) -> np.ndarray:
    if criticality is None:
        return np.ones(graph.n)
    vec = np.zeros(graph.n)
    for u, c in dict(criticality).items():
        if u in graph.index:
            vec[graph.index[u]] = float(c)
    return vec


def _batch_size(m: int) -> int:
    return int(max(1, min(4096, 2_000_000 // max(m, 1))))


def _batch_active(graph: SocialGraph, seed_idx: np.ndarray, live: np.ndarray) -> np.ndarray:
    """Activation masks (B x n) for a batch of live-edge worlds (B x m)."""
    B = live.shape[0]
    active = np.zeros((B, graph.n), dtype=bool)
    active[:, seed_idx] = True
    frontier = active.copy()
    inc = graph.incidence()
    src = graph.src
    while frontier.any():
        fire = frontier[:, src] & live
        hit = np.asarray((inc.T @ sparse.csr_matrix(fire.T.astype(np.float32))).todense()).T > 0
        frontier = hit & ~active
        active |= frontier
    return active


def estimate_influence(
    graph: SocialGraph,
    seeds: Iterable,
    criticality=None,
    awareness=None,
    trials: int = 1000,
    seed: int = 0,
) -> Tuple[float, float]:
    """Monte Carlo mean and standard error of the criticality-weighted spread.

    Trials are processed in fixed-size chunks; chunk ``c`` draws from the
    stream ``(seed, c)``, so results do not depend on evaluation order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cr = criticality_vector(graph, criticality)
    seed_idx = graph.indices(seeds)
    p_eff = effective_probabilities(graph, awareness) if graph.m else np.zeros(0)
    B = _batch_size(graph.m)
    samples = np.empty(trials)
    done = 0
    chunk = 0
    while done < trials:
        b = min(B, trials - done)
        rng = np.random.default_rng([seed, chunk])
        live = rng.random((B, graph.m))[:b] < p_eff
        active = _batch_active(graph, seed_idx, live)
        samples[done : done + b] = active.astype(float) @ cr
        done += b
        chunk += 1
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return mean, stderr


def exact_influence_small(graph: SocialGraph, seeds: Iterable, criticality=None, awareness=None) -> float:
    """Exact criticality-weighted spread by exhausting the cascade's coin flips.

    Flips are explored in the order the cascade would test them; a flip is
    skipped once its target is active, which marginalizes every live-edge
    world that agrees on the tested edges. Limited to 22 edges.
    """
    if graph.m > MAX_EXACT_EDGES:
        raise ValueError(f"exact influence is limited to {MAX_EXACT_EDGES} edges")
    cr = criticality_vector(graph, criticality).tolist()
    p = effective_probabilities(graph, awareness).tolist() if graph.m else []
    src = graph.src.tolist()
    dst = graph.dst.tolist()
    out = [[] for _ in range(graph.n)]
    for k, s in enumerate(src):
        out[s].append(k)

    @lru_cache(maxsize=None)
    def value(active: frozenset, tested: frozenset) -> float:
        for u in sorted(active):
            for k in out[u]:
                if k in tested or dst[k] in active:
                    continue
                t = tested | {k}
                on = value(active | {dst[k]}, t) if p[k] > 0 else 0.0
                off = value(active, t) if p[k] < 1 else 0.0
                return p[k] * on + (1 - p[k]) * off
        return sum(cr[v] for v in active)

    start = frozenset(int(i) for i in graph.indices(seeds))
    return value(start, frozenset())
