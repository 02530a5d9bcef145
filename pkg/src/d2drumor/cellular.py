"""Single-cell D2D underlay: link capacities and the split-node flow graph.

Capacities are per unit bandwidth (bits/s/Hz). The receiver noise is the
spectral density times a 1 Hz reference, so the LP can scale rates linearly
in the cellular and D2D bandwidth shares.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError

INF = math.inf

CELLULAR_REQ = "cellular"  # R^c
D2D_REQ = "d2d"  # R^d
RELAY = "relay"  # V^r
ROLES = (CELLULAR_REQ, D2D_REQ, RELAY)

# edge kinds
CELLULAR, D2D, REMOVABLE, VIRTUAL = "cellular", "d2d", "removable", "virtual"

BS = "B"
SINK = "vt"
BS_ID = -1  # transmitter id of the base station in fading lookups


@dataclass(frozen=True)
class WirelessParams:
    bandwidth: float = 1e5  # W, Hz
    bs_power: float = 100.0  # p_B, W
    device_power: float = 10.0  # p_j, W
    alpha: float = 3.0
    noise_dbm_hz: float = -174.0
    fading: str = "deterministic"  # or "rayleigh"
    fading_seed: int = 0

    @property
    def noise_power(self) -> float:
        """Noise power in watts over a 1 Hz reference bandwidth."""
        return 10.0 ** (self.noise_dbm_hz / 10.0) * 1e-3


@dataclass(frozen=True)
class Device:
    id: int
    x: float
    y: float
    role: str

    @property
    def d2d_enabled(self) -> bool:
        return self.role != CELLULAR_REQ

    @property
    def pos(self) -> Tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class CellularTopology:
    devices: Tuple[Device, ...]
    bs: Tuple[float, float] = (0.0, 0.0)
    d2d_range: float = 15.0
    params: WirelessParams = WirelessParams()
    cell: Tuple[float, float] = (50.0, 50.0)

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        self.validate()

    def validate(self) -> None:
        p = self.params
        if not (self.d2d_range > 0 and p.bandwidth > 0 and p.alpha > 0):
            raise ConfigError("d2d range, bandwidth and path-loss exponent must be positive")
        if p.fading not in ("deterministic", "rayleigh"):
            raise ConfigError(f"unknown fading mode {p.fading!r}")
        w, h = self.cell
        seen = set()
        for d in self.devices:
            if d.role not in ROLES:
                raise ConfigError(f"device {d.id}: unknown role {d.role!r}")
            if d.id in seen:
                raise ConfigError(f"duplicate device id {d.id}")
            seen.add(d.id)
            if not (0 <= d.x <= w and 0 <= d.y <= h):
                raise ConfigError(f"device {d.id} lies outside the {w}x{h} cell")
        if not (0 <= self.bs[0] <= w and 0 <= self.bs[1] <= h):
            raise ConfigError("base station lies outside the cell")

    def device(self, device_id: int) -> Device:
        for d in self.devices:
            if d.id == device_id:
                return d
        raise KeyError(device_id)

    @property
    def requesters(self) -> List[Device]:
        return [d for d in self.devices if d.role != RELAY]

    @property
    def d2d_devices(self) -> List[Device]:
        return [d for d in self.devices if d.d2d_enabled]

    def position(self, node_id: int) -> Tuple[float, float]:
        return self.bs if node_id == BS_ID else self.device(node_id).pos

    def fading_gain(self, tx: int, rx: int) -> float:
        """|m0|^2 for the (tx, rx) path; 1 unless Rayleigh fading is on."""
        if self.params.fading == "deterministic":
            return 1.0
        rng = np.random.default_rng([self.params.fading_seed, tx + 1, rx + 1])
        return float(rng.exponential(1.0))


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def cellular_snr(topology: CellularTopology, device_id: int) -> float:
    """SNR of the BS -> device downlink."""
    d = _dist(topology.bs, topology.device(device_id).pos)
    if d == 0:
        raise ValueError(f"device {device_id} coincides with the base station")
    p = topology.params
    return p.bs_power * d ** (-p.alpha) * topology.fading_gain(BS_ID, device_id) / p.noise_power


def _rx_power(topology: CellularTopology, tx: int, rx: int) -> float:
    d = _dist(topology.position(tx), topology.position(rx))
    if d == 0:
        raise ValueError(f"zero distance between transmitter {tx} and receiver {rx}")
    p = topology.params
    return p.device_power * d ** (-p.alpha) * topology.fading_gain(tx, rx)


def d2d_sinr(topology: CellularTopology, link: Tuple[int, int], concurrent=()) -> float:
    """SINR of D2D link ``(j, k)`` with every other link in ``concurrent`` active."""
    j, k = link
    others = [l for l in concurrent if tuple(l) != (j, k)]
    txs = [l[0] for l in others]
    if j in txs or len(set(txs)) != len(txs):
        raise ValueError("concurrent links must have distinct transmitters")
    signal = _rx_power(topology, j, k)
    interference = sum(_rx_power(topology, jp, k) for jp, _ in others)
    return signal / (interference + topology.params.noise_power)


def capacity_from_sinr(gamma: float) -> float:
    return math.log2(1.0 + gamma)


def unit_capacity(topology: CellularTopology, link, concurrent=()) -> float:
    """Per-Hz capacity of a cellular link ``(BS, i)`` or a D2D link ``(j, k)``."""
    tx, rx = link
    if tx in (BS, BS_ID):
        return capacity_from_sinr(cellular_snr(topology, rx))
    return capacity_from_sinr(d2d_sinr(topology, (tx, rx), concurrent))


@dataclass(frozen=True)
class FlowEdge:
    id: int
    tail: str
    head: str
    kind: str
    capacity: float = INF
    interference: FrozenSet[int] = frozenset()
    tx: Optional[int] = None  # transmitting device (BS_ID for cellular)
    rx: Optional[int] = None
    device: Optional[int] = None  # owner of a removable edge


def interference_set(edges: Sequence[FlowEdge], edge: FlowEdge, topology, beta: float, d0: float):
    """Ids of same-band edges whose transmitter lies within ``beta * d0`` of ``edge``'s."""
    origin = topology.position(edge.tx)
    reach = beta * d0
    return frozenset(
        e.id
        for e in edges
        if e.kind == edge.kind and _dist(origin, topology.position(e.tx)) <= reach
    )


class _D2DGeometry:
    """Vectorized received-power table for the greedy concurrent-set search."""

    def __init__(self, topology: CellularTopology, links: Sequence[Tuple[int, int]], beta: float):
        ids = sorted({d.id for d in topology.d2d_devices})
        self.col = {i: n for n, i in enumerate(ids)}
        pos = np.array([topology.device(i).pos for i in ids]).reshape(-1, 2)
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        p = topology.params
        with np.errstate(divide="ignore"):
            power = p.device_power * dist ** (-p.alpha)
        if p.fading != "deterministic":
            gains = np.array([[topology.fading_gain(a, b) for b in ids] for a in ids])
            power = power * gains.reshape(power.shape)
        self.power = power  # power[tx, rx]
        self.noise = p.noise_power
        self.tx = np.array([self.col[j] for j, _ in links], dtype=int)
        self.rx = np.array([self.col[k] for _, k in links], dtype=int)
        self.conflict = dist <= beta * topology.d2d_range  # transmitter-distance test

    def concurrent(self, e: int) -> List[int]:
        tx, rx, P = self.tx, self.rx, self.power
        members = [e]
        interf = np.array([0.0])
        eligible = ~self.conflict[tx[e]][tx]
        while True:
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                return members
            mtx, mrx = tx[members], rx[members]
            signal = P[mtx, mrx]
            before = np.log2(1.0 + signal / (interf + self.noise))
            extra = P[np.ix_(tx[cand], mrx)]
            after = np.log2(1.0 + signal[None, :] / (interf[None, :] + extra + self.noise))
            drop = (before[None, :] - after).sum(axis=1)
            pick = int(cand[int(np.argmax(drop))])
            interf = np.append(interf + P[tx[pick], mrx], P[mtx, rx[pick]].sum())
            members.append(pick)
            eligible &= ~self.conflict[tx[pick]][tx]

    def capacity(self, e: int, members: Sequence[int]) -> float:
        others = [m for m in members if m != e]
        interference = self.power[self.tx[others], self.rx[e]].sum() if others else 0.0
        return capacity_from_sinr(self.power[self.tx[e], self.rx[e]] / (interference + self.noise))


def concurrent_set(topology: CellularTopology, links: Sequence[Tuple[int, int]], e: int, beta: float = 1.0):
    """Greedy L(e) over ``links`` (indices into ``links``), starting from ``{e}``.

    Each step adds the link, among those outside every member's interference
    set, that most reduces the summed rate of the current members; ties go to
    the lowest index.
    """
    return set(_D2DGeometry(topology, links, beta).concurrent(e))


def d2d_links(topology: CellularTopology) -> List[Tuple[int, int]]:
    """Directed D2D links, sorted by (tx, rx).

    Both endpoints must be D2D-enabled and within range; requesters never
    transmit to relays.
    """
    devs = topology.d2d_devices
    out = []
    for a in devs:
        for b in devs:
            if a.id == b.id or (a.role == D2D_REQ and b.role == RELAY):
                continue
            if _dist(a.pos, b.pos) <= topology.d2d_range:
                out.append((a.id, b.id))
    return sorted(out)


def node_in(device: Device) -> str:
    return f"{device.id}-" if device.d2d_enabled else str(device.id)


def node_out(device: Device) -> str:
    return f"{device.id}+" if device.d2d_enabled else str(device.id)


@dataclass(frozen=True)
class ModifiedFlowGraph:
    nodes: Tuple[str, ...]
    edges: Tuple[FlowEdge, ...]
    removable: Dict[int, int] = field(compare=False)  # device id -> edge id
    disabled: FrozenSet[int] = frozenset()
    topology: Optional[CellularTopology] = field(default=None, compare=False, repr=False)
    beta: float = 1.0

    def of_kind(self, kind: str) -> List[FlowEdge]:
        return [e for e in self.edges if e.kind == kind]

    @property
    def removable_edges(self) -> List[FlowEdge]:
        return self.of_kind(REMOVABLE)

    @property
    def disabled_edges(self) -> FrozenSet[int]:
        return frozenset(self.removable[d] for d in self.disabled)

    def edge(self, edge_id: int) -> FlowEdge:
        e = self.edges[edge_id]
        assert e.id == edge_id
        return e

    def dump(self) -> str:
        """Plain-text edge list: ``id tail head kind capacity`` per line."""
        lines = ["# id tail head kind capacity"]
        for e in self.edges:
            cap = "inf" if e.capacity == INF else f"{e.capacity:.12g}"
            off = " disabled" if e.kind == REMOVABLE and e.device in self.disabled else ""
            lines.append(f"{e.id} {e.tail} {e.head} {e.kind} {cap}{off}")
        return "\n".join(lines) + "\n"


def build_modified_graph(topology: CellularTopology, beta: float = 1.0) -> ModifiedFlowGraph:
    """Split-node flow graph with unit-bandwidth capacities and interference sets."""
    if beta <= 0:
        raise ConfigError("beta must be positive")
    devices = sorted(topology.devices, key=lambda d: d.id)
    by_id = {d.id: d for d in devices}
    nodes: List[str] = [BS]
    for d in devices:
        nodes.extend([f"{d.id}-", f"{d.id}+"] if d.d2d_enabled else [str(d.id)])
    nodes.append(SINK)

    edges: List[FlowEdge] = []
    cell_ids = []
    for d in devices:
        head = f"{d.id}-" if d.role == RELAY else (f"{d.id}+" if d.role == D2D_REQ else str(d.id))
        cap = unit_capacity(topology, (BS, d.id))
        cell_ids.append(len(edges))
        edges.append(FlowEdge(len(edges), BS, head, CELLULAR, cap, tx=BS_ID, rx=d.id))

    links = d2d_links(topology)
    d2d_caps: List[float] = []
    if links:
        geo = _D2DGeometry(topology, links, beta)
        for e in range(len(links)):
            d2d_caps.append(geo.capacity(e, geo.concurrent(e)))
    d2d_ids = []
    for (j, k), cap in zip(links, d2d_caps):
        d2d_ids.append(len(edges))
        edges.append(FlowEdge(len(edges), f"{j}+", f"{k}-", D2D, cap, tx=j, rx=k))

    removable = {}
    for d in devices:
        if d.d2d_enabled:
            removable[d.id] = len(edges)
            edges.append(FlowEdge(len(edges), f"{d.id}-", f"{d.id}+", REMOVABLE, device=d.id))
    edges.append(FlowEdge(len(edges), SINK, BS, VIRTUAL))
    for d in devices:
        if d.role != RELAY:
            edges.append(FlowEdge(len(edges), node_out(d), SINK, VIRTUAL))

    # cellular links share the BS transmitter, so they form one interference set
    cell_set = frozenset(cell_ids)
    tx_of = {i: edges[i].tx for i in d2d_ids}
    reach = beta * topology.d2d_range
    for i in cell_ids:
        edges[i] = replace(edges[i], interference=cell_set)
    for i in d2d_ids:
        origin = by_id[tx_of[i]].pos
        members = frozenset(
            j for j in d2d_ids if _dist(origin, by_id[tx_of[j]].pos) <= reach
        )
        edges[i] = replace(edges[i], interference=members)

    graph = ModifiedFlowGraph(tuple(nodes), tuple(edges), removable, frozenset(), topology, beta)
    _check_reachable(graph)
    return graph


def _check_reachable(graph: ModifiedFlowGraph) -> None:
    adj: Dict[str, List[str]] = {}
    for e in graph.edges:
        if e.kind != VIRTUAL and e.capacity > 0:
            adj.setdefault(e.tail, []).append(e.head)
    seen = {BS}
    queue = deque([BS])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    for e in graph.edges:
        if e.kind == VIRTUAL and e.head == SINK and e.tail not in seen:
            raise ConfigError(f"requester node {e.tail} is unreachable from the base station")


def apply_disable(graph: ModifiedFlowGraph, devices: Iterable[int]) -> ModifiedFlowGraph:
    """Graph view with the removable edge of every listed device deleted."""
    devices = frozenset(devices)
    unknown = devices - graph.removable.keys()
    if unknown:
        raise KeyError(f"not D2D-enabled devices: {sorted(unknown)}")
    return replace(graph, disabled=graph.disabled | devices)


def random_topology(
    n_requesters: int = 50,
    n_d2d: int = 30,
    n_relays: int = 60,
    seed: int = 0,
    cell: Tuple[float, float] = (50.0, 50.0),
    bs: Tuple[float, float] = (0.0, 0.0),
    d2d_range: float = 15.0,
    params: Optional[WirelessParams] = None,
) -> CellularTopology:
    """Uniformly placed requesters (the first ``n_d2d`` in D2D mode) and relays."""
    if n_d2d > n_requesters:
        raise ConfigError("more D2D requesters than requesters")
    rng = np.random.default_rng(seed)
    total = n_requesters + n_relays
    xy = rng.uniform((0.0, 0.0), cell, size=(total, 2))
    d2d_pick = set(rng.choice(n_requesters, size=n_d2d, replace=False).tolist()) if n_d2d else set()
    devices = []
    for i in range(total):
        if i < n_requesters:
            role = D2D_REQ if i in d2d_pick else CELLULAR_REQ
        else:
            role = RELAY
        devices.append(Device(i, float(xy[i, 0]), float(xy[i, 1]), role))
    return CellularTopology(tuple(devices), bs, d2d_range, params or WirelessParams(), cell)


# Geometry for oracle-sized instances: requesters sit far from the BS with
# relays in between, and the strong device power and raised noise floor make
# D2D relaying competitive with direct cellular delivery.
SMALL_PARAMS = WirelessParams(bandwidth=1.0, device_power=100.0, noise_dbm_hz=20.0)


def small_random_topology(seed: int, max_d2d: int = 8) -> CellularTopology:
    """Random instance with at most ``max_d2d`` D2D-enabled devices."""
    rng = np.random.default_rng(seed)
    n_req = int(rng.integers(2, 5))
    n_d2d = int(rng.integers(1, n_req + 1))
    n_rel = int(rng.integers(2, max(3, max_d2d + 1 - n_d2d)))
    d2d = set(rng.choice(n_req, n_d2d, replace=False).tolist())
    devices = []
    for i in range(n_req):
        x, y = rng.uniform(20.0, 40.0, size=2)
        devices.append(Device(i, float(x), float(y), D2D_REQ if i in d2d else CELLULAR_REQ))
    for j in range(n_rel):
        x, y = rng.uniform(3.0, 30.0, size=2)
        devices.append(Device(n_req + j, float(x), float(y), RELAY))
    return CellularTopology(tuple(devices), (0.0, 0.0), 25.0, SMALL_PARAMS, (40.0, 40.0))
