"""Scenario bundles: cellular snapshots, social graph, and the device/user map.

A scenario directory holds ``scenario.json`` (metadata and file names), one
``topology_<s>.json`` per snapshot, ``social.txt`` (weighted edge list) and
``interconnection.csv``. Writing the same bundle twice yields identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .cellular import CellularTopology, Device, ModifiedFlowGraph, WirelessParams, build_modified_graph, random_topology
from .errors import ConfigError
from .osn import (
    PRESETS,
    Interconnection,
    SocialGraph,
    assign_weights,
    generate_interconnection,
    load_awareness,
    load_edge_list,
    load_weighted_edge_list,
    synthetic_social_graph,
)

SCHEMA = "scenario/v1"


@dataclass
class ScenarioBundle:
    topologies: List[CellularTopology]
    graph: SocialGraph
    interconnection: Interconnection
    awareness: object = None  # None, uniform level, or {user: W}
    seed: int = 0
    beta: float = 1.0
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.topologies:
            raise ConfigError("a scenario needs at least one topology snapshot")
        self._flow = None
        self._cache: Dict = {}
        self.validate()

    def validate(self) -> None:
        d2d = {d.id for d in self.topology.d2d_devices}
        for dev, user in self.interconnection.device_to_user.items():
            if dev not in d2d:
                raise ConfigError(f"interconnection device {dev} is not a D2D device")
            if user not in self.graph.index:
                raise ConfigError(f"interconnection user {user} is not in the social graph")

    @property
    def topology(self) -> CellularTopology:
        return self.topologies[0]

    @property
    def bandwidth(self) -> float:
        return self.topology.params.bandwidth

    @property
    def flow_graph(self) -> ModifiedFlowGraph:
        if self._flow is None:
            self._flow = build_modified_graph(self.topology, self.beta)
        return self._flow

    def snapshot_graphs(self) -> List[ModifiedFlowGraph]:
        return [self.flow_graph] + [build_modified_graph(t, self.beta) for t in self.topologies[1:]]

    def with_awareness(self, awareness) -> "ScenarioBundle":
        other = replace(self, awareness=awareness)
        other._flow = self._flow
        other._cache = self._cache
        return other


# -- generation ----------------------------------------------------------------


def derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def move_devices(topology: CellularTopology, seed: int) -> CellularTopology:
    """Same devices and roles at fresh uniform positions."""
    rng = np.random.default_rng(seed)
    w, h = topology.cell
    xy = rng.uniform((0.0, 0.0), (w, h), size=(len(topology.devices), 2))
    devs = tuple(Device(d.id, float(x), float(y), d.role) for d, (x, y) in zip(topology.devices, xy))
    return replace(topology, devices=devs)


def generate_scenario(
    preset: str = "stadium",
    seed: int = 0,
    snap_path: Optional[str] = None,
    weight_ceiling: float = 0.1,
    n_requesters: int = 50,
    n_d2d: int = 30,
    n_relays: int = 60,
    p1: Optional[float] = None,
    p2: Optional[float] = None,
    snapshots: int = 1,
    beta: float = 1.0,
    params: Optional[WirelessParams] = None,
    d2d_range: float = 15.0,
    cell=(50.0, 50.0),
) -> ScenarioBundle:
    """Random scenario; without ``snap_path`` a synthetic stand-in graph is used."""
    if preset not in PRESETS and (p1 is None or p2 is None):
        raise ConfigError(f"unknown preset {preset!r}; give p1 and p2 explicitly")
    d1, d2 = PRESETS.get(preset, (None, None))
    p1 = d1 if p1 is None else p1
    p2 = d2 if p2 is None else p2
    if snapshots < 1:
        raise ConfigError("snapshots must be >= 1")
    base = random_topology(
        n_requesters, n_d2d, n_relays, seed=derived_seed(seed, 1), cell=tuple(cell),
        d2d_range=d2d_range, params=params,
    )
    tops = [base] + [move_devices(base, derived_seed(seed, 1, s)) for s in range(1, snapshots)]
    if snap_path is not None:
        if not Path(snap_path).exists():
            raise ConfigError(f"SNAP edge list not found: {snap_path}")
        social = load_edge_list(snap_path)
        source = str(snap_path)
    else:
        social = synthetic_social_graph(seed=derived_seed(seed, 2))
        source = "synthetic"
    social = assign_weights(social, derived_seed(seed, 3), weight_ceiling)
    ic = generate_interconnection(base, social, p1, p2, derived_seed(seed, 4))
    meta = {
        "preset": preset,
        "p1": p1,
        "p2": p2,
        "weight_ceiling": weight_ceiling,
        "social_source": source,
    }
    return ScenarioBundle(tops, social, ic, None, seed, beta, meta)


# -- file I/O ------------------------------------------------------------------


def topology_to_dict(t: CellularTopology) -> Dict:
    return {
        "cell": list(t.cell),
        "bs": list(t.bs),
        "d2d_range": t.d2d_range,
        "params": asdict(t.params),
        "devices": [{"id": d.id, "x": d.x, "y": d.y, "role": d.role} for d in t.devices],
    }


def topology_from_dict(data: Dict) -> CellularTopology:
    try:
        devs = tuple(Device(int(d["id"]), float(d["x"]), float(d["y"]), d["role"]) for d in data["devices"])
        return CellularTopology(
            devs,
            tuple(data.get("bs", (0.0, 0.0))),
            float(data.get("d2d_range", 15.0)),
            WirelessParams(**data.get("params", {})),
            tuple(data.get("cell", (50.0, 50.0))),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed topology: {exc}") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_scenario(bundle: ScenarioBundle, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for s, t in enumerate(bundle.topologies):
        name = f"topology_{s}.json"
        (out / name).write_text(_dump(topology_to_dict(t)))
        names.append(name)
    bundle.graph.write(out / "social.txt")
    (out / "interconnection.csv").write_text(bundle.interconnection.to_csv())
    awareness = bundle.awareness
    if isinstance(awareness, dict):
        lines = "".join(f"{u}={w!r}\n" for u, w in sorted(awareness.items()))
        (out / "awareness.txt").write_text(lines)
        awareness = "awareness.txt"
    doc = {
        "schema": SCHEMA,
        "seed": bundle.seed,
        "beta": bundle.beta,
        "topologies": names,
        "social": "social.txt",
        "interconnection": "interconnection.csv",
        "awareness": awareness,
        "meta": bundle.meta,
    }
    (out / "scenario.json").write_text(_dump(doc))
    return out


def load_scenario(directory) -> ScenarioBundle:
    root = Path(directory)
    path = root / "scenario.json"
    if not path.exists():
        raise ConfigError(f"no scenario.json in {root}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario.json: {exc}") from None
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported scenario schema {doc.get('schema')!r}")
    tops = [topology_from_dict(json.loads((root / n).read_text())) for n in doc["topologies"]]
    graph = load_weighted_edge_list(root / doc["social"])
    ic = Interconnection.from_csv((root / doc["interconnection"]).read_text())
    awareness = doc.get("awareness")
    if isinstance(awareness, str):
        awareness = load_awareness(root / awareness)
    return ScenarioBundle(tops, graph, ic, awareness, int(doc.get("seed", 0)), float(doc.get("beta", 1.0)), doc.get("meta", {}))
