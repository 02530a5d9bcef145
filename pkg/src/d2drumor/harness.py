"""End-to-end rumor-critical-node pipeline and the experiment metrics.

Every trial draws from its own stream ``(seed, trial)``: one cascade, then
one throughput LP on the cellular network with the influenced users'
devices switched out of D2D mode. Sharing the stream across methods,
awareness levels or protection budgets couples the comparisons.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .cellular import apply_disable
from .errors import DegenerateScenarioError
from .interdiction import CriticalityMap, default_budgets, merge_criticality, nce, throughput
from .osn import d2d_neighbors, simulate_ic
from .scenario import ScenarioBundle
from .targeted_im import SeedResult, targeted_im

ROWS_SCHEMA = "experiment/v1"
METHODS = ("rcf", "degree", "random")
DEFAULT_TRIALS = 50
BANDWIDTH_RTOL = 1e-6


def _throughput(bundle: ScenarioBundle, devices: Iterable[int], bandwidth=None, backend="highs") -> float:
    W = bundle.bandwidth if bandwidth is None else bandwidth
    key = ("T", W, frozenset(devices), backend)
    if key not in bundle._cache:
        g = apply_disable(bundle.flow_graph, key[2]) if key[2] else bundle.flow_graph
        bundle._cache[key] = throughput(g, W, (), backend)
    return bundle._cache[key]


def baseline_throughput(bundle: ScenarioBundle, backend="highs") -> float:
    return _throughput(bundle, (), backend=backend)


# -- criticality -----------------------------------------------------------------


def device_criticality(bundle: ScenarioBundle, budgets: Optional[Sequence[int]] = None, k: int = 10, backend="highs") -> CriticalityMap:
    """NCE criticality summed over every snapshot."""
    n_d2d = len(bundle.topology.d2d_devices)
    budgets = tuple(default_budgets(k, n_d2d) if budgets is None else budgets)
    key = ("cr", budgets, backend)
    if key not in bundle._cache:
        maps = [nce(g, bundle.bandwidth, budgets, backend) for g in bundle.snapshot_graphs()]
        bundle._cache[key] = merge_criticality(maps)
    return bundle._cache[key]


def project(bundle: ScenarioBundle, device_values: Dict[int, float]) -> Dict:
    """Device scores copied onto their linked users; unlinked users get 0."""
    return {u: float(device_values.get(d, 0.0)) for d, u in bundle.interconnection.device_to_user.items()}


def _seed_users(bundle, user_cr, k, epsilon, delta, seed) -> SeedResult:
    if sum(user_cr.values()) <= 0:
        raise DegenerateScenarioError("projected criticality is zero for every user")
    return targeted_im(bundle.graph, user_cr, bundle.awareness, k, epsilon, delta, seed)


def rcf(bundle: ScenarioBundle, k: int, budgets=None, epsilon: float = 0.1, delta: float = 0.1, seed: int = 0, backend="highs") -> SeedResult:
    """Seeds most harmful to D2D throughput: NCE, projection, targeted IM."""
    cr = device_criticality(bundle, budgets, k, backend)
    return _seed_users(bundle, project(bundle, cr.values), k, epsilon, delta, seed)


def baseline_scores(bundle: ScenarioBundle, kind: str, seed: int = 0, social_degree: bool = False) -> Dict[int, float]:
    """Per-device stand-in criticality for the degree and random baselines."""
    devices = sorted(bundle.interconnection.device_to_user)
    if kind == "degree":
        if social_degree:
            ic = bundle.interconnection.device_to_user
            return {d: float(bundle.graph.out_degree(ic[d])) for d in devices}
        adj = d2d_neighbors(bundle.topology)
        return {d: float(len(adj.get(d, ()))) for d in devices}
    if kind == "random":
        rng = np.random.default_rng([seed, 0x5EED])
        return dict(zip(devices, rng.random(len(devices)).tolist()))
    raise ValueError(f"unknown baseline {kind!r}")


def baselines(bundle: ScenarioBundle, k: int, kind: str, epsilon: float = 0.1, delta: float = 0.1, seed: int = 0, social_degree: bool = False) -> SeedResult:
    scores = baseline_scores(bundle, kind, seed, social_degree)
    return _seed_users(bundle, project(bundle, scores), k, epsilon, delta, seed)


def select_seeds(bundle, method: str, k: int, epsilon=0.1, delta=0.1, seed=0, budgets=None, backend="highs") -> SeedResult:
    if method == "rcf":
        return rcf(bundle, k, budgets, epsilon, delta, seed, backend)
    return baselines(bundle, k, method, epsilon, delta, seed)


# -- post-rumor evaluation -------------------------------------------------------


@dataclass
class TrialOutcome:
    trial: int
    throughput: float
    influenced: int
    disabled: frozenset


@dataclass
class PostRumor:
    baseline: float
    trials: List[TrialOutcome]

    @property
    def values(self) -> np.ndarray:
        return np.array([t.throughput for t in self.trials])

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def stderr(self) -> float:
        v = self.values
        return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def cascade_devices(bundle: ScenarioBundle, seeds, trial: int, seed: int, awareness=None):
    """Activated users and their devices for one trial's stream."""
    rng = np.random.default_rng([seed, trial])
    out = simulate_ic(bundle.graph, seeds, awareness, rng)
    return out.activated, frozenset(bundle.interconnection.devices_of(out.activated))


def evaluate_post_rumor(
    bundle: ScenarioBundle,
    seeds,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    awareness="bundle",
    protected: Iterable[int] = (),
    backend="highs",
) -> PostRumor:
    """Throughput after the rumor disables influenced users' D2D devices.

    ``protected`` devices stay in D2D mode whatever their owners believe.
    """
    aw = bundle.awareness if awareness == "bundle" else awareness
    keep = frozenset(protected)
    T0 = baseline_throughput(bundle, backend)
    outcomes = []
    for t in range(trials):
        activated, devs = cascade_devices(bundle, seeds, t, seed, aw)
        devs = devs - keep
        outcomes.append(TrialOutcome(t, _throughput(bundle, devs, backend=backend), len(activated), devs))
    return PostRumor(T0, outcomes)


def reduction_percent(T0: float, Tk: float) -> float:
    """Q_k = 100 (T0 - Tk) / T0, clipped to [0, 100] against LP round-off."""
    if T0 <= 0:
        return 0.0
    return float(min(100.0, max(0.0, 100.0 * (T0 - Tk) / T0)))


@dataclass
class BandwidthCheck:
    extra: float
    resolved: float
    ok: bool


def extra_bandwidth(bundle: ScenarioBundle, T0: float, Tk: float, disabled: Iterable[int] = (), backend="highs") -> BandwidthCheck:
    """Extra spectrum restoring ``T0`` after the rumor, ``W (T0/Tk - 1)``.

    The closed form relies on throughput being linear in the bandwidth; it
    is cross-checked by re-solving the post-rumor LP at the enlarged band.
    """
    W = bundle.bandwidth
    if Tk <= 0:
        return BandwidthCheck(math.inf, 0.0, False)
    W2 = W * T0 / Tk
    resolved = _throughput(bundle, disabled, W2, backend)
    ok = abs(resolved - T0) <= BANDWIDTH_RTOL * max(abs(T0), 1e-300)
    return BandwidthCheck(W2 - W, resolved, ok)


@dataclass
class RetentionResult:
    budget: int
    protected: List[int]
    gain: float
    protected_mean: float
    unprotected_mean: float
    trial_gains: List[float]


def retention(bundle: ScenarioBundle, seeds, budget: int, trials: int = DEFAULT_TRIALS, seed: int = 0, criticality: Optional[CriticalityMap] = None, backend="highs") -> RetentionResult:
    """Throughput recovered by keeping the ``budget`` most critical devices in D2D.

    Protection acts on the cellular side only: protected users still
    spread the rumor. The gain compares mean throughput with and without
    protection over the same coupled trials.
    """
    if budget < 0:
        raise ValueError("retention budget must be >= 0")
    cr = criticality or device_criticality(bundle, backend=backend)
    top = cr.ranked()[:budget]
    plain = evaluate_post_rumor(bundle, seeds, trials, seed, backend=backend)
    guarded = evaluate_post_rumor(bundle, seeds, trials, seed, protected=top, backend=backend)
    gains = [
        (g.throughput - p.throughput) / p.throughput if p.throughput > 0 else 0.0
        for g, p in zip(guarded.trials, plain.trials)
    ]
    u = plain.mean
    gain = (guarded.mean - u) / u if u > 0 else 0.0
    return RetentionResult(budget, top, gain, guarded.mean, u, gains)


# -- experiment rows ----------------------------------------------------------------


@dataclass
class ExperimentRow:
    method: str
    k: int
    trial: int
    T0: float
    Tk: float
    Qk: float
    influenced: int
    disabled: int
    extra_bandwidth: float = float("nan")
    crosscheck: str = ""
    retention_l: Optional[int] = None
    ua_level: Optional[float] = None
    gain: Optional[float] = None


COLUMNS = [f.name for f in fields(ExperimentRow)]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[ExperimentRow], schema: str = ROWS_SCHEMA) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema} columns={','.join(COLUMNS)}\n")
    buf.write(",".join(COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(getattr(r, c)) for c in COLUMNS) + "\n")
    return buf.getvalue()


def read_rows(text: str) -> List[Dict[str, str]]:
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, l.split(","))) for l in lines[1:]]


def _rows_from(method, k, post: PostRumor, bundle=None, bandwidth=False, **extra) -> List[ExperimentRow]:
    rows = []
    for t in post.trials:
        row = ExperimentRow(
            method, k, t.trial, post.baseline, t.throughput,
            reduction_percent(post.baseline, t.throughput), t.influenced, len(t.disabled), **extra,
        )
        if bandwidth:
            chk = extra_bandwidth(bundle, post.baseline, t.throughput, t.disabled)
            row.extra_bandwidth = chk.extra
            row.crosscheck = "pass" if chk.ok else "FAIL"
        rows.append(row)
    return rows


def k_sweep(
    bundle: ScenarioBundle,
    ks: Sequence[int],
    methods: Sequence[str] = METHODS,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    epsilon: float = 0.1,
    delta: float = 0.1,
    budgets=None,
    bandwidth: bool = False,
) -> List[ExperimentRow]:
    """Post-rumor rows for each method and seed-set size, trials coupled across both."""
    rows = []
    for k in ks:
        for m in methods:
            res = select_seeds(bundle, m, k, epsilon, delta, seed, budgets)
            post = evaluate_post_rumor(bundle, res.seeds, trials, seed)
            rows += _rows_from(m, k, post, bundle, bandwidth)
    return rows


def ua_sweep(bundle: ScenarioBundle, seeds, levels: Sequence[float], trials: int = DEFAULT_TRIALS, seed: int = 0, method: str = "rcf", k: Optional[int] = None) -> List[ExperimentRow]:
    """Uniform awareness at each level over the same coupled trials."""
    rows = []
    k = len(seeds) if k is None else k
    for level in levels:
        if not 0.0 <= level <= 1.0:
            raise ValueError("awareness levels must lie in [0, 1]")
        post = evaluate_post_rumor(bundle, seeds, trials, seed, awareness=float(level))
        rows += _rows_from(method, k, post, ua_level=float(level))
    return rows


def retention_sweep(bundle: ScenarioBundle, seeds, budgets_l: Sequence[int], trials: int = DEFAULT_TRIALS, seed: int = 0, k: Optional[int] = None, criticality=None) -> List[ExperimentRow]:
    rows = []
    k = len(seeds) if k is None else k
    for l in budgets_l:
        res = retention(bundle, seeds, l, trials, seed, criticality)
        post = evaluate_post_rumor(bundle, seeds, trials, seed, protected=res.protected)
        rows += _rows_from("rcf", k, post, retention_l=int(l), gain=res.gain)
    return rows


def summarize(rows: Sequence[ExperimentRow]) -> str:
    """Mean Q_k with standard error per (method, k, level, l)."""
    groups: Dict = {}
    for r in rows:
        groups.setdefault((r.method, r.k, r.ua_level, r.retention_l), []).append(r.Qk)
    out = ["method  k  ua    l   trials  mean_Q   stderr"]
    for (m, k, ua, l), qs in sorted(groups.items(), key=lambda kv: tuple(str(x) for x in kv[0])):
        q = np.array(qs)
        se = q.std(ddof=1) / math.sqrt(q.size) if q.size > 1 else 0.0
        ua_s = "-" if ua is None else f"{ua:.2f}"
        l_s = "-" if l is None else str(l)
        out.append(f"{m:7s} {k:2d} {ua_s:5s} {l_s:3s} {q.size:6d}  {q.mean():7.3f}  {se:7.3f}")
    return "\n".join(out)
