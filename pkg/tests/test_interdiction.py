import math

import numpy as np
import pytest

from d2drumor.cellular import (
    BS,
    CELLULAR_REQ,
    D2D_REQ,
    RELAY,
    CellularTopology,
    Device,
    WirelessParams,
    apply_disable,
    build_modified_graph,
    small_random_topology,
    unit_capacity,
)
from d2drumor.errors import OracleCapError
from d2drumor.interdiction import (
    ThroughputProblem,
    brute_force_interdiction,
    build_dual_milp,
    build_inner_lp,
    default_budgets,
    freeze_removals,
    merge_criticality,
    nce,
    solve_interdiction,
    solve_throughput,
    throughput,
)
from d2drumor.lp import solve_lp
from builders import vertex_optimum

SMALL = WirelessParams(bandwidth=1.0, device_power=100.0, noise_dbm_hz=20.0)


def pure_cellular(t):
    devs = tuple(Device(d.id, d.x, d.y, CELLULAR_REQ) for d in t.requesters)
    return throughput(build_modified_graph(CellularTopology(devs, t.bs, t.d2d_range, t.params, t.cell)), t.params.bandwidth)


def test_single_cellular_requester_by_hand():
    t = CellularTopology((Device(0, 30, 40, CELLULAR_REQ),), (0, 0), 15, WirelessParams(bandwidth=1e5), (50, 50))
    c = unit_capacity(t, (BS, 0))
    assert throughput(build_modified_graph(t), 1e5) == pytest.approx(c * 1e5, rel=1e-9)


def test_no_requesters_no_throughput():
    t = CellularTopology((Device(0, 10, 10, RELAY),), (0, 0), 15, SMALL, (40, 40))
    assert throughput(build_modified_graph(t), 1.0) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_full_removal_equals_pure_cellular(seed):
    t = small_random_topology(seed)
    g = build_modified_graph(t)
    all_edges = [e.id for e in g.removable_edges]
    assert throughput(g, 1.0, all_edges) == pytest.approx(pure_cellular(t), rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_scaling_bandwidth_scales_throughput(seed):
    g = build_modified_graph(small_random_topology(seed))
    base = throughput(g, 1.0)
    for s in (0.5, 2.0, 10.0):
        assert throughput(g, s) == pytest.approx(s * base, rel=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_removal_never_increases_throughput(seed):
    g = build_modified_graph(small_random_topology(seed))
    rng = np.random.default_rng(seed)
    ids = [e.id for e in g.removable_edges]
    prev = throughput(g, 1.0)
    removed = []
    for e in rng.permutation(ids):
        removed.append(int(e))
        now = throughput(g, 1.0, removed)
        assert now <= prev + 1e-9
        prev = now


def test_five_node_instance_matches_vertex_enumeration():
    t = CellularTopology(
        (Device(0, 35, 35, D2D_REQ), Device(1, 15, 15, RELAY)), (0, 0), 30, SMALL, (40, 40)
    )
    lp = build_inner_lp(ThroughputProblem(build_modified_graph(t), 1.0))
    # vertex enumeration needs finite boxes; flows are bounded by W * max capacity
    cap = 10 * max(unit_capacity(t, (BS, 0)), unit_capacity(t, (BS, 1)))
    for v in lp.variables:
        v.upper = min(v.upper, cap)
    assert solve_lp(lp).objective == pytest.approx(vertex_optimum(lp), abs=1e-9)


def test_inner_lp_highs_agrees():
    for seed in range(5):
        p = ThroughputProblem(build_modified_graph(small_random_topology(seed)), 1.0)
        a, _ = solve_throughput(p)
        b, _ = solve_throughput(p, backend="highs")
        assert a == pytest.approx(b, rel=1e-7)


# -- the single-level MILP -----------------------------------------------------


@pytest.mark.parametrize("seed", range(4))
def test_zero_budget_is_baseline(seed):
    g = build_modified_graph(small_random_topology(seed))
    res = solve_interdiction(g, 1.0, 0)
    assert res.removals == frozenset()
    assert res.throughput == pytest.approx(throughput(g, 1.0), abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_full_budget_is_pure_cellular(seed):
    t = small_random_topology(seed)
    g = build_modified_graph(t)
    res = solve_interdiction(g, 1.0, len(g.removable_edges))
    assert res.throughput == pytest.approx(pure_cellular(t), abs=1e-9)


@pytest.mark.parametrize("seed", range(12))
def test_milp_matches_brute_force(seed):
    g = build_modified_graph(small_random_topology(seed))
    u = 1 + seed % 3
    milp = solve_interdiction(g, 1.0, u)
    brute = brute_force_interdiction(g, 1.0, u)
    assert milp.throughput == pytest.approx(brute.throughput, abs=1e-9)
    assert len(milp.removals) <= u
    # the MILP's removal set really achieves its value
    assert throughput(g, 1.0, milp.removals) == pytest.approx(milp.throughput, abs=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_linearization_holds_at_optimum(seed):
    g = build_modified_graph(small_random_topology(seed))
    vals = solve_interdiction(g, 1.0, 2).certificate
    for e in g.removable_edges:
        r, d, z = vals[f"r[{e.id}]"], vals[f"delta[{e.id}]"], vals[f"z[{e.id}]"]
        assert abs(d - r * z) <= 1e-6
        assert -1e-9 <= r <= 1 + 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_frozen_dual_matches_inner_lp(seed):
    g = build_modified_graph(small_random_topology(seed))
    rng = np.random.default_rng(seed)
    ids = [e.id for e in g.removable_edges]
    chosen = [i for i in ids if rng.random() < 0.4]
    dual = solve_lp(freeze_removals(build_dual_milp(g, 1.0, len(ids)), chosen))
    assert dual.objective == pytest.approx(throughput(g, 1.0, chosen), abs=1e-9)


def test_budget_monotonicity():
    g = build_modified_graph(small_random_topology(5))
    values = [solve_interdiction(g, 1.0, u).throughput for u in range(len(g.removable_edges) + 1)]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_disabled_devices_count_as_removed():
    g = build_modified_graph(small_random_topology(6))
    dev = next(iter(g.removable))
    view = apply_disable(g, [dev])
    assert throughput(view, 1.0) == pytest.approx(throughput(g, 1.0, [g.removable[dev]]), abs=1e-12)
    res = solve_interdiction(view, 1.0, 1)
    assert dev not in res.devices


def test_parallel_relays_tie_break():
    # two identical relays mirrored about the requester's diagonal
    devs = (
        Device(0, 35.0, 35.0, D2D_REQ),
        Device(1, 15.0, 25.0, RELAY),
        Device(2, 25.0, 15.0, RELAY),
    )
    t = CellularTopology(devs, (0, 0), 30.0, SMALL, (40, 40))
    g = build_modified_graph(t)
    T0 = throughput(g, 1.0)
    r1, r2 = g.removable[1], g.removable[2]
    t1, t2 = throughput(g, 1.0, [r1]), throughput(g, 1.0, [r2])
    assert t1 == pytest.approx(t2, rel=1e-9)
    best = brute_force_interdiction(g, 1.0, 1)
    # removing the requester's own splitter may cost more; if a relay wins, the smaller id is reported
    if best.devices & {1, 2}:
        assert best.devices == {1}
    assert best.throughput <= min(t1, T0) + 1e-12


def test_oracle_cap():
    g = build_modified_graph(small_random_topology(0))
    with pytest.raises(OracleCapError):
        brute_force_interdiction(g, 1.0, 3, cap=2)


# -- NCE -----------------------------------------------------------------------------


def test_zero_budget_gives_zero_criticality():
    g = build_modified_graph(small_random_topology(1))
    cr = nce(g, 1.0, [0])
    assert set(cr.values.values()) == {0.0}


def test_full_budget_criticality_is_zero_or_one():
    g = build_modified_graph(small_random_topology(2))
    cr = nce(g, 1.0, [len(g.removable_edges)])
    assert set(cr.values.values()) <= {0.0, 1.0}


def test_nce_matches_brute_force_accumulation():
    t = CellularTopology(
        (Device(0, 35.0, 35.0, D2D_REQ), Device(1, 15.0, 22.0, RELAY), Device(2, 28.0, 12.0, RELAY)),
        (0, 0), 30.0, SMALL, (40, 40),
    )
    g = build_modified_graph(t)
    ours = nce(g, 1.0, [1, 2], solver=brute_force_interdiction)
    expected = {d: 0.0 for d in g.removable}
    for u in (1, 2):
        for d in brute_force_interdiction(g, 1.0, u).devices:
            expected[d] += 1
    assert ours.values == expected
    milp = nce(g, 1.0, [1, 2])
    assert sum(milp.values.values()) == sum(expected.values())


@pytest.mark.parametrize("seed", range(4))
def test_nce_range(seed):
    g = build_modified_graph(small_random_topology(seed))
    budgets = [0, 1, 2, 3]
    cr = nce(g, 1.0, budgets)
    assert all(0 <= v <= len(budgets) for v in cr.values.values())
    assert "device_id,cr,budgets_hit" in cr.to_csv()


def test_nce_rejects_oversized_budget():
    g = build_modified_graph(small_random_topology(0))
    with pytest.raises(ValueError):
        nce(g, 1.0, [len(g.removable_edges) + 1])


def test_default_budgets():
    assert default_budgets(10, 90) == sorted(set(default_budgets(10, 90)))
    assert len(default_budgets(10, 90)) == 20
    assert default_budgets(10, 90)[0] == 10 and default_budgets(10, 90)[-1] == 90
    assert default_budgets(5, 3) == []


def test_merge_sums_snapshots():
    g = build_modified_graph(small_random_topology(3))
    a = nce(g, 1.0, [1])
    merged = merge_criticality([a, a])
    assert all(merged.values[d] == 2 * a.values[d] for d in a.values)
    assert math.isclose(sum(merged.values.values()), 2 * sum(a.values.values()))


def test_frozen_dual_with_noisy_pivots():
    # this instance used to drive the simplex onto a round-off pivot
    g = build_modified_graph(small_random_topology(50_016))
    mip = build_dual_milp(g, 1.0, 2)
    for chosen in ([44], [47], [48], [50]):
        sol = solve_lp(freeze_removals(mip, chosen))
        assert sol.optimal
        assert sol.objective == pytest.approx(throughput(g, 1.0, chosen), abs=1e-9)
    assert solve_interdiction(g, 1.0, 2).throughput == pytest.approx(brute_force_interdiction(g, 1.0, 2).throughput, abs=1e-9)


@pytest.mark.slow
def test_full_scale_throughput_matches_highs():
    # the stadium flow LP is highly degenerate with coefficients spanning ~1e9
    from d2drumor.scenario import generate_scenario

    b = generate_scenario("stadium", 0)
    devs = sorted(b.interconnection.device_to_user)
    for off in ([], devs[::3], devs[1::2]):
        g = apply_disable(b.flow_graph, off)
        ours = throughput(g, b.bandwidth)
        assert ours == pytest.approx(throughput(g, b.bandwidth, backend="highs"), rel=1e-9)
