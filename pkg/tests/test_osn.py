import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from builders import chain, random_social
from d2drumor.cellular import RELAY, CellularTopology, Device
from d2drumor.errors import ConfigError, ParseError
from d2drumor.osn import (
    MALL,
    STADIUM,
    Interconnection,
    SocialGraph,
    assign_weights,
    awareness_vector,
    cascade_from_draws,
    effective_probabilities,
    estimate_influence,
    exact_influence_small,
    generate_interconnection,
    load_awareness,
    load_edge_list,
    load_weighted_edge_list,
    simulate_ic,
    synthetic_social_graph,
)


def write(tmp_path, text, name="g.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- loading and weights -------------------------------------------------------


def test_single_pair_gives_two_directed_edges(tmp_path):
    g = load_edge_list(write(tmp_path, "0 1\n"))
    assert g.n == 2
    assert sorted((u, v) for u, v, _ in g.edges()) == [(0, 1), (1, 0)]
    assert not g.weighted


def test_empty_file_gives_empty_graph(tmp_path):
    g = load_edge_list(write(tmp_path, ""))
    assert g.n == 0 and g.m == 0


def test_comments_duplicates_and_self_pairs(tmp_path):
    g = load_edge_list(write(tmp_path, "# header\n0 1\n1 0\n\n0 1\n2 2\n1 2\n"))
    assert g.n == 3
    assert g.m == 4


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ParseError) as info:
        load_edge_list(write(tmp_path, "0 1\n1 2\n3\n"))
    assert info.value.line == 3


def test_weighted_round_trip(tmp_path):
    g = assign_weights(random_social(np.random.default_rng(4)), seed=1)
    path = tmp_path / "w.txt"
    g.write(path)
    h = load_weighted_edge_list(path)
    assert list(h.edges()) == list(g.edges())


def test_zero_ceiling_never_propagates():
    g = assign_weights(synthetic_social_graph(200, 1500, seed=1), seed=3, ceiling=0.0)
    assert np.all(g.prob == 0.0)
    out = simulate_ic(g, [0, 1], rng=np.random.default_rng(0))
    assert out.activated == {0, 1}


def test_weights_deterministic_in_seed():
    g = synthetic_social_graph(300, 2000, seed=2)
    a, b = assign_weights(g, seed=9), assign_weights(g, seed=9)
    assert np.array_equal(a.prob, b.prob)
    assert not np.array_equal(a.prob, assign_weights(g, seed=10).prob)


def test_weights_pass_uniform_ks_test():
    g = synthetic_social_graph(4039, 50_000, seed=0)
    w = assign_weights(g, seed=5, ceiling=1.0).prob
    assert w.size == 100_000
    assert stats.kstest(w, "uniform").pvalue > 0.01
    scaled = assign_weights(g, seed=5, ceiling=0.1).prob
    assert stats.kstest(scaled, "uniform", args=(0, 0.1)).pvalue > 0.01


def test_synthetic_graph_matches_published_counts():
    g = synthetic_social_graph()
    assert g.n == 4039
    assert g.m == 2 * 88234


def test_unknown_distribution_rejected():
    with pytest.raises(ConfigError):
        assign_weights(chain(), seed=0, distribution="beta")


def test_awareness_file(tmp_path):
    path = write(tmp_path, "# levels\na=0.5\nb = 1\n", "aw.txt")
    assert load_awareness(path) == {"a": 0.5, "b": 1.0}
    with pytest.raises(ParseError):
        load_awareness(write(tmp_path, "a=1.5\n", "bad.txt"))
    with pytest.raises(ConfigError):
        awareness_vector(chain(), {"a": -0.1})


# -- interconnection -----------------------------------------------------------


def cluster_topology(n_dev=10):
    # every device within range of every other
    devs = tuple(Device(i, 20 + (i % 4), 20 + (i // 4), RELAY) for i in range(n_dev))
    return CellularTopology(devs, (0, 0), 15.0, cell=(50, 50))


def dense_graph(n=60):
    src, dst = zip(*[(u, v) for u in range(n) for v in range(n) if u != v])
    return SocialGraph(list(range(n)), src, dst, np.full(len(src), 0.1))


def test_no_cascade_links_each_device_once():
    top = cluster_topology()
    ic = generate_interconnection(top, dense_graph(), 0.0, 0.0, seed=3)
    assert len(ic) == len(top.d2d_devices)
    assert set(ic.primary) == set(ic.device_to_user)
    assert set(ic.primary.values()) == {0}


def test_presets():
    assert STADIUM == (0.7, 0.4)
    assert MALL == (0.9, 0.6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1))
def test_interconnection_is_injective(seed, p1, p2):
    rng = np.random.default_rng(seed)
    n_dev = int(rng.integers(1, 9))
    devs = tuple(Device(i, float(rng.uniform(0, 40)), float(rng.uniform(0, 40)), RELAY) for i in range(n_dev))
    top = CellularTopology(devs, (0, 0), 20.0, cell=(40, 40))
    g = random_social(rng, n=int(rng.integers(max(n_dev, 2), 13)))
    ic = generate_interconnection(top, g, p1, p2, seed)
    assert len(set(ic.device_to_user.values())) == len(ic)
    assert set(ic.device_to_user) <= {d.id for d in top.d2d_devices}
    assert set(ic.device_to_user.values()) <= set(g.nodes)
    assert ic.devices_of(ic.user_to_device) == set(ic.device_to_user)


def test_extra_links_per_primary_link():
    # the first device's chain always sees large pools on both sides
    top, g = cluster_topology(), dense_graph()
    p1, p2 = STADIUM
    extras = np.array([generate_interconnection(top, g, p1, p2, seed=s).primary[0] for s in range(10_000)])
    se = extras.std(ddof=1) / math.sqrt(extras.size)
    assert abs(extras.mean() - p1 * (1 + p2)) <= 3 * se


def test_interconnection_csv_round_trip():
    ic = generate_interconnection(cluster_topology(), dense_graph(), 0.7, 0.4, seed=1)
    text = ic.to_csv()
    assert text.splitlines()[0] == "# schema: interconnection/v1"
    assert Interconnection.from_csv(text) == ic


def test_interconnection_rejects_collisions():
    with pytest.raises(ConfigError):
        Interconnection({1: "a", 2: "a"})
    ic = Interconnection({1: "a"})
    with pytest.raises(ConfigError):
        ic.link(2, "a")


# -- cascades ------------------------------------------------------------------


def test_no_seeds_no_activation():
    assert simulate_ic(chain(1.0), [], rng=np.random.default_rng(0)).activated == set()


def test_certain_chain_takes_two_rounds():
    out = simulate_ic(chain(1.0), ["a"], rng=np.random.default_rng(0))
    assert out.activated == {"a", "b", "c"}
    assert out.rounds == 2


def test_fully_aware_users_never_activate():
    g = chain(1.0)
    for s in range(20):
        out = simulate_ic(g, ["a"], {"b": 1.0}, np.random.default_rng(s))
        assert out.activated == {"a"}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_coupled_draws_are_monotone(seed):
    rng = np.random.default_rng(seed)
    g = random_social(rng)
    u = rng.random(g.m)
    seeds = g.indices(rng.choice(g.nodes, size=int(rng.integers(1, g.n)), replace=False).tolist())
    extra = np.union1d(seeds, [int(rng.integers(g.n))])
    low = rng.random(g.n)
    high = np.minimum(1.0, low + rng.random(g.n) * 0.5)
    live_low = u < g.prob * (1 - low[g.dst])
    live_high = u < g.prob * (1 - high[g.dst])
    small, _ = cascade_from_draws(g, seeds, live_low)
    big, _ = cascade_from_draws(g, extra, live_low)
    assert np.all(big >= small)
    aware, _ = cascade_from_draws(g, seeds, live_high)
    assert np.all(aware <= small)


def test_zero_criticality_estimates_zero():
    g = chain(0.5)
    mean, se = estimate_influence(g, ["a"], {"a": 0, "b": 0, "c": 0}, trials=500, seed=1)
    assert mean == 0.0 and se == 0.0


def test_chain_estimate_near_exact():
    mean, se = estimate_influence(chain(0.5), ["a"], trials=20_000, seed=4)
    assert abs(mean - 1.75) <= 3 * se


def test_all_seeded_has_no_variance():
    g = assign_weights(synthetic_social_graph(50, 200, seed=3), seed=0, ceiling=1.0)
    cr = {u: float(u % 3) for u in g.nodes}
    mean, se = estimate_influence(g, g.nodes, cr, trials=300, seed=2)
    assert mean == pytest.approx(sum(cr.values()))
    assert se == 0.0


def test_estimates_reproducible():
    g = assign_weights(synthetic_social_graph(300, 3000, seed=1), seed=1)
    a = estimate_influence(g, [0, 5], trials=800, seed=7)
    b = estimate_influence(g, [5, 0], trials=800, seed=7)
    assert a == b


def test_exact_examples():
    single = SocialGraph(["v"], [], [], [])
    assert exact_influence_small(single, ["v"], {"v": 3}) == 3
    assert exact_influence_small(chain(0.5), ["a"]) == pytest.approx(1.75)
    # p = 1 on a DAG: everything reachable
    g = SocialGraph(list(range(5)), [0, 0, 1, 3], [1, 2, 3, 4], [1.0] * 4)
    cr = {0: 1, 1: 2, 2: 3, 3: 4, 4: 5}
    assert exact_influence_small(g, [1], cr) == 2 + 4 + 5
    assert exact_influence_small(g, [0], cr) == 15


def worlds_influence(g, seeds, cr, awareness=None):
    """Independent oracle: sum over all 2^m live-edge worlds."""
    p = effective_probabilities(g, awareness)
    crv = np.array([cr.get(u, 1.0) for u in g.nodes]) if cr else np.ones(g.n)
    seed_idx = g.indices(seeds)
    total = 0.0
    for bits in range(2 ** g.m):
        live = np.array([(bits >> k) & 1 for k in range(g.m)], dtype=bool)
        w = float(np.prod(np.where(live, p, 1 - p)))
        if w == 0.0:
            continue
        active, _ = cascade_from_draws(g, seed_idx, live)
        total += w * crv[active].sum()
    return total


@pytest.mark.parametrize("seed", range(15))
def test_exact_matches_world_enumeration(seed):
    rng = np.random.default_rng(seed)
    g = random_social(rng, m=int(rng.integers(1, 11)))
    cr = {u: float(rng.integers(0, 4)) for u in g.nodes}
    aw = {u: float(rng.random()) for u in g.nodes} if seed % 2 else None
    seeds = [g.nodes[0]] + ([g.nodes[-1]] if seed % 3 == 0 else [])
    assert exact_influence_small(g, seeds, cr, aw) == pytest.approx(worlds_influence(g, seeds, cr, aw), abs=1e-12)


def test_exact_size_cap():
    g = SocialGraph(list(range(30)), list(range(29)), list(range(1, 30)), [0.5] * 29)
    with pytest.raises(ValueError):
        exact_influence_small(g, [0])
