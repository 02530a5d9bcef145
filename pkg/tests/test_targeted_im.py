import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import chain, random_social
from d2drumor.errors import ConfigError, IterationCapError
from d2drumor.osn import SocialGraph, exact_influence_small
from d2drumor.targeted_im import (
    ImParams,
    RrCollection,
    RrSet,
    estimate_from_collection,
    exhaustive_best,
    generate_rr_set,
    greedy_max_coverage,
    log_binomial,
    sample_origin,
    targeted_im,
)


def collection(sets, nodes=None, omega=1.0):
    nodes = nodes if nodes is not None else sorted({v for s in sets for v in s})
    c = RrCollection(nodes, omega)
    for s in sets:
        members = np.array(sorted(s), dtype=np.int64)
        c.add(RrSet(int(members[0]), members))
    return c


# -- stopping-rule constants ---------------------------------------------------------


def test_gamma_hand_value():
    # n = 12, k = 3: ln C = ln 220; ln(2 / 0.1) = ln 20
    lt = math.log(20)
    sigma = math.sqrt((1 - 1 / math.e) * (math.log(220) + lt))
    phi = ((1 - 1 / math.e) * sigma + math.sqrt(lt)) / 0.3
    p = ImParams(12, 3, 0.3, 0.1)
    assert p.gamma == pytest.approx(2 * (phi**2 + lt), rel=1e-12)
    assert p.gamma == pytest.approx(231.6, abs=0.1)


def test_alternative_failure_split():
    assert ImParams(12, 3, 0.3, 0.1, 3.0).gamma > ImParams(12, 3, 0.3, 0.1).gamma


def test_log_binomial_large():
    assert log_binomial(4039, 10) == pytest.approx(math.log(math.comb(4039, 10)), rel=1e-12)
    assert log_binomial(10, 0) == 0.0


@pytest.mark.parametrize("args", [(5, 0, 0.1, 0.1), (5, 6, 0.1, 0.1), (5, 2, 0.0, 0.1), (5, 2, 0.1, 1.0)])
def test_bad_parameters(args):
    with pytest.raises(ConfigError):
        ImParams(*args)


# -- origin sampling -----------------------------------------------------------------


@pytest.mark.parametrize("weights,expected", [((1, 1), 0.5), ((3, 1), 0.75)])
def test_origin_frequencies(weights, expected):
    rng = np.random.default_rng(11)
    n = 100_000
    hits = sum(sample_origin(weights, rng) == 0 for _ in range(n))
    sd = math.sqrt(n * expected * (1 - expected))
    assert abs(hits - n * expected) <= 3 * sd


def test_zero_weight_nodes_never_drawn():
    rng = np.random.default_rng(0)
    draws = {sample_origin([0, 2, 0, 1, 0], rng) for _ in range(2000)}
    assert draws == {1, 3}


def test_all_zero_criticality_rejected():
    with pytest.raises(ConfigError):
        sample_origin([0, 0], np.random.default_rng(0))


# -- RR sets -----------------------------------------------------------------------------


def test_isolated_origin():
    g = SocialGraph(["x", "y"], [0], [1], [1.0])
    rr = generate_rr_set(g, rng=np.random.default_rng(0), origin=0)
    assert rr.members.tolist() == [0]


def test_certain_edges_give_all_ancestors():
    # 0 -> 1 -> 2, 3 -> 2, 2 -> 4
    g = SocialGraph(list(range(5)), [0, 1, 3, 2], [1, 2, 2, 4], [1.0] * 4)
    rr = generate_rr_set(g, rng=np.random.default_rng(0), origin=2)
    assert rr.members.tolist() == [0, 1, 2, 3]
    assert 2 in rr and 4 not in rr


def test_chain_path_probability():
    g = chain(0.5)
    rng = np.random.default_rng(5)
    n = 100_000
    hits = sum(0 in generate_rr_set(g, rng=rng, origin=2) for _ in range(n))
    sd = math.sqrt(n * 0.25 * 0.75)
    assert abs(hits - 0.25 * n) <= 3 * sd


def test_aware_target_blocks_reverse_step():
    g = chain(1.0)
    rr = generate_rr_set(g, awareness={"b": 1.0}, rng=np.random.default_rng(0), origin=2)
    # b's incoming edge is thinned to zero; c still sees b
    assert rr.members.tolist() == [1, 2]


# -- greedy coverage ---------------------------------------------------------------------


def test_single_member_sets():
    seeds, covered, gains = greedy_max_coverage(collection([{4}] * 6, nodes=list(range(6))), 3)
    assert seeds == [4] and covered == 6 and gains == [6]


def test_disjoint_sets_tie_break():
    seeds, covered, _ = greedy_max_coverage(collection([{0}, {1}, {2}]), 2)
    assert seeds == [0, 1] and covered == 2


def test_tie_break_uses_ids_not_positions():
    c = collection([{0}, {1}], nodes=["zeta", "alpha"])
    seeds, _, _ = greedy_max_coverage(c, 1)
    assert seeds == [1]


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.sets(st.integers(0, 7), min_size=1, max_size=4), min_size=1, max_size=12),
    st.integers(1, 3),
)
def test_greedy_ratio_against_exhaustive(sets, k):
    c = collection(sets, nodes=list(range(8)))
    _, covered, gains = greedy_max_coverage(c, k)
    best = max(c.coverage(s) for s in itertools.combinations(range(8), k))
    assert covered >= (1 - 1 / math.e) * best
    assert covered == sum(gains)
    assert gains == sorted(gains, reverse=True)


def test_estimator_formula():
    c = collection([{0, 1}, {1}, {2}, {2, 3}], nodes=list(range(4)), omega=8.0)
    assert estimate_from_collection(c, [1]) == pytest.approx(4.0)
    assert estimate_from_collection(c, [1, 2]) == pytest.approx(8.0)
    assert estimate_from_collection(c, []) == 0.0


# -- the doubling loop --------------------------------------------------------------------


def test_single_critical_user_first_round():
    g = SocialGraph(list(range(5)), [0, 1, 2], [1, 2, 3], [0.3] * 3)
    res = targeted_im(g, {3: 2.0}, k=2, epsilon=0.3, seed=1)
    assert 3 in res.seeds
    assert res.rounds == 1
    assert res.coverage == res.rr_sets
    assert res.estimate == pytest.approx(2.0)


def test_all_users_as_seeds_cover_everything():
    g = random_social(np.random.default_rng(2), n=6, m=8)
    res = targeted_im(g, None, k=6, epsilon=0.5, seed=0)
    assert res.rounds == 1
    assert res.coverage == res.rr_sets >= res.gamma


@pytest.mark.parametrize("seed", range(5))
def test_termination_certificate(seed):
    rng = np.random.default_rng(seed)
    g = random_social(rng, ceiling=0.4)
    res = targeted_im(g, {u: float(rng.random()) for u in g.nodes}, k=2, epsilon=0.3, seed=seed)
    assert res.coverage >= res.gamma
    assert res.rr_sets >= math.ceil(res.gamma)
    assert len(res.seeds) <= 2


def test_iteration_cap():
    # ten isolated users: one seed covers about a tenth of the sets
    g = SocialGraph(list(range(10)), [], [], [])
    with pytest.raises(IterationCapError):
        targeted_im(g, None, k=1, epsilon=0.3, seed=0, max_doublings=0)
    res = targeted_im(g, None, k=1, epsilon=0.3, seed=0)
    assert res.rounds > 1 and res.coverage >= res.gamma


def test_deterministic_in_seed():
    g = random_social(np.random.default_rng(8), ceiling=0.5)
    a = targeted_im(g, None, k=2, epsilon=0.3, seed=4)
    b = targeted_im(g, None, k=2, epsilon=0.3, seed=4)
    assert a.seeds == b.seeds and a.estimate == b.estimate


def test_seed_export():
    g = random_social(np.random.default_rng(8), ceiling=0.5)
    res = targeted_im(g, None, k=2, epsilon=0.3, seed=4)
    lines = res.to_csv().splitlines()
    assert lines[0] == "# schema: seeds/v1"
    assert lines[1] == "rank,user_id,marginal_coverage"
    assert len(lines) == 2 + len(res.seeds)
    doc = json.loads(res.summary())
    assert doc["rr_sets"] == res.rr_sets and doc["epsilon"] == 0.3


def test_exhaustive_best():
    g = SocialGraph(list(range(4)), [], [], [])
    assert exhaustive_best(g, 2, lambda s: sum(s)) == 5


@pytest.mark.parametrize("seed", range(6))
def test_sample_count_band(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_social(rng, n=int(rng.integers(4, 10)), ceiling=0.6)
    k = 1 + seed % 2
    res = targeted_im(g, None, k=k, epsilon=0.3, seed=seed)
    best = exhaustive_best(g, k, lambda s: exact_influence_small(g, s))
    q_star = 2 * g.n * res.params.phi**2 / best
    assert res.rr_sets <= 4 * q_star
