import random

import pytest
from hypothesis import given, settings, strategies as st

from moregin.data import RerankParams
from moregin.metrics import disparate_visibility
from moregin.reranker import (
    build_buckets,
    compute_quotas,
    largest_remainder,
    rerank,
    select_hard,
    select_soft,
)
from moregin.stats import GroupStats, PropensityTable, propensity, representation
from moregin.synth import make_feasible_instance

from conftest import make_catalog, make_lists, make_train, random_instance
from oracles import moregin_simulation


def test_bucket_cartesian_expansion():
    cat = make_catalog({"a": (["Action", "Comedy"], ["NA"])})
    bucket = build_buckets(make_lists({"u": [("a", 1.0)]}), cat, GroupStats({"NA": 1.0}), PropensityTable({}))
    assert [(r.genre, r.continent) for r in bucket] == [("Action", "NA"), ("Comedy", "NA")]


def test_bucket_order_least_represented_first():
    cat = make_catalog({"a": (["G"], ["NA"]), "b": (["G"], ["AF"])})
    stats = GroupStats({"NA": 0.72, "AF": 0.05})
    bucket = build_buckets(make_lists({"u": [("a", 0.9), ("b", 0.1)]}), cat, stats, PropensityTable({}))
    assert [r.rep for r in bucket] == [0.05, 0.72]


def test_bucket_order_prop_then_score():
    cat = make_catalog({"a": (["A"], ["NA"]), "b": (["B"], ["NA"]), "c": (["B"], ["NA"])})
    prop = PropensityTable({"u": {"A": 0.8, "B": 0.2}})
    recs = make_lists({"u": [("a", 0.95), ("b", 0.9), ("c", 0.7)]})
    bucket = build_buckets(recs, cat, GroupStats({"NA": 1.0}), prop)
    assert [r.item for r in bucket] == ["b", "c", "a"]


def test_bucket_cold_user_warns(caplog):
    cat = make_catalog({"a": (["A"], ["NA"])})
    bucket = build_buckets(make_lists({"x": [("a", 1.0)]}), cat, GroupStats({"NA": 1.0}), PropensityTable({}))
    assert bucket.records[0].prop == 0.0
    assert "without propensity" in caplog.text


def test_quotas_single_continent():
    q = compute_quotas(GroupStats({"NA": 1.0}), PropensityTable({}), ["a", "b", "c"], RerankParams())
    assert q.expected_cont == {"NA": 30}


def test_quotas_two_continents():
    q = compute_quotas(GroupStats({"NA": 0.75, "EU": 0.25}), PropensityTable({}), ["a", "b"], RerankParams())
    assert q.expected_cont == {"NA": 15, "EU": 5}


def test_genre_cap_rule():
    q = compute_quotas(GroupStats({"NA": 1.0}), PropensityTable({"u": {"g": 0.34}}), ["u"], RerankParams())
    assert q.expected_user_gen["u", "g"] == pytest.approx(3.4)
    assert q.genre_cap("u", "g") == 3
    # 3 selections pass (3 <= 3.4), a 4th does not (4 > 3.4)
    assert [n + 1 <= q.genre_cap("u", "g") for n in range(4)] == [True, True, True, False]


def test_genre_cap_tolerates_rounding():
    q = compute_quotas(GroupStats({"NA": 1.0}), PropensityTable({"u": {"g": 0.1 + 0.2 - 1e-16}}), ["u"], RerankParams())
    assert q.genre_cap("u", "g") == 3


@given(st.dictionaries(st.sampled_from("ABCDEFG"), st.floats(0.001, 1.0), min_size=1), st.integers(1, 500))
def test_largest_remainder_properties(weights, total):
    z = sum(weights.values())
    shares = {k: v / z for k, v in weights.items()}
    alloc = largest_remainder(shares, total)
    assert sum(alloc.values()) == total
    for k in shares:
        assert abs(alloc[k] - shares[k] * total) < 1 + 1e-9


def _setup(items, pairs, cands, k=10, n=1000):
    cat = make_catalog(items)
    train = make_train(pairs)
    stats, prop = representation(train, cat), propensity(train, cat)
    recs = make_lists(cands)
    params = RerankParams(k, max(n, k))
    return cat, stats, prop, recs, params


def test_select_hard_single_candidate():
    cat, stats, prop, recs, params = _setup({"a": (["G"], ["NA"])}, [("u", "a")], {"u": [("a", 1.0)]})
    bucket = build_buckets(recs, cat, stats, prop)
    quotas = compute_quotas(stats, prop, recs.users, params)
    select_hard(bucket, quotas, params)
    assert bucket.records[0].phase == 1


def test_select_hard_respects_list_length():
    items = {f"i{j}": (["G"], ["NA"]) for j in range(5)}
    cat, stats, prop, recs, params = _setup(items, [("u", "i0")], {"u": [(f"i{j}", 5 - j) for j in range(5)]}, k=2)
    bucket = build_buckets(recs, cat, stats, prop)
    quotas = compute_quotas(stats, prop, recs.users, params)
    select_hard(bucket, quotas, params)
    assert quotas.user_counts["u"] == 2
    assert [r.item for r in bucket.selected()] == ["i0", "i1"]


def test_select_hard_alias_dedup():
    cat, stats, prop, recs, params = _setup(
        {"a": (["A", "B"], ["NA"])}, [("u", "a")], {"u": [("a", 1.0)]}
    )
    bucket = build_buckets(recs, cat, stats, prop)
    quotas = compute_quotas(stats, prop, recs.users, params)
    select_hard(bucket, quotas, params)
    assert [r.phase for r in bucket] == [1, None]
    select_soft(bucket, quotas, 2, params)
    select_soft(bucket, quotas, 3, params)
    assert [r.phase for r in bucket] == [1, None]


def test_phase_two_fills_past_genre_quota():
    # user only likes A (cap 1 at k=2) but one continent slot remains
    items = {"a1": (["A"], ["NA"]), "a2": (["A"], ["NA"])}
    cat, stats, prop, recs, params = _setup(items, [("u", "a1")], {"u": [("a1", 2), ("a2", 1)]}, k=2)
    prop = PropensityTable({"u": {"A": 0.5, "B": 0.5}})
    bucket = build_buckets(recs, cat, stats, prop)
    quotas = compute_quotas(stats, prop, recs.users, params)
    select_hard(bucket, quotas, params)
    assert quotas.user_counts["u"] == 1
    select_soft(bucket, quotas, 2, params)
    assert quotas.user_counts["u"] == 2
    assert sorted(r.phase for r in bucket.selected()) == [1, 2]


def test_phase_three_ignores_exhausted_continents():
    # all candidates come from a continent with zero representation
    items = {"t": (["G"], ["NA"]), "x": (["G"], ["EU"]), "y": (["G"], ["EU"]), "z": (["G"], ["EU"])}
    cat, stats, prop, recs, params = _setup(items, [("u", "t")], {"u": [("x", 3), ("y", 2), ("z", 1)]}, k=2)
    bucket = build_buckets(recs, cat, stats, prop)
    quotas = compute_quotas(stats, prop, recs.users, params)
    select_hard(bucket, quotas, params)
    select_soft(bucket, quotas, 2, params)
    assert not bucket.selected()
    select_soft(bucket, quotas, 3, params)
    assert [(r.item, r.phase) for r in bucket.selected()] == [("x", 3), ("y", 3)]


def test_invalid_soft_phase():
    cat, stats, prop, recs, params = _setup({"a": (["G"], ["NA"])}, [("u", "a")], {"u": [("a", 1.0)]})
    with pytest.raises(ValueError, match="phase"):
        select_soft(build_buckets(recs, cat, stats, prop), compute_quotas(stats, prop, ["u"], params), 4, params)


def test_feasible_instance_filled_in_phase_one():
    params = RerankParams(10, 1000)
    cat, train, recs = make_feasible_instance(params, GroupStats({"NA": 0.5, "EU": 0.5}), n_users=4)
    stats, prop = representation(train, cat), propensity(train, cat)
    out, bucket = rerank(recs, cat, stats, prop, params, return_bucket=True)
    phases = [r.phase for r in bucket.selected()]
    assert len(phases) == 40 and set(phases) == {1}
    # exhaustive audit of the quotas
    counts = {}
    for r in bucket.selected():
        counts[r.continent] = counts.get(r.continent, 0) + 1
    assert counts == {"NA": 20, "EU": 20}
    assert disparate_visibility(out, cat, stats).delta_total == 0.0


def test_identity_when_constraints_do_not_bind():
    items = {"a": (["A"], ["NA"]), "b": (["B"], ["EU"]), "c": (["A"], ["NA"]), "d": (["B"], ["EU"])}
    train = [("u", "a"), ("u", "b"), ("v", "c"), ("v", "d")]
    cands = {"u": [("c", 0.9), ("d", 0.8)], "v": [("b", 0.7), ("a", 0.6)]}
    cat, stats, prop, recs, params = _setup(items, train, cands, k=2, n=2)
    assert rerank(recs, cat, stats, prop, params).lists == recs.lists


def test_short_candidate_lists(caplog):
    cat, stats, prop, recs, params = _setup(
        {"a": (["G"], ["NA"]), "b": (["G"], ["NA"])}, [("u", "a")], {"u": [("a", 2), ("b", 1)], "v": []}, k=5
    )
    out = rerank(recs, cat, stats, prop, params)
    assert out.items_of("u") == ["a", "b"]
    assert out.items_of("v") == []
    assert "fewer than 5" in caplog.text


def test_two_user_six_item_matches_simulation():
    items = {
        "i1": (["A"], ["NA"]),
        "i2": (["A", "B"], ["EU"]),
        "i3": (["B"], ["NA", "EU"]),
        "i4": (["C"], ["AS"]),
        "i5": (["A"], ["EU"]),
        "i6": (["B", "C"], ["NA"]),
    }
    train = [("u1", "i1"), ("u1", "i2"), ("u2", "i3"), ("u2", "i4"), ("u2", "i1")]
    cands = {
        "u1": [("i3", 0.9), ("i4", 0.8), ("i5", 0.7), ("i6", 0.4)],
        "u2": [("i6", 0.95), ("i5", 0.5), ("i2", 0.45)],
    }
    cat, stats, prop, recs, params = _setup(items, train, cands, k=3, n=6)
    out = rerank(recs, cat, stats, prop, params)
    expected = moregin_simulation(cands, items, train, 3, 6)
    assert {u: out.items_of(u) for u in out.users} == expected


def _check_invariants(items, pairs, cands, k, n):
    cat, stats, prop, recs, params = _setup(items, pairs, cands, k=k, n=n)
    out, bucket = rerank(recs, cat, stats, prop, params, return_bucket=True)
    quotas = compute_quotas(stats, prop, [u for u, l in recs if l], params)
    for u, lst in recs:
        got = out.items_of(u)
        assert len(got) == min(k, len({r.item for r in lst[:n]}))
        assert len(set(got)) == len(got)
    sel = bucket.selected()
    cont1, gen1, cont12 = {}, {}, {}
    for r in sel:
        if r.phase == 1:
            cont1[r.continent] = cont1.get(r.continent, 0) + 1
            gen1[r.user, r.genre] = gen1.get((r.user, r.genre), 0) + 1
        if r.phase in (1, 2):
            cont12[r.continent] = cont12.get(r.continent, 0) + 1
    for c, v in cont12.items():
        assert v <= quotas.expected_cont.get(c, 0)
    for (u, g), v in gen1.items():
        assert v <= quotas.genre_cap(u, g)
    assert rerank(recs, cat, stats, prop, params) == out


@pytest.mark.parametrize("seed", range(40))
def test_invariants_on_random_instances(seed):
    rng = random.Random(seed)
    items, pairs, cands = random_instance(rng, n_users=rng.randint(1, 5), n_items=12, multi=0.4)
    k = rng.randint(1, 5)
    _check_invariants(items, pairs, cands, k, rng.randint(k, 12))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_matches_simulation_hypothesis(seed, k):
    items, pairs, cands = random_instance(random.Random(seed), n_users=3, n_items=8)
    cat, stats, prop, recs, params = _setup(items, pairs, cands, k=k, n=8)
    out = rerank(recs, cat, stats, prop, params)
    assert {u: out.items_of(u) for u in out.users} == moregin_simulation(cands, items, pairs, k, 8)
