import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import DIAMOND, catalog, chain_edges, empirical, homogeneous, parametric, profile, samples
from src.core.errors import InputError
from src.core.workflow import (
    RolloutPool,
    WorkflowGraph,
    derive_profile,
    mask_of,
    nodes_of,
    ready_set,
    synthesize_pool,
    topological_order,
    validate,
)
from src.utils.rng import derive_stream


def kinds(instance):
    return sorted({v.kind for v in validate(instance)})


# ----- validate -----

def test_valid_chain_has_no_violations():
    assert validate(homogeneous(3, p=0.5, edges=chain_edges(3))) == []


def test_two_cycle_is_reported():
    instance = homogeneous(2, p=0.5, edges=[(0, 1), (1, 0)])
    assert kinds(instance) == ["cycle"]


def test_probability_out_of_range_names_the_pair():
    table = {(0, 0): profile(1.3), (1, 0): profile(0.5)}
    violations = validate(parametric(2, table, 10, 10))
    assert [(v.kind, v.node, v.model) for v in violations] == [("probability-range", 0, "m0")]


def test_structural_problems_are_all_collected():
    instance = homogeneous(3, p=0.5, edges=[(0, 0), (0, 1), (0, 1), (1, 7)])
    assert kinds(instance) == ["cycle", "duplicate-edge", "edge-endpoint", "self-loop"]


def test_missing_profile_and_negative_constraints():
    table = {(0, 0): profile(0.5)}
    instance = parametric(2, table, budget=-1, deadline=-5)
    assert set(kinds(instance)) == {"missing-profile", "budget", "deadline"}


def test_non_positive_latency_and_tokens():
    table = {(0, 0): profile(0.5, latency=0, mean_tokens=0.0)}
    assert set(kinds(parametric(1, table, 10, 10))) == {"latency", "mean-tokens"}


def test_empty_and_missing_pools_are_reported():
    pools = {(0, 0): samples(0, 0)}
    instance = empirical(2, pools, 10, 10)
    assert set(kinds(instance)) == {"empty-pool", "missing-pool"}


# ----- graph queries -----

def test_ready_set_examples():
    chain = WorkflowGraph(3, tuple(chain_edges(3)))
    assert ready_set(chain, set()) == {0}
    assert ready_set(chain, {0, 1, 2}) == set()
    assert ready_set(WorkflowGraph(4, tuple(DIAMOND)), {0}) == {1, 2}


def test_ready_set_rejects_unknown_nodes():
    with pytest.raises(InputError):
        ready_set(WorkflowGraph(2), {5})


def test_topological_order_breaks_ties_by_index():
    graph = WorkflowGraph(5, ((3, 0), (1, 0), (4, 2)))
    assert topological_order(graph) == (1, 3, 0, 4, 2)


def test_topological_order_rejects_cycles():
    with pytest.raises(InputError, match="cycle"):
        topological_order(WorkflowGraph(3, ((0, 1), (1, 2), (2, 0))))


@given(st.sets(st.integers(min_value=0, max_value=20)))
def test_mask_round_trip(nodes):
    assert set(nodes_of(mask_of(nodes))) == nodes


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=7), st.data())
def test_ready_set_matches_definition(n, data):
    raw = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=12))
    edges = [(min(a, b), max(a, b)) for a, b in raw if a != b]
    completed = data.draw(st.sets(st.integers(0, n - 1)))
    graph = WorkflowGraph(n, tuple(edges))
    expected = {v for v in range(n) if v not in completed
                and all(u in completed for u, w in edges if w == v)}
    assert ready_set(graph, completed) == expected


def random_dag(data, max_nodes=7):
    n = data.draw(st.integers(min_value=1, max_value=max_nodes))
    raw = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=14))
    return WorkflowGraph(n, tuple(sorted({(min(a, b), max(a, b)) for a, b in raw if a != b})))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_ready_nodes_stay_ready_as_more_completes(data):
    graph = random_dag(data)
    larger = data.draw(st.sets(st.integers(0, graph.node_count - 1)))
    smaller = data.draw(st.sets(st.sampled_from(sorted(larger)))) if larger else set()
    assert ready_set(graph, smaller) - larger <= ready_set(graph, larger)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_completing_ready_sets_finishes_the_workflow(data):
    graph = random_dag(data)
    completed = set()
    for _ in range(graph.node_count):
        ready = ready_set(graph, completed)
        if not ready:
            break
        completed |= ready
    assert completed == set(range(graph.node_count))
    assert ready_set(graph, completed) == set()


# ----- profiles and pools -----

def test_derive_profile_uses_raw_averages():
    pool = RolloutPool({(0, 0): samples(2, 2, tokens=[100, 100, 300, 300])})
    derived = derive_profile(pool, catalog()).get(0, 0)
    assert derived.p == 0.5
    assert derived.mean_tokens == 200.0


def test_derive_profile_of_all_failures():
    pool = RolloutPool({(0, 0): samples(0, 5)})
    assert derive_profile(pool, catalog()).get(0, 0).p == 0.0


def test_derive_profile_rejects_empty_pairs():
    with pytest.raises(InputError):
        derive_profile(RolloutPool({(0, 0): samples(0, 0)}), catalog())


def test_synthetic_pool_matches_its_profile():
    table = parametric(1, {(0, 0): profile(0.3, mean_tokens=500.0)}, 10, 10).profiles
    pool = synthesize_pool(table, catalog(), 512, derive_stream(7, 3, 0, 1))
    p_hat = derive_profile(pool, catalog()).get(0, 0).p
    sigma = np.sqrt(0.3 * 0.7 / 512)
    assert abs(p_hat - 0.3) <= 3 * sigma


def test_large_synthetic_pool_converges():
    table = parametric(1, {(0, 0): profile(0.3, mean_tokens=500.0)}, 10, 10).profiles
    pool = synthesize_pool(table, catalog(), 100_000, derive_stream(8, 3, 0, 1))
    derived = derive_profile(pool, catalog()).get(0, 0)
    assert abs(derived.p - 0.3) < 0.01
    assert abs(derived.mean_tokens - 500.0) < 5.0


def test_pool_samples_are_read_only():
    pool = samples(1, 1)
    with pytest.raises(ValueError):
        pool.success[0] = False


# ----- instance transforms -----

def test_restrict_models_reindexes_profiles():
    table = {(0, 0): profile(0.1), (0, 1): profile(0.9), (0, 2): profile(0.5)}
    restricted = parametric(1, table, 10, 10).restrict_models(["m2", "m1"])
    assert restricted.catalog.ids == ("m2", "m1")
    assert restricted.profiles.get(0, 0).p == 0.5
    assert restricted.profiles.get(0, 1).p == 0.9
    assert validate(restricted) == []


def test_restrict_models_rejects_unknown_ids():
    with pytest.raises(InputError):
        homogeneous(1, p=0.5).restrict_models(["nope"])


def test_with_pools_requires_empirical_instance():
    with pytest.raises(InputError):
        homogeneous(1, p=0.5).with_pools(RolloutPool({}))


def test_with_constraints_keeps_everything_else():
    instance = homogeneous(2, p=0.5)
    changed = instance.with_constraints(123, 456)
    assert (changed.budget_micro, changed.deadline_ms) == (123, 456)
    assert changed.profiles == instance.profiles
