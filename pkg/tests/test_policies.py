import math

import pytest

from config import RunOutcome
from factories import DIAMOND, chain_edges, homogeneous, parametric, profile, single_node
from src.core.engine import AllocationAction, ExecState, state_from
from src.core.errors import ContractViolation, InputError
from src.core.executor import WorkflowExecutor, trace_to_dict
from src.core.run_state import FailureReason
from src.policies.base import CallablePolicy
from src.policies.retry import RetryPolicy, base_action, portfolio
from src.policies.runner import as_policy, run_policy
from src.policies.uniform import UniformPolicy, uniform_plan
from src.utils.units import usd_to_micro


# ----- base policies -----

def test_base_action_covers_the_ready_set():
    instance = homogeneous(4, p=0.5, edges=DIAMOND, model_count=2)
    action = base_action(RetryPolicy(0, 4), state_from([0], 10, 10), instance)
    assert action.as_mapping() == {1: (0, 4), 2: (0, 4)}
    assert base_action(RetryPolicy(1, 1), state_from([], 10, 10), instance).as_mapping() == {0: (1, 1)}


def test_base_action_needs_ready_nodes():
    instance = homogeneous(2, p=0.5)
    with pytest.raises(ContractViolation):
        base_action(RetryPolicy(0, 1), state_from([0, 1], 10, 10), instance)


def test_base_policy_arguments_are_checked():
    with pytest.raises(InputError):
        RetryPolicy(0, 0)
    with pytest.raises(InputError):
        base_action(RetryPolicy(3, 1), state_from([], 10, 10), homogeneous(1, p=0.5))


def test_portfolio_is_ordered_by_model_then_width():
    assert portfolio(2, (1, 4)) == [RetryPolicy(0, 1), RetryPolicy(0, 4), RetryPolicy(1, 1), RetryPolicy(1, 4)]


# ----- uniform plans -----

def priced(node_costs_usd, budget_usd):
    table = {(v, 0): profile(0.5, cost=usd_to_micro(c)) for v, c in enumerate(node_costs_usd)}
    return parametric(len(node_costs_usd), table, usd_to_micro(budget_usd), 10**9)


def test_uniform_plan_splits_the_budget_evenly():
    plan = uniform_plan(priced([0.05] * 4, 1.00), 0)
    assert plan.widths == (5, 5, 5, 5)
    assert plan.feasible


def test_uniform_plan_with_a_too_small_share_is_infeasible():
    plan = uniform_plan(priced([0.05] * 4, 0.04), 0)
    assert plan.widths == (0, 0, 0, 0)
    assert not plan.feasible


def test_uniform_plan_with_heterogeneous_costs():
    assert uniform_plan(priced([0.05, 0.10], 1.00), 0).widths == (10, 5)


def test_infeasible_uniform_plan_fails_at_the_first_round():
    result = run_policy(priced([0.05] * 4, 0.04), uniform_plan(priced([0.05] * 4, 0.04), 0))
    assert result.outcome is RunOutcome.FAILURE
    assert result.failure_reason == FailureReason.NO_FEASIBLE_ACTION
    assert result.rounds == []


def test_uniform_dispatches_each_node_once():
    instance = homogeneous(2, p=0.0, budget=100, deadline=100, edges=chain_edges(2))
    result = run_policy(instance, UniformPolicy.for_instance(instance, 0))
    assert result.failure_reason == FailureReason.DISPATCH_FAILED
    assert len(result.rounds) == 1


def test_uniform_succeeds_on_certain_nodes():
    instance = homogeneous(3, p=1.0, budget=30, deadline=100, edges=chain_edges(3))
    result = run_policy(instance, UniformPolicy.for_instance(instance, 0))
    assert result.succeeded
    assert [r.action.as_mapping() for r in result.rounds] == [{0: (0, 10)}, {1: (0, 10)}, {2: (0, 10)}]


# ----- closed-loop runs -----

def test_certain_node_succeeds_in_one_round(certain_node):
    result = run_policy(certain_node, RetryPolicy(0, 1))
    assert result.succeeded
    assert len(result.rounds) == 1
    assert result.final_state.spent == 1


def test_one_round_of_width_two_succeeds_three_times_in_four(coin_node):
    n = 10_000
    wins = sum(run_policy(coin_node, RetryPolicy(0, 2), seed=3, run_id=i).succeeded for i in range(n))
    sigma = math.sqrt(0.75 * 0.25 / n)
    assert abs(wins / n - 0.75) <= 4 * sigma


def test_deadline_consumed_by_the_first_node_fails_the_chain():
    instance = homogeneous(2, p=1.0, latency=5, budget=100, deadline=5, edges=chain_edges(2))
    result = run_policy(instance, RetryPolicy(0, 1))
    assert result.outcome is RunOutcome.FAILURE
    assert result.failure_reason == FailureReason.INFEASIBLE_ACTION
    assert result.final_state.completed == {0}


def test_retry_reattempts_failed_nodes():
    instance = single_node(p=0.5, budget=1000, deadline=1000)
    result = run_policy(instance, RetryPolicy(0, 1), seed=1)
    assert result.succeeded
    assert all(r.action.as_mapping() == {0: (0, 1)} for r in result.rounds)


def test_runs_are_reproducible():
    instance = homogeneous(4, p=0.5, budget=12, deadline=12, edges=DIAMOND)
    first = run_policy(instance, RetryPolicy(0, 1), seed=5, run_id=2)
    second = run_policy(instance, RetryPolicy(0, 1), seed=5, run_id=2)
    assert trace_to_dict(first, instance) == trace_to_dict(second, instance)


def test_callables_are_accepted_as_policies(certain_node):
    result = run_policy(certain_node, lambda state, instance: AllocationAction.homogeneous([0], 0, 3))
    assert result.succeeded
    assert isinstance(as_policy(lambda s, i: None), CallablePolicy)
    with pytest.raises(TypeError):
        as_policy(42)


def test_policy_must_cover_exactly_the_ready_set():
    instance = homogeneous(2, p=0.5, edges=chain_edges(2))
    wrong = CallablePolicy(lambda state, inst: AllocationAction.homogeneous([1], 0, 1))
    with pytest.raises(ContractViolation):
        WorkflowExecutor(instance, wrong).run()


def test_trace_restores_names_and_ids(certain_node):
    result = run_policy(certain_node, RetryPolicy(0, 2))
    trace = trace_to_dict(result, certain_node)
    assert trace["outcome"] == "success"
    assert trace["rounds"][0]["action"] == [{"node": 0, "name": "0", "model": "m0", "width": 2}]
    assert trace["rounds"][0]["best_score"] is None
    assert trace["spent_usd"] == 2e-6


def test_empty_workflow_succeeds_without_rounds():
    instance = homogeneous(0, p=0.5)
    result = run_policy(instance, RetryPolicy(0, 1))
    assert result.succeeded
    assert result.rounds == []
    assert result.mean_planner_seconds == 0.0


def test_zero_budget_fails_immediately():
    result = run_policy(single_node(p=1.0, budget=0, deadline=10), RetryPolicy(0, 1))
    assert result.failure_reason == FailureReason.INFEASIBLE_ACTION
    assert result.final_state == ExecState(0, 0, 10)
