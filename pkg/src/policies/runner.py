"""Closed-loop execution of a fixed policy."""

from typing import Callable, Optional, Union

from src.core.engine import AllocationAction, ExecState
from src.core.executor import RunResult, WorkflowExecutor
from src.core.workflow import WorkflowInstance
from src.policies.base import CallablePolicy, Policy
from src.policies.uniform import UniformPlan, UniformPolicy

PolicyLike = Union[Policy, UniformPlan, Callable[[ExecState, WorkflowInstance], Optional[AllocationAction]]]


def as_policy(policy: PolicyLike) -> Policy:
    """Coerce a base policy, a Uniform plan, or a callable into a Policy."""
    if isinstance(policy, Policy):
        return policy
    if isinstance(policy, UniformPlan):
        return UniformPolicy(policy)
    if callable(policy):
        return CallablePolicy(policy)
    raise TypeError(f"Cannot use {policy!r} as a policy")


def run_policy(instance: WorkflowInstance, policy: PolicyLike, seed: int = 0, run_id: int = 0) -> RunResult:
    """
    Execute ``policy`` closed-loop on ``instance``.

    Every round the policy's action is checked for feasibility, executed, and
    the observed outcome applied. The run succeeds iff every node completes
    with spent <= B and elapsed <= D.

    Args:
        instance (WorkflowInstance): Execution instance.
        policy (PolicyLike): Base policy, Uniform plan, Policy, or callable.
        seed (int): Experiment seed.
        run_id (int): Replicate index; (seed, run_id) fixes the execution streams.

    Returns:
        RunResult: Outcome and trace.
    """
    return WorkflowExecutor(instance, as_policy(policy), seed=seed, run_id=run_id).run()
