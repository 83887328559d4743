"""
Retry-(m, k) base policies.

A base policy assigns the same model m and sampling width k to every ready
node at every round. The set of all of them over a model catalog and a width
grid is the continuation portfolio used by the planner, and run closed-loop a
base policy is the Retry baseline.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

from src.core.engine import AllocationAction, ExecState
from src.core.errors import ContractViolation, InputError
from src.core.workflow import WorkflowInstance, nodes_of
from src.policies.base import Policy


@dataclass(frozen=True)
class RetryPolicy(Policy):
    """
    The base policy π_{m,k}.

    Attributes:
        model (int): Model index.
        width (int): Sampling width k >= 1.
    """

    model: int
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise InputError(f"Base policy width must be >= 1, got {self.width}")
        if self.model < 0:
            raise InputError(f"Base policy model index must be >= 0, got {self.model}")

    def act(self, state: ExecState, instance: WorkflowInstance) -> AllocationAction:
        return base_action(self, state, instance)

    def describe(self) -> Dict[str, Any]:
        return {"policy": "retry", "model": self.model, "width": self.width}

    def label(self, instance: WorkflowInstance) -> str:
        return f"{instance.catalog[self.model].id}:{self.width}"


def base_action(policy: RetryPolicy, state: ExecState, instance: WorkflowInstance) -> AllocationAction:
    """
    π_{m,k}(s) = {(m, k)} for every v in R(S).

    Raises:
        ContractViolation: If every node is already completed.
    """
    ready = instance.graph.ready_mask(state.completed_mask)
    if ready == 0:
        raise ContractViolation("Base action requested for a state with no ready nodes")
    if policy.model >= len(instance.catalog):
        raise InputError(f"Model index {policy.model} outside catalog of size {len(instance.catalog)}")
    return AllocationAction.homogeneous(nodes_of(ready), policy.model, policy.width)


def portfolio(model_count: int, widths: Sequence[int]) -> List[RetryPolicy]:
    """Π0 = {π_{m,k} : m ∈ M, k ∈ K}, ordered by (model, width)."""
    return [RetryPolicy(m, k) for m in range(model_count) for k in widths]
