"""
Uniform static-allocation baseline.

The budget is split evenly across subtasks before execution; each node gets
as many samples of the chosen model as its share buys, and each node is
dispatched exactly once when it becomes ready.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

from config import DEFAULT_WIDTH_GRID
from src.core.engine import AllocationAction, ExecState
from src.core.workflow import WorkflowInstance, nodes_of
from src.policies.base import Policy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UniformPlan:
    """
    Precomputed per-node widths for one model.

    Attributes:
        model (int): Model index used for every node.
        widths (Tuple[int, ...]): k_v per node; 0 means the share buys nothing.
    """

    model: int
    widths: Tuple[int, ...]

    @property
    def feasible(self) -> bool:
        """False when some node cannot afford a single sample."""
        return all(k > 0 for k in self.widths)


def uniform_plan(instance: WorkflowInstance, model: int) -> UniformPlan:
    """
    k_v = ⌊(B / |V|) / c_{v,m}⌋ for every node.

    Nodes with zero per-attempt cost are not budget-limited; they get the
    largest default width.

    Args:
        instance (WorkflowInstance): Instance (estimated costs in empirical mode).
        model (int): Model index.

    Returns:
        UniformPlan: The static allocation.
    """
    node_count = instance.graph.node_count
    widths = []
    for v in instance.graph.nodes:
        cost = instance.profiles.get(v, model).cost_micro
        if cost <= 0:
            logger.warning("Node %d has zero cost under model %s; using width %d",
                           v, instance.catalog[model].id, DEFAULT_WIDTH_GRID[-1])
            widths.append(DEFAULT_WIDTH_GRID[-1])
            continue
        # ⌊⌊B/n⌋/c⌋ = ⌊B/(n c)⌋ for positive integers.
        widths.append(instance.budget_micro // (node_count * cost))
    return UniformPlan(model, tuple(widths))


class UniformPolicy(Policy):
    """
    Dispatches each node's precomputed width once, when it becomes ready.

    Attributes:
        plan (UniformPlan): Static allocation.
    """

    single_dispatch = True

    def __init__(self, plan: UniformPlan):
        self.plan = plan

    @classmethod
    def for_instance(cls, instance: WorkflowInstance, model: int) -> "UniformPolicy":
        return cls(uniform_plan(instance, model))

    def act(self, state: ExecState, instance: WorkflowInstance) -> Optional[AllocationAction]:
        if not self.plan.feasible:
            return None
        ready = nodes_of(instance.graph.ready_mask(state.completed_mask))
        return AllocationAction.from_mapping({v: (self.plan.model, self.plan.widths[v]) for v in ready})

    def describe(self) -> Dict[str, Any]:
        return {"policy": "uniform", "model": self.plan.model, "widths": list(self.plan.widths)}
