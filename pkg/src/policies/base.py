"""
Base policy class for closed-loop workflow execution.

This module provides the abstract base for every rule that maps an execution
state to an allocation action, plus a wrapper for plain callables.
"""

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

from src.core.engine import AllocationAction, ExecState
from src.core.workflow import WorkflowInstance


@dataclass(frozen=True)
class PolicyDecision:
    """
    Action chosen for one round together with its bookkeeping.

    Attributes:
        action (Optional[AllocationAction]): Chosen action, or None when the
            policy has nothing feasible to offer.
        scores (Tuple[Any, ...]): Planner score table, empty for fixed rules.
        planner_seconds (float): Wall-clock time spent deciding.
    """

    action: Optional[AllocationAction]
    scores: Tuple[Any, ...] = ()
    planner_seconds: float = 0.0


class Policy(ABC):
    """
    Abstract base class for execution policies.

    Attributes:
        single_dispatch (bool): When True, a node whose dispatch fails aborts
            the run instead of being retried.
    """

    single_dispatch = False

    @abstractmethod
    def act(self, state: ExecState, instance: WorkflowInstance) -> Optional[AllocationAction]:
        """
        Choose the action for ``state``.

        Args:
            state (ExecState): Current state; its ready set is non-empty.
            instance (WorkflowInstance): Instance being executed.

        Returns:
            Optional[AllocationAction]: Action covering the ready set, or None.
        """

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        """Short JSON-ready description of the policy."""

    def planning_instance(self, instance: WorkflowInstance) -> WorkflowInstance:
        """Instance whose estimates this policy checks feasibility against."""
        return instance

    def decide(self, state: ExecState, instance: WorkflowInstance, round_index: int,
               seed: int, run_id: int) -> PolicyDecision:
        """
        Timed wrapper around act() used by the executor.

        Fixed rules ignore the round, seed and run coordinates; planners use
        them to derive their simulation streams.
        """
        start = time.perf_counter()
        action = self.act(state, instance)
        return PolicyDecision(action, (), time.perf_counter() - start)


class CallablePolicy(Policy):
    """Adapts any ``(state, instance) -> action`` callable to the Policy interface."""

    def __init__(self, fn: Callable[[ExecState, WorkflowInstance], Optional[AllocationAction]],
                 name: str = "callable"):
        self.fn = fn
        self.name = name

    def act(self, state: ExecState, instance: WorkflowInstance) -> Optional[AllocationAction]:
        return self.fn(state, instance)

    def describe(self) -> Dict[str, Any]:
        return {"policy": self.name}
