"""
Run state management module.

This module tracks the terminal status of one closed-loop workflow run and
the transitions between RUNNING, SUCCESS, and FAILURE.
"""

from typing import Optional

from config import RunOutcome
from src.core.engine import ExecState
from src.core.workflow import WorkflowGraph


class FailureReason:
    """Reason strings attached to FAILURE outcomes."""
    NO_FEASIBLE_ACTION = "no-feasible-action"
    INFEASIBLE_ACTION = "infeasible-action"
    OVERDRAWN = "constraints-exceeded"
    DISPATCH_FAILED = "single-dispatch-failed"


class RunStateManager:
    """
    Manages run status transitions.

    Attributes:
        current_state (RunOutcome): RUNNING until a terminal outcome is reached.
        failure_reason (Optional[str]): Why the run failed, if it did.
        round_index (int): Number of decision rounds executed so far.
    """

    def __init__(self, graph: WorkflowGraph):
        """
        Initialize the run state manager.

        Args:
            graph (WorkflowGraph): Graph of the workflow being executed.
        """
        self.graph = graph
        self.current_state = RunOutcome.RUNNING
        self.failure_reason: Optional[str] = None
        self.round_index = 0

    @property
    def is_running(self) -> bool:
        return self.current_state is RunOutcome.RUNNING

    def update(self, state: ExecState) -> RunOutcome:
        """
        Apply the terminal conditions to the state after a round.

        A run fails once realized consumption exceeded the budget or the
        deadline, and succeeds once every node is completed within both.

        Args:
            state (ExecState): State after the latest transition.

        Returns:
            RunOutcome: The (possibly unchanged) run status.
        """
        if not self.is_running:
            return self.current_state
        if state.is_overdrawn:
            self.set_failure(FailureReason.OVERDRAWN)
        elif state.is_complete(self.graph):
            self.set_success()
        return self.current_state

    def advance_round(self) -> None:
        self.round_index += 1

    def set_success(self) -> None:
        """Mark the run as completed within budget and deadline."""
        self.current_state = RunOutcome.SUCCESS
        self.failure_reason = None

    def set_failure(self, reason: str) -> None:
        """Mark the run as failed with ``reason``."""
        self.current_state = RunOutcome.FAILURE
        self.failure_reason = reason
