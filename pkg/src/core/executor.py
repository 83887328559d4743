"""
Closed-loop workflow executor.

This module runs a policy against the execution simulator: at each round the
policy proposes an action for the ready set, the action is executed, the
observed outcome updates the state, and the loop repeats until the workflow
completes or a constraint is violated.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from config import STREAM_EXECUTION, RunOutcome
from src.core.engine import (
    AllocationAction,
    ExecState,
    TransitionOutcome,
    apply_outcome,
    initial_state,
    is_feasible,
    sample_transition,
)
from src.core.errors import ContractViolation
from src.core.run_state import FailureReason, RunStateManager
from src.core.workflow import WorkflowInstance, nodes_of
from src.utils.rng import derive_stream
from src.utils.units import micro_to_usd, ms_to_seconds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundRecord:
    """
    One executed decision round.

    Attributes:
        round_index (int): Zero-based round number.
        state (ExecState): State the action was chosen in.
        action (AllocationAction): Executed action.
        outcome (TransitionOutcome): Realized outcome.
        scores (Tuple[Any, ...]): Planner score table (empty for fixed policies).
        planner_seconds (float): Wall-clock time spent choosing the action.
    """

    round_index: int
    state: ExecState
    action: AllocationAction
    outcome: TransitionOutcome
    scores: Tuple[Any, ...] = ()
    planner_seconds: float = 0.0


@dataclass
class RunResult:
    """
    Outcome and trace of one closed-loop run.

    Attributes:
        outcome (RunOutcome): SUCCESS or FAILURE.
        final_state (ExecState): State when the loop stopped.
        rounds (List[RoundRecord]): Executed rounds in order.
        failure_reason (Optional[str]): Why the run failed, if it did.
        planner_seconds (List[float]): Per-round decision times, including a
            final round that found no feasible action.
    """

    outcome: RunOutcome
    final_state: ExecState
    rounds: List[RoundRecord] = field(default_factory=list)
    failure_reason: Optional[str] = None
    planner_seconds: List[float] = field(default_factory=list)

    @property
    def succeeded(self) -> bool:
        return self.outcome is RunOutcome.SUCCESS

    @property
    def mean_planner_seconds(self) -> float:
        """Mean per-round decision time of this run (0 when no round was planned)."""
        if not self.planner_seconds:
            return 0.0
        return sum(self.planner_seconds) / len(self.planner_seconds)


class WorkflowExecutor:
    """
    Runs one policy on one instance until success or failure.

    Attributes:
        instance (WorkflowInstance): Instance whose pools or profiles generate outcomes.
        policy: Object implementing the Policy interface.
        seed (int): Experiment seed.
        run_id (int): Replicate index; keys the execution streams.
        state_manager (RunStateManager): Tracks the run status.
    """

    def __init__(self, instance: WorkflowInstance, policy, seed: int = 0, run_id: int = 0):
        """
        Initialize the executor.

        Args:
            instance (WorkflowInstance): Execution instance.
            policy: Policy deciding actions.
            seed (int): Experiment seed.
            run_id (int): Replicate index.
        """
        self.instance = instance
        self.policy = policy
        self.seed = seed
        self.run_id = run_id
        self.state_manager = RunStateManager(instance.graph)
        self.state = initial_state(instance)
        self.rounds: List[RoundRecord] = []
        self.planner_seconds: List[float] = []

    def execution_stream(self, round_index: int):
        """Generator for the real transition of ``round_index``."""
        return derive_stream(self.seed, STREAM_EXECUTION, self.run_id, round_index)

    def step(self) -> RunOutcome:
        """
        Execute one decision round.

        Returns:
            RunOutcome: Run status after the round.
        """
        graph = self.instance.graph
        round_index = self.state_manager.round_index
        decision = self.policy.decide(self.state, self.instance, round_index, self.seed, self.run_id)
        self.planner_seconds.append(decision.planner_seconds)

        action = decision.action
        if action is None:
            self.state_manager.set_failure(FailureReason.NO_FEASIBLE_ACTION)
            return self.state_manager.current_state

        ready = graph.ready_mask(self.state.completed_mask)
        if action.nodes_mask != ready:
            raise ContractViolation(
                f"Policy {self.policy.describe()} assigned nodes {list(action.nodes)} but the ready set "
                f"is {list(nodes_of(ready))}"
            )
        view = self.policy.planning_instance(self.instance)
        if not is_feasible(self.state, action, view.profiles, view.batch_latency):
            self.state_manager.set_failure(FailureReason.INFEASIBLE_ACTION)
            return self.state_manager.current_state

        outcome = sample_transition(self.state, action, self.instance, self.execution_stream(round_index),
                                    check_feasibility=False)
        self.rounds.append(RoundRecord(round_index, self.state, action, outcome,
                                       decision.scores, decision.planner_seconds))
        self.state = apply_outcome(self.state, action, outcome)
        self.state_manager.advance_round()
        logger.debug("run %d round %d: completed %s, b=%d, h=%d", self.run_id, round_index,
                     sorted(outcome.completed_now), self.state.remaining_budget, self.state.remaining_time)

        status = self.state_manager.update(self.state)
        if (status is RunOutcome.RUNNING and self.policy.single_dispatch
                and len(outcome.completed_now) != len(action)):
            self.state_manager.set_failure(FailureReason.DISPATCH_FAILED)
        return self.state_manager.current_state

    def run(self) -> RunResult:
        """
        Main execution loop.

        Returns:
            RunResult: Outcome and full trace.
        """
        self.state_manager.update(self.state)
        while self.state_manager.is_running:
            self.step()
        return RunResult(
            outcome=self.state_manager.current_state,
            final_state=self.state,
            rounds=self.rounds,
            failure_reason=self.state_manager.failure_reason,
            planner_seconds=self.planner_seconds,
        )


def trace_to_dict(result: RunResult, instance: WorkflowInstance) -> Dict[str, Any]:
    """JSON-ready view of a run trace with names and model ids restored."""
    graph, catalog = instance.graph, instance.catalog
    rounds = []
    for record in result.rounds:
        rounds.append({
            "round": record.round_index,
            "completed_before": [graph.name(v) for v in sorted(record.state.completed)],
            "remaining_budget_usd": micro_to_usd(record.state.remaining_budget),
            "remaining_time_s": ms_to_seconds(record.state.remaining_time),
            "action": action_to_list(record.action, instance),
            "completed_now": [graph.name(v) for v in sorted(record.outcome.completed_now)],
            "cost_usd": micro_to_usd(record.outcome.cost),
            "duration_s": ms_to_seconds(record.outcome.duration),
            "best_score": max((s.portfolio_score for s in record.scores), default=None),
            "planner_s": record.planner_seconds,
        })
    return {
        "outcome": result.outcome.value,
        "failure_reason": result.failure_reason,
        "spent_usd": micro_to_usd(result.final_state.spent),
        "elapsed_s": ms_to_seconds(result.final_state.elapsed),
        "completed": [graph.name(v) for v in sorted(result.final_state.completed)],
        "rounds": rounds,
        "models": list(catalog.ids),
    }


def action_to_list(action: AllocationAction, instance: WorkflowInstance) -> List[Dict[str, Any]]:
    return [
        {"node": a.node, "name": instance.graph.name(a.node), "model": instance.catalog[a.model].id, "width": a.width}
        for a in action.assignments
    ]
