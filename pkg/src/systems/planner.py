"""
Monte Carlo Portfolio Planning.

At each state the planner builds a candidate set of allocation actions that
always contains the base actions of the portfolio, drops the infeasible ones,
scores every remaining candidate by its best continuation policy through
Monte Carlo rollouts, and executes the argmax. The executor then observes
the real outcome and the planner replans from the new state.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import (
    DEFAULT_DELTA,
    DEFAULT_ENUMERATION_CAP,
    DEFAULT_SIMS_PER_PAIR,
    DEFAULT_TIE_BREAK,
    DEFAULT_WIDTH_GRID,
    DEFAULT_WORKERS,
    STREAM_PLANNING,
)
from src.core.engine import AllocationAction, Assignment, ExecState, is_feasible
from src.core.errors import ContractViolation, InputError
from src.core.executor import RunResult, WorkflowExecutor
from src.core.workflow import WorkflowInstance, nodes_of
from src.policies.base import Policy, PolicyDecision
from src.policies.retry import RetryPolicy, portfolio
from src.systems.simulator import BatchSimulator
from src.utils.rng import derive_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlannerConfig:
    """
    MCPP settings.

    Attributes:
        width_grid (Tuple[int, ...]): Allowed widths K, strictly increasing.
        sims_per_pair (int): Simulations per (candidate, continuation) pair.
        enumeration_cap (int): Largest action space enumerated in full.
        delta (float): Confidence level for reported Hoeffding radii.
        tie_break (str): Tie-break rule; only "lexicographic" is defined.
        workers (int): Threads used to score pairs; results do not depend on it.
    """

    width_grid: Tuple[int, ...] = DEFAULT_WIDTH_GRID
    sims_per_pair: int = DEFAULT_SIMS_PER_PAIR
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    delta: float = DEFAULT_DELTA
    tie_break: str = DEFAULT_TIE_BREAK
    workers: int = DEFAULT_WORKERS

    def __post_init__(self):
        grid = tuple(int(k) for k in self.width_grid)
        object.__setattr__(self, "width_grid", grid)
        if not grid:
            raise InputError("Width grid must not be empty")
        if grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise InputError(f"Width grid must be positive and strictly increasing, got {grid}")
        if self.sims_per_pair < 1:
            raise InputError(f"sims_per_pair must be >= 1, got {self.sims_per_pair}")
        if self.enumeration_cap < 1:
            raise InputError(f"enumeration_cap must be >= 1, got {self.enumeration_cap}")
        if not 0.0 < self.delta < 1.0:
            raise InputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.tie_break != DEFAULT_TIE_BREAK:
            raise InputError(f"Unknown tie-break rule {self.tie_break!r}")
        if self.workers < 1:
            raise InputError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class ActionScore:
    """
    Monte Carlo scores of one feasible candidate.

    Attributes:
        action (AllocationAction): The candidate.
        continuation_values (Tuple[float, ...]): Q̂_μ(s, a) per portfolio policy.
        portfolio_score (float): Q̂_Π0(s, a) = max over continuations.
        best_continuation (RetryPolicy): A continuation attaining the max.
        radius (float): Hoeffding radius ε(s, δ) of the estimates.
    """

    action: AllocationAction
    continuation_values: Tuple[float, ...]
    portfolio_score: float
    best_continuation: RetryPolicy
    radius: float


@dataclass(frozen=True)
class SelectionResult:
    """
    Output of select_action.

    ``action`` is None when no candidate is feasible (NO_FEASIBLE).
    """

    action: Optional[AllocationAction]
    scores: Tuple[ActionScore, ...] = ()
    candidate_count: int = 0

    @property
    def is_feasible(self) -> bool:
        return self.action is not None


NO_FEASIBLE = SelectionResult(None)


@dataclass(frozen=True)
class PlanningStreams:
    """
    Coordinates of the planner's random streams.

    The (candidate, continuation) pair scored at ``round_index`` of run
    ``run_id`` draws from stream (seed, PLANNING, run_id, round_index,
    candidate, continuation).
    """

    seed: int = 0
    run_id: int = 0
    round_index: int = 0

    def pair(self, candidate: int, continuation: int) -> np.random.Generator:
        return derive_stream(self.seed, STREAM_PLANNING, self.run_id, self.round_index, candidate, continuation)


# ===== Candidates =====

def candidates(state: ExecState, instance: WorkflowInstance, config: PlannerConfig) -> List[AllocationAction]:
    """
    Candidate actions for ``state``, sorted by encoding.

    The full log-scale space is enumerated when (|M||K|)^|R| fits under the
    enumeration cap. Otherwise the set is every homogeneous action (exactly
    the base actions of the portfolio) plus, for each of them and each ready
    node, every single-node deviation to another (model, width).

    Raises:
        ContractViolation: If no node is ready.
    """
    ready = nodes_of(instance.graph.ready_mask(state.completed_mask))
    if not ready:
        raise ContractViolation("Candidates requested for a completed workflow")
    choices = [(m, k) for m in range(len(instance.catalog)) for k in config.width_grid]

    if len(choices) ** len(ready) <= config.enumeration_cap:
        actions = {
            AllocationAction(tuple(Assignment(v, m, k) for v, (m, k) in zip(ready, combo)))
            for combo in itertools.product(choices, repeat=len(ready))
        }
    else:
        actions = set()
        for m, k in choices:
            base = {v: (m, k) for v in ready}
            actions.add(AllocationAction.from_mapping(base))
            for v in ready:
                for choice in choices:
                    if choice != (m, k):
                        actions.add(AllocationAction.from_mapping({**base, v: choice}))
    return sorted(actions, key=lambda a: a.encoding)


# ===== Estimation =====

def hoeffding_radius(pair_count: int, n: int, delta: float) -> float:
    """
    ε(s, δ) = sqrt(ln(2L/δ) / (2N)).

    Args:
        pair_count (int): L, the number of scored (action, continuation) pairs.
        n (int): N, simulations per pair.
        delta (float): Confidence level in (0, 1).

    Returns:
        float: The radius.

    Raises:
        InputError: On L < 1, N < 1 or δ outside (0, 1).
    """
    if pair_count < 1 or n < 1:
        raise InputError(f"L and N must be >= 1, got L={pair_count}, N={n}")
    if not 0.0 < delta < 1.0:
        raise InputError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(math.log(2.0 * pair_count / delta) / (2.0 * n))


def mc_value(state: ExecState, action: AllocationAction, continuation: RetryPolicy, n_sim: int,
             instance: WorkflowInstance, rng: np.random.Generator,
             simulator: Optional[BatchSimulator] = None) -> float:
    """
    Monte Carlo estimate of Q_μ(s, a).

    Runs ``n_sim`` simulations that first execute ``action`` and then follow
    ``continuation`` until the workflow completes (success) or a constraint is
    violated or no feasible action remains (failure).

    Returns:
        float: Success fraction; 0.0 for an infeasible action.
    """
    if instance.graph.ready_mask(state.completed_mask) == 0:
        raise ContractViolation("mc_value requested for a completed workflow")
    simulator = simulator or BatchSimulator(instance)
    return simulator.estimate(state, action, continuation, n_sim, rng)


def select_action(state: ExecState, instance: WorkflowInstance, config: PlannerConfig,
                  streams: PlanningStreams = PlanningStreams(),
                  simulator: Optional[BatchSimulator] = None) -> SelectionResult:
    """
    Score feasible candidates by their best continuation and pick the argmax.

    Ties go to the lexicographically smallest action encoding.

    Args:
        state (ExecState): Current state, not terminal.
        instance (WorkflowInstance): Planner-visible instance.
        config (PlannerConfig): Planner settings.
        streams (PlanningStreams): Random stream coordinates.
        simulator (Optional[BatchSimulator]): Reused simulator for ``instance``.

    Returns:
        SelectionResult: Chosen action and score table, or NO_FEASIBLE.
    """
    pool = candidates(state, instance, config)
    feasible = [(i, a) for i, a in enumerate(pool)
                if is_feasible(state, a, instance.profiles, instance.batch_latency)]
    if not feasible:
        logger.debug("round %d: none of %d candidates feasible", streams.round_index, len(pool))
        return SelectionResult(None, (), len(pool))

    continuations = portfolio(len(instance.catalog), config.width_grid)
    simulator = simulator or BatchSimulator(instance)
    radius = hoeffding_radius(len(feasible) * len(continuations), config.sims_per_pair, config.delta)

    def score_pair(job: Tuple[int, AllocationAction, int, RetryPolicy]) -> float:
        cand_index, action, cont_index, policy = job
        return simulator.estimate(state, action, policy, config.sims_per_pair, streams.pair(cand_index, cont_index))

    jobs = [(i, a, j, mu) for i, a in feasible for j, mu in enumerate(continuations)]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            values = list(executor.map(score_pair, jobs))
    else:
        values = [score_pair(job) for job in jobs]

    scores = []
    best: Optional[ActionScore] = None
    width = len(continuations)
    for n, (_, action) in enumerate(feasible):
        per_cont = tuple(values[n * width:(n + 1) * width])
        top = max(range(width), key=lambda j: (per_cont[j], -j))
        score = ActionScore(action, per_cont, per_cont[top], continuations[top], radius)
        scores.append(score)
        # Candidates arrive in encoding order, so strict improvement keeps the smallest tie.
        if best is None or score.portfolio_score > best.portfolio_score:
            best = score
    logger.debug("round %d: %d/%d feasible candidates, selected %s with score %.4f", streams.round_index,
                 len(feasible), len(pool), best.action.as_mapping(), best.portfolio_score)
    return SelectionResult(best.action, tuple(scores), len(pool))


# ===== Closed loop =====

class PlannerPolicy(Policy):
    """
    MCPP exposed through the Policy interface.

    Attributes:
        config (PlannerConfig): Planner settings.
        planner_instance (Optional[WorkflowInstance]): Instance the planner
            simulates from; defaults to the execution instance.
    """

    def __init__(self, config: PlannerConfig, planner_instance: Optional[WorkflowInstance] = None):
        self.config = config
        self.planner_instance = planner_instance
        self._simulator: Optional[BatchSimulator] = None
        self._simulated: Optional[WorkflowInstance] = None

    def planning_instance(self, instance: WorkflowInstance) -> WorkflowInstance:
        return self.planner_instance if self.planner_instance is not None else instance

    def _simulator_for(self, instance: WorkflowInstance) -> BatchSimulator:
        if self._simulated is not instance:
            self._simulator = BatchSimulator(instance)
            self._simulated = instance
        return self._simulator

    def act(self, state: ExecState, instance: WorkflowInstance) -> Optional[AllocationAction]:
        view = self.planning_instance(instance)
        return select_action(state, view, self.config, simulator=self._simulator_for(view)).action

    def decide(self, state: ExecState, instance: WorkflowInstance, round_index: int,
               seed: int, run_id: int) -> PolicyDecision:
        start = time.perf_counter()
        view = self.planning_instance(instance)
        result = select_action(state, view, self.config, PlanningStreams(seed, run_id, round_index),
                               self._simulator_for(view))
        return PolicyDecision(result.action, result.scores, time.perf_counter() - start)

    def describe(self) -> Dict[str, Any]:
        return {"policy": "mcpp", "widths": list(self.config.width_grid), "sims": self.config.sims_per_pair}


def run_mcpp(instance: WorkflowInstance, config: PlannerConfig, seed: int = 0, run_id: int = 0,
             planner_instance: Optional[WorkflowInstance] = None) -> RunResult:
    """
    Closed-loop MCPP execution.

    Plans with ``planner_instance`` (the execution instance when None) and
    executes only the selected action against ``instance``. Planning and
    execution streams are independent.

    Returns:
        RunResult: SUCCESS or FAILURE with the per-round trace and scores.
    """
    policy = PlannerPolicy(config, planner_instance)
    return WorkflowExecutor(instance, policy, seed=seed, run_id=run_id).run()
