"""
Exact dynamic-programming oracle for small parametric instances.

Budgets and times are exact integers, so the reachable (S, b, h) lattice is
finite and every value is memoised without discretisation. The oracle
computes the optimal log-scale value V*_K, fixed base-policy values V^μ,
action values Q_μ and Q*_K, the exact portfolio planner and its closed-loop
value, and the candidate-set and continuation gaps.

It is a verification tool: instances beyond the size guard are refused.
"""

import logging
import sys
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from config import DEFAULT_ENUMERATION_CAP, DEFAULT_WIDTH_GRID, ORACLE_MAX_NODES, ORACLE_RECURSION_LIMIT
from src.core.engine import (
    AllocationAction,
    ExecState,
    action_cost,
    action_duration,
    subset_probability,
)
from src.core.errors import OracleSizeError, UnsupportedModeError
from src.core.workflow import WorkflowInstance, nodes_of
from src.policies.retry import RetryPolicy, base_action, portfolio
from src.systems.planner import PlannerConfig, candidates

logger = logging.getLogger(__name__)

StateKey = Tuple[int, int, int]


@dataclass(frozen=True)
class ActionModel:
    """Cost and duration of one action; neither depends on the state."""
    cost: int
    duration: int


class ExactOracle:
    """
    Memoised exact recursion over reachable states.

    Attributes:
        instance (WorkflowInstance): Parametric instance.
        width_grid (Tuple[int, ...]): Width grid K.
        enumeration_cap (int): Largest per-state action space enumerated.
    """

    def __init__(self, instance: WorkflowInstance, width_grid: Sequence[int] = DEFAULT_WIDTH_GRID,
                 enumeration_cap: int = DEFAULT_ENUMERATION_CAP, max_nodes: int = ORACLE_MAX_NODES):
        """
        Initialize the oracle.

        Args:
            instance (WorkflowInstance): Parametric instance.
            width_grid (Sequence[int]): Width grid K.
            enumeration_cap (int): Per-state action-space guard.
            max_nodes (int): Node-count guard.

        Raises:
            UnsupportedModeError: For empirical instances.
            OracleSizeError: When the instance has too many nodes.
        """
        if instance.is_empirical:
            raise UnsupportedModeError("The exact oracle only supports parametric instances")
        if instance.graph.node_count > max_nodes:
            raise OracleSizeError(f"{instance.graph.node_count} nodes exceed the oracle guard of {max_nodes}")
        self.instance = instance
        self.width_grid = tuple(width_grid)
        self.enumeration_cap = enumeration_cap
        self.config = PlannerConfig(width_grid=self.width_grid, enumeration_cap=enumeration_cap)
        self.portfolio = portfolio(len(instance.catalog), self.width_grid)
        self.full_mask = instance.graph.full_mask
        self._optimal: Dict[StateKey, float] = {}
        self._policy: Dict[Tuple[RetryPolicy, StateKey], float] = {}
        self._planner: Dict[StateKey, float] = {}
        self._plans: Dict[StateKey, Tuple[Optional[AllocationAction], float]] = {}
        self._action_space: Dict[int, List[AllocationAction]] = {}
        self._models: Dict[AllocationAction, ActionModel] = {}
        self._outcomes: Dict[AllocationAction, Tuple[Tuple[int, float], ...]] = {}
        if sys.getrecursionlimit() < ORACLE_RECURSION_LIMIT:
            sys.setrecursionlimit(ORACLE_RECURSION_LIMIT)

    # ----- building blocks -----

    def action_space(self, completed_mask: int) -> List[AllocationAction]:
        """
        Full log-scale action space A_K(S), sorted by encoding.

        Raises:
            OracleSizeError: When (|M||K|)^|R| exceeds the enumeration cap.
        """
        ready_mask = self.instance.graph.ready_mask(completed_mask)
        if ready_mask not in self._action_space:
            ready = nodes_of(ready_mask)
            choices = [(m, k) for m in range(len(self.instance.catalog)) for k in self.width_grid]
            size = len(choices) ** len(ready)
            if size > self.enumeration_cap:
                raise OracleSizeError(f"{size} actions for ready set {list(ready)} exceed the cap "
                                      f"of {self.enumeration_cap}")
            state = ExecState(completed_mask, 0, 0)
            self._action_space[ready_mask] = candidates(state, self.instance, self.config)
        return self._action_space[ready_mask]

    def action_model(self, action: AllocationAction) -> ActionModel:
        """Cost and duration of ``action``."""
        if action not in self._models:
            profiles = self.instance.profiles
            self._models[action] = ActionModel(
                cost=action_cost(action, profiles),
                duration=action_duration(action, profiles, self.instance.batch_latency),
            )
        return self._models[action]

    def feasible(self, key: StateKey, action: AllocationAction) -> bool:
        model = self.action_model(action)
        return model.cost <= key[1] and model.duration <= key[2]

    def outcomes(self, action: AllocationAction) -> Tuple[Tuple[int, float], ...]:
        """(U mask, Pr(U | s, a)) for every subset of the action's nodes."""
        if action not in self._outcomes:
            profiles = self.instance.profiles
            state = ExecState(0, 0, 0)
            nodes = action.nodes
            outcomes = []
            for bits in range(1 << len(nodes)):
                subset = [v for i, v in enumerate(nodes) if bits >> i & 1]
                outcomes.append((sum(1 << v for v in subset), subset_probability(state, action, subset, profiles)))
            self._outcomes[action] = tuple(outcomes)
        return self._outcomes[action]

    def expectation(self, key: StateKey, action: AllocationAction, value: Callable[[StateKey], float]) -> float:
        """
        Σ_U Pr(U | s, a) · value(S ∪ U, b - C(a), h - Δ(a)); 0 for infeasible actions.
        """
        if not self.feasible(key, action):
            return 0.0
        completed_mask, budget, time_left = key
        model = self.action_model(action)
        next_budget, next_time = budget - model.cost, time_left - model.duration
        total = 0.0
        for subset_mask, probability in self.outcomes(action):
            if probability > 0.0:
                total += probability * value((completed_mask | subset_mask, next_budget, next_time))
        return total

    # ----- values -----

    def optimal_value(self, key: StateKey) -> float:
        """V*_K(S, b, h)."""
        if key[0] == self.full_mask:
            return 1.0
        if key not in self._optimal:
            best = 0.0
            for action in self.action_space(key[0]):
                best = max(best, self.expectation(key, action, self.optimal_value))
            self._optimal[key] = best
        return self._optimal[key]

    def optimal_q(self, key: StateKey, action: AllocationAction) -> float:
        """Q*_K(s, a) = E[V*_K(s')]."""
        return self.expectation(key, action, self.optimal_value)

    def policy_value(self, key: StateKey, policy: RetryPolicy) -> float:
        """V^μ(S, b, h) for a base policy μ; zero when μ's action is infeasible."""
        if key[0] == self.full_mask:
            return 1.0
        cache_key = (policy, key)
        if cache_key not in self._policy:
            action = base_action(policy, ExecState(*key), self.instance)
            self._policy[cache_key] = self.expectation(key, action, lambda child: self.policy_value(child, policy))
        return self._policy[cache_key]

    def q(self, key: StateKey, action: AllocationAction, continuation: RetryPolicy) -> float:
        """Q_μ(s, a) = E[V^μ(s')]."""
        return self.expectation(key, action, lambda child: self.policy_value(child, continuation))

    def portfolio_q(self, key: StateKey, action: AllocationAction) -> float:
        """Q_Π0(s, a) = max_μ Q_μ(s, a)."""
        return max(self.q(key, action, mu) for mu in self.portfolio)

    def portfolio_plan(self, key: StateKey,
                       pool: Optional[Sequence[AllocationAction]] = None) -> Tuple[Optional[AllocationAction], float]:
        """
        Exact portfolio planner a_Π0(s) over the planner's candidate set.

        Infeasible candidates are dropped; ties go to the smallest encoding.

        Returns:
            Tuple[Optional[AllocationAction], float]: The choice and Q_Π0(s, a),
            or (None, 0.0) when no candidate is feasible.
        """
        if pool is None and key in self._plans:
            return self._plans[key]
        if pool is None:
            pool = candidates(ExecState(*key), self.instance, self.config)
        best_action, best_value = None, 0.0
        for action in sorted(pool, key=lambda a: a.encoding):
            if not self.feasible(key, action):
                continue
            value = self.portfolio_q(key, action)
            if best_action is None or value > best_value:
                best_action, best_value = action, value
        return best_action, best_value

    def plan(self, key: StateKey) -> Tuple[Optional[AllocationAction], float]:
        """Memoised portfolio_plan over the default candidate set."""
        if key not in self._plans:
            self._plans[key] = self.portfolio_plan(key)
        return self._plans[key]

    def planner_value(self, key: StateKey) -> float:
        """V^{π_exact}(s): closed-loop value of replanning with the exact portfolio planner."""
        if key[0] == self.full_mask:
            return 1.0
        if key not in self._planner:
            action, _ = self.plan(key)
            self._planner[key] = 0.0 if action is None else self.expectation(key, action, self.planner_value)
        return self._planner[key]

    def gaps(self, key: StateKey, pruned: Sequence[AllocationAction]) -> Tuple[float, float]:
        """
        Candidate-set gap η and continuation gap ζ at ``key``.

        η = max_{a∈A_K, μ} Q_μ(s,a) - max_{a∈pruned, μ} Q_μ(s,a) and
        ζ = Q*_K(s) - max_{a∈A_K, μ} Q_μ(s,a), with Q*_K(s) = V*_K(s).
        """
        full_best = max((self.portfolio_q(key, a) for a in self.action_space(key[0])), default=0.0)
        pruned_best = max((self.portfolio_q(key, a) for a in pruned), default=0.0)
        return full_best - pruned_best, self.optimal_value(key) - full_best

    def state_values(self) -> List[Dict[str, object]]:
        """Every memoised V* entry, sorted by (S, b, h)."""
        return [
            {"completed": list(nodes_of(mask)), "budget_micro": b, "time_ms": h, "value": value}
            for (mask, b, h), value in sorted(self._optimal.items())
        ]


# ===== Functional interface =====

def _oracle(instance: WorkflowInstance, width_grid: Sequence[int], oracle: Optional[ExactOracle]) -> ExactOracle:
    return oracle if oracle is not None else ExactOracle(instance, width_grid)


def exact_value(state: ExecState, instance: WorkflowInstance, width_grid: Sequence[int] = DEFAULT_WIDTH_GRID,
                oracle: Optional[ExactOracle] = None) -> float:
    """Optimal constrained completion probability V*_K(s)."""
    return _oracle(instance, width_grid, oracle).optimal_value(state.key())


def exact_policy_value(state: ExecState, policy: RetryPolicy, instance: WorkflowInstance,
                       width_grid: Sequence[int] = DEFAULT_WIDTH_GRID,
                       oracle: Optional[ExactOracle] = None) -> float:
    """Value V^μ(s) of a fixed base policy."""
    return _oracle(instance, width_grid, oracle).policy_value(state.key(), policy)


def exact_q(state: ExecState, action: AllocationAction, continuation: RetryPolicy, instance: WorkflowInstance,
            width_grid: Sequence[int] = DEFAULT_WIDTH_GRID, oracle: Optional[ExactOracle] = None) -> float:
    """Q_μ(s, a): execute ``action`` then follow ``continuation``; 0 if infeasible."""
    return _oracle(instance, width_grid, oracle).q(state.key(), action, continuation)


def exact_optimal_q(state: ExecState, action: AllocationAction, instance: WorkflowInstance,
                    width_grid: Sequence[int] = DEFAULT_WIDTH_GRID, oracle: Optional[ExactOracle] = None) -> float:
    """Q*_K(s, a) = E[V*_K(s')]."""
    return _oracle(instance, width_grid, oracle).optimal_q(state.key(), action)


def exact_portfolio_plan(state: ExecState, instance: WorkflowInstance, width_grid: Sequence[int] = DEFAULT_WIDTH_GRID,
                         oracle: Optional[ExactOracle] = None) -> Tuple[Optional[AllocationAction], float]:
    """(a_Π0(s), Q_Π0(s, a_Π0(s))) over the planner's candidate set."""
    return _oracle(instance, width_grid, oracle).plan(state.key())


def exact_planner_value(state: ExecState, instance: WorkflowInstance, width_grid: Sequence[int] = DEFAULT_WIDTH_GRID,
                        oracle: Optional[ExactOracle] = None) -> float:
    """V^{π_exact}(s) of the closed-loop exact portfolio planner."""
    return _oracle(instance, width_grid, oracle).planner_value(state.key())


def gap_diagnostics(state: ExecState, instance: WorkflowInstance, pruned_candidates: Sequence[AllocationAction],
                    width_grid: Sequence[int] = DEFAULT_WIDTH_GRID,
                    oracle: Optional[ExactOracle] = None) -> Tuple[float, float]:
    """(η(s), ζ(s)) for a pruned candidate set."""
    return _oracle(instance, width_grid, oracle).gaps(state.key(), pruned_candidates)


def reachable_states(oracle: ExactOracle, start: ExecState) -> List[StateKey]:
    """
    Every non-terminal (S, b, h) reachable from ``start`` under some action.

    Walks the full action space breadth first; used to enumerate state
    lattices for verification.
    """
    seen = set()
    frontier = [start.key()]
    while frontier:
        key = frontier.pop()
        if key in seen or key[0] == oracle.full_mask:
            continue
        seen.add(key)
        for action in oracle.action_space(key[0]):
            if not oracle.feasible(key, action):
                continue
            model = oracle.action_model(action)
            for subset_mask, probability in oracle.outcomes(action):
                if probability > 0.0:
                    frontier.append((key[0] | subset_mask, key[1] - model.cost, key[2] - model.duration))
    return sorted(seen)
