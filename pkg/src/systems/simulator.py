"""
Vectorised batch simulator.

Runs N independent simulated executions side by side with numpy arrays: a
completed-node matrix, per-simulation remaining budget and time, and an alive
flag. It applies one arbitrary first action to every simulation and then
follows a base policy closed-loop, which is exactly the quantity the planner
needs to score an (action, continuation) pair.

The transition law matches src.core.engine: parametric nodes succeed with
q_{v,m}(k) at deterministic cost and duration; empirical nodes resample k
pool records with replacement, pay realized tokens and wait for the slowest
record. Feasibility is checked on the (estimated) profiles; realized
overdraws count as failures.
"""

from typing import Dict, Tuple

import numpy as np

from src.core.engine import (
    AllocationAction,
    ExecState,
    is_feasible,
    node_duration,
    success_prob_array,
)
from src.core.workflow import WorkflowInstance
from src.policies.retry import RetryPolicy
from src.utils.units import token_cost_micro_array


class BatchSimulator:
    """
    Simulates many executions of one instance at once.

    Attributes:
        instance (WorkflowInstance): The (planner-visible) instance simulated.
    """

    def __init__(self, instance: WorkflowInstance):
        """
        Initialize the simulator.

        Args:
            instance (WorkflowInstance): Instance to simulate.
        """
        self.instance = instance
        self.node_count = instance.graph.node_count
        self.dependency = instance.graph.dependency_matrix
        self.p, self.cost, self.latency = instance.profiles.arrays
        self.prices = np.array([m.price_per_1k_usd for m in instance.catalog], dtype=np.float64)
        self._q_cache: Dict[Tuple[int, int], np.ndarray] = {}
        self._duration_cache: Dict[Tuple[int, int], np.ndarray] = {}

    # ----- cached per-(model, width) vectors -----

    def node_q(self, model: int, width: int) -> np.ndarray:
        """q_{v,m}(k) for every node v."""
        key = (model, width)
        if key not in self._q_cache:
            self._q_cache[key] = success_prob_array(self.p[:, model], width)
        return self._q_cache[key]

    def node_durations(self, model: int, width: int) -> np.ndarray:
        """Δ_{v,m}(k) for every node v, in ms."""
        key = (model, width)
        if key not in self._duration_cache:
            hook = self.instance.batch_latency
            self._duration_cache[key] = np.array(
                [node_duration(int(t), width, hook) for t in self.latency[:, model]], dtype=np.int64
            )
        return self._duration_cache[key]

    # ----- batch helpers -----

    def ready(self, completed: np.ndarray) -> np.ndarray:
        """Ready matrix for a (n, V) completed matrix."""
        missing = (~completed).astype(np.int32) @ self.dependency
        return ~completed & (missing == 0)

    def _state_rows(self, state: ExecState, n: int):
        bits = np.array([(state.completed_mask >> v) & 1 for v in range(self.node_count)], dtype=bool)
        completed = np.tile(bits, (n, 1))
        budget = np.full(n, state.remaining_budget, dtype=np.int64)
        time_left = np.full(n, state.remaining_time, dtype=np.int64)
        return completed, budget, time_left

    def _draw_empirical(self, rows: np.ndarray, node: int, model: int, width: int, rng: np.random.Generator):
        """Resample ``width`` records for ``rows`` simulations of one node."""
        samples = self.instance.pools.get(node, model)
        draw = rng.integers(0, len(samples), size=(rows.size, width))
        succeeded = samples.success[draw].any(axis=1)
        cost = token_cost_micro_array(samples.tokens[draw].sum(axis=1), self.prices[model])
        duration = samples.latency_ms[draw].max(axis=1)
        return succeeded, cost, duration

    # ----- simulation -----

    def apply_action(self, state: ExecState, action: AllocationAction, n: int, rng: np.random.Generator):
        """
        Execute ``action`` from ``state`` in n simulations.

        Returns:
            Tuple of (completed, budget, time, alive) arrays, or None when the
            action is infeasible from ``state``.
        """
        if not is_feasible(state, action, self.instance.profiles, self.instance.batch_latency):
            return None
        completed, budget, time_left = self._state_rows(state, n)
        if self.instance.is_empirical:
            all_rows = np.arange(n)
            cost = np.zeros(n, dtype=np.int64)
            duration = np.zeros(n, dtype=np.int64)
            for a in action.assignments:
                succeeded, node_cost, node_time = self._draw_empirical(all_rows, a.node, a.model, a.width, rng)
                completed[:, a.node] |= succeeded
                cost += node_cost
                np.maximum(duration, node_time, out=duration)
            budget -= cost
            time_left -= duration
        else:
            draws = rng.random((n, len(action)))
            for j, a in enumerate(action.assignments):
                completed[:, a.node] |= draws[:, j] < self.node_q(a.model, a.width)[a.node]
            budget -= sum(a.width * int(self.cost[a.node, a.model]) for a in action.assignments)
            time_left -= max(int(self.node_durations(a.model, a.width)[a.node]) for a in action.assignments)
        alive = (budget >= 0) & (time_left >= 0)
        return completed, budget, time_left, alive

    def rollout(self, completed: np.ndarray, budget: np.ndarray, time_left: np.ndarray, alive: np.ndarray,
                policy: RetryPolicy, rng: np.random.Generator) -> np.ndarray:
        """
        Follow ``policy`` closed-loop in every live simulation.

        A simulation dies when the policy's action is infeasible on the
        estimates or when realized consumption overdraws b or h. Arrays are
        updated in place.

        Returns:
            np.ndarray: Boolean success flag per simulation.
        """
        model, width = policy.model, policy.width
        unit_cost = width * self.cost[:, model]
        durations = self.node_durations(model, width)
        q = self.node_q(model, width)
        active = alive & ~completed.all(axis=1)
        while active.any():
            idx = np.flatnonzero(active)
            ready = self.ready(completed[idx])
            est_cost = (ready * unit_cost).sum(axis=1)
            est_duration = np.where(ready, durations, 0).max(axis=1)
            feasible = (est_cost <= budget[idx]) & (est_duration <= time_left[idx])
            alive[idx[~feasible]] = False
            idx, ready = idx[feasible], ready[feasible]
            if idx.size == 0:
                break

            if self.instance.is_empirical:
                succeeded = np.zeros_like(ready)
                cost = np.zeros(idx.size, dtype=np.int64)
                duration = np.zeros(idx.size, dtype=np.int64)
                for v in np.flatnonzero(ready.any(axis=0)):
                    rows = np.flatnonzero(ready[:, v])
                    node_ok, node_cost, node_time = self._draw_empirical(rows, int(v), model, width, rng)
                    succeeded[rows, v] = node_ok
                    cost[rows] += node_cost
                    duration[rows] = np.maximum(duration[rows], node_time)
            else:
                succeeded = ready & (rng.random(ready.shape) < q)
                cost = est_cost[feasible]
                duration = est_duration[feasible]

            completed[idx] |= succeeded
            budget[idx] -= cost
            time_left[idx] -= duration
            overdrawn = (budget[idx] < 0) | (time_left[idx] < 0)
            alive[idx[overdrawn]] = False
            active = alive & ~completed.all(axis=1)
        return alive & completed.all(axis=1)

    def estimate(self, state: ExecState, action: AllocationAction, continuation: RetryPolicy, n: int,
                 rng: np.random.Generator) -> float:
        """
        Fraction of n simulations that complete after ``action`` then ``continuation``.

        Returns 0.0 for an action infeasible from ``state``.
        """
        batch = self.apply_action(state, action, n, rng)
        if batch is None:
            return 0.0
        completed, budget, time_left, alive = batch
        successes = self.rollout(completed, budget, time_left, alive, continuation, rng)
        return float(np.count_nonzero(successes)) / n
