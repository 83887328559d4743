"""
Stochastic execution engine.

This module implements one decision round of workflow execution: the state
s = (S, b, h), allocation actions, their cost C(a) and duration Δ(a),
feasibility, subset-transition probabilities, and seeded sampling of realized
outcomes in both parametric and empirical modes.

All functions are pure: states are immutable values and randomness comes
only from the generator passed in.
"""

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from src.core.errors import ContractViolation, InputError
from src.core.workflow import ProfileTable, WorkflowGraph, WorkflowInstance, mask_of, nodes_of
from src.utils.units import token_cost_micro

BatchLatency = Optional[Callable[[int], float]]


@dataclass(frozen=True)
class ExecState:
    """
    Planner and simulator state.

    Attributes:
        completed_mask (int): Completed set S as a node bitmask.
        remaining_budget (int): b, micro-USD; negative only after an overdraw.
        remaining_time (int): h, milliseconds; negative only after an overrun.
        elapsed (int): Milliseconds consumed so far.
        spent (int): Micro-USD consumed so far.
    """

    completed_mask: int
    remaining_budget: int
    remaining_time: int
    elapsed: int = 0
    spent: int = 0

    @property
    def completed(self) -> FrozenSet[int]:
        return frozenset(nodes_of(self.completed_mask))

    def is_complete(self, graph: WorkflowGraph) -> bool:
        return self.completed_mask == graph.full_mask

    @property
    def is_overdrawn(self) -> bool:
        """True once realized consumption exceeded the budget or the deadline."""
        return self.remaining_budget < 0 or self.remaining_time < 0

    def key(self) -> Tuple[int, int, int]:
        """Exact memoisation key (S, b, h)."""
        return (self.completed_mask, self.remaining_budget, self.remaining_time)


def initial_state(instance: WorkflowInstance) -> ExecState:
    """State (∅, B, D) at the start of a run."""
    return ExecState(0, instance.budget_micro, instance.deadline_ms)


def state_from(completed: Iterable[int], budget_micro: int, time_ms: int) -> ExecState:
    """Convenience constructor from a node collection."""
    return ExecState(mask_of(completed), int(budget_micro), int(time_ms))


class Assignment(NamedTuple):
    """(node, model index, width) for one ready node."""
    node: int
    model: int
    width: int


@dataclass(frozen=True)
class AllocationAction:
    """
    Allocation of a model and a sampling width to every ready node.

    The assignments are kept sorted by node, so the tuple itself is the
    canonical encoding used for deduplication and lexicographic tie-breaking.
    """

    assignments: Tuple[Assignment, ...]

    def __post_init__(self):
        ordered = tuple(sorted(Assignment(int(n), int(m), int(k)) for n, m, k in self.assignments))
        nodes = [a.node for a in ordered]
        if len(set(nodes)) != len(nodes):
            raise InputError(f"Action assigns a node more than once: {nodes}")
        for a in ordered:
            if a.width < 1:
                raise InputError(f"Width must be a positive integer, got {a.width} for node {a.node}")
        object.__setattr__(self, "assignments", ordered)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, Tuple[int, int]]) -> "AllocationAction":
        """Build from {node: (model index, width)}."""
        return cls(tuple(Assignment(v, m, k) for v, (m, k) in mapping.items()))

    @classmethod
    def homogeneous(cls, nodes: Iterable[int], model: int, width: int) -> "AllocationAction":
        return cls(tuple(Assignment(v, model, width) for v in nodes))

    def as_mapping(self) -> Dict[int, Tuple[int, int]]:
        return {a.node: (a.model, a.width) for a in self.assignments}

    @property
    def nodes(self) -> Tuple[int, ...]:
        return tuple(a.node for a in self.assignments)

    @property
    def nodes_mask(self) -> int:
        return mask_of(self.nodes)

    @property
    def encoding(self) -> Tuple[Assignment, ...]:
        return self.assignments

    def __len__(self) -> int:
        return len(self.assignments)


@dataclass(frozen=True)
class NodeDetail:
    """
    What happened to one node during a transition.

    Attributes:
        node (int): Node index.
        model (int): Model index used.
        width (int): Number of samples launched.
        succeeded (bool): Whether any sample succeeded.
        success_count (Optional[int]): Successful samples (empirical mode only).
        sample_indices (Tuple[int, ...]): Pool records drawn (empirical mode only).
        cost (int): Micro-USD charged for this node.
        duration (int): Milliseconds this node took.
    """

    node: int
    model: int
    width: int
    succeeded: bool
    success_count: Optional[int]
    sample_indices: Tuple[int, ...]
    cost: int
    duration: int


@dataclass(frozen=True)
class TransitionOutcome:
    """
    Realized result of executing one action.

    Attributes:
        completed_now (FrozenSet[int]): U, the nodes completed this round.
        cost (int): Micro-USD charged.
        duration (int): Milliseconds consumed.
        details (Tuple[NodeDetail, ...]): Per-node breakdown.
    """

    completed_now: FrozenSet[int]
    cost: int
    duration: int
    details: Tuple[NodeDetail, ...] = ()


# ===== Closed-form quantities =====

def success_prob(p: float, k: int) -> float:
    """
    Probability that at least one of k independent samples succeeds.

    Computes q(k) = 1 - (1 - p)^k as -expm1(k log1p(-p)) for accuracy near
    p = 0 and p = 1.

    Args:
        p (float): Single-attempt success probability in [0, 1].
        k (int): Number of samples, k >= 1.

    Returns:
        float: q(k).

    Raises:
        InputError: If p is outside [0, 1] or k < 1.
    """
    if not 0.0 <= p <= 1.0:
        raise InputError(f"Probability must lie in [0, 1], got {p}")
    if int(k) != k or k < 1:
        raise InputError(f"Width must be a positive integer, got {k}")
    if p == 1.0:
        return 1.0
    if p == 0.0:
        return 0.0
    return -math.expm1(k * math.log1p(-p))


def success_prob_array(p: np.ndarray, k: int) -> np.ndarray:
    """Vectorised success_prob for validated inputs."""
    with np.errstate(divide="ignore"):
        q = -np.expm1(k * np.log1p(-p))
    return np.where(p >= 1.0, 1.0, np.where(p <= 0.0, 0.0, q))


def node_duration(latency_ms: int, width: int, batch_latency: BatchLatency = None) -> int:
    """Δ_{v,m}(k): τ under ideal parallelism, else τ scaled by the batch-latency hook."""
    if batch_latency is None:
        return latency_ms
    return int(math.ceil(latency_ms * batch_latency(width)))


def action_cost(action: AllocationAction, profiles: ProfileTable) -> int:
    """
    C(a) = Σ_v k_v c_{v,m_v}, in micro-USD.

    Raises:
        InputError: If an assignment has no profile.
    """
    return sum(a.width * profiles.get(a.node, a.model).cost_micro for a in action.assignments)


def action_duration(action: AllocationAction, profiles: ProfileTable, batch_latency: BatchLatency = None) -> int:
    """
    Δ(a) = max_v Δ_{v,m_v}(k_v), in milliseconds; 0 for an empty action.

    Raises:
        InputError: If an assignment has no profile.
    """
    return max(
        (node_duration(profiles.get(a.node, a.model).latency_ms, a.width, batch_latency)
         for a in action.assignments),
        default=0,
    )


def is_feasible(state: ExecState, action: AllocationAction, profiles: ProfileTable,
                batch_latency: BatchLatency = None) -> bool:
    """True iff C(a) <= b and Δ(a) <= h (both bounds inclusive)."""
    return (action_cost(action, profiles) <= state.remaining_budget
            and action_duration(action, profiles, batch_latency) <= state.remaining_time)


def subset_probability(state: ExecState, action: AllocationAction, subset: Iterable[int],
                       profiles: ProfileTable) -> float:
    """
    Pr(U | s, a) = Π_{v∈U} q_v · Π_{v∈R\\U} (1 - q_v).

    Args:
        state (ExecState): Current state (its ready set is the action's node set).
        action (AllocationAction): Action covering R(S).
        subset (Iterable[int]): Candidate completed set U.
        profiles (ProfileTable): Parametric statistics.

    Returns:
        float: Probability of exactly U completing.

    Raises:
        InputError: If U is not a subset of the action's nodes.
    """
    subset_mask = mask_of(subset)
    if subset_mask & ~action.nodes_mask:
        raise InputError(f"Subset {sorted(nodes_of(subset_mask))} is not contained in the ready set "
                         f"{list(action.nodes)}")
    probability = 1.0
    for a in action.assignments:
        q = success_prob(profiles.get(a.node, a.model).p, a.width)
        probability *= q if subset_mask >> a.node & 1 else 1.0 - q
    return probability


# ===== Sampling =====

def sample_transition(state: ExecState, action: AllocationAction, instance: WorkflowInstance,
                      rng: np.random.Generator, check_feasibility: bool = True) -> TransitionOutcome:
    """
    Draw the realized outcome of executing ``action`` from ``state``.

    Parametric mode: node v completes with probability q_{v,m_v}(k_v); cost and
    duration are C(a) and Δ(a). Empirical mode: k_v records are drawn with
    replacement from pool(v, m_v); the node completes iff any record succeeded,
    its duration is the maximum drawn latency and its cost is the drawn tokens
    at the model price.

    Args:
        state (ExecState): Current state.
        action (AllocationAction): Action to execute.
        instance (WorkflowInstance): Workflow instance.
        rng (np.random.Generator): Stream for this transition.
        check_feasibility (bool): Set False when the caller already checked
            feasibility against the estimates it planned with.

    Returns:
        TransitionOutcome: Realized outcome.

    Raises:
        ContractViolation: If the action is infeasible on the (estimated) profiles.
    """
    if check_feasibility and not is_feasible(state, action, instance.profiles, instance.batch_latency):
        raise ContractViolation(
            f"Action {action.as_mapping()} is infeasible from b={state.remaining_budget}, "
            f"h={state.remaining_time}"
        )
    if instance.is_empirical:
        return _sample_empirical(action, instance, rng)
    return _sample_parametric(action, instance, rng)


def _sample_parametric(action: AllocationAction, instance: WorkflowInstance,
                       rng: np.random.Generator) -> TransitionOutcome:
    draws = rng.random(len(action))
    completed = []
    details = []
    for a, u in zip(action.assignments, draws):
        profile = instance.profiles.get(a.node, a.model)
        succeeded = bool(u < success_prob(profile.p, a.width))
        if succeeded:
            completed.append(a.node)
        details.append(NodeDetail(
            node=a.node, model=a.model, width=a.width, succeeded=succeeded, success_count=None,
            sample_indices=(), cost=a.width * profile.cost_micro,
            duration=node_duration(profile.latency_ms, a.width, instance.batch_latency),
        ))
    return TransitionOutcome(
        completed_now=frozenset(completed),
        cost=action_cost(action, instance.profiles),
        duration=action_duration(action, instance.profiles, instance.batch_latency),
        details=tuple(details),
    )


def _sample_empirical(action: AllocationAction, instance: WorkflowInstance,
                      rng: np.random.Generator) -> TransitionOutcome:
    completed = []
    details = []
    for a in action.assignments:
        samples = instance.pools.get(a.node, a.model)
        indices = rng.integers(0, len(samples), size=a.width)
        success_count = int(np.count_nonzero(samples.success[indices]))
        cost = token_cost_micro(int(samples.tokens[indices].sum()), instance.catalog[a.model].price_per_1k_usd)
        duration = int(samples.latency_ms[indices].max())
        if success_count > 0:
            completed.append(a.node)
        details.append(NodeDetail(
            node=a.node, model=a.model, width=a.width, succeeded=success_count > 0,
            success_count=success_count, sample_indices=tuple(int(i) for i in indices),
            cost=cost, duration=duration,
        ))
    return TransitionOutcome(
        completed_now=frozenset(completed),
        cost=sum(d.cost for d in details),
        duration=max((d.duration for d in details), default=0),
        details=tuple(details),
    )


def apply_outcome(state: ExecState, action: AllocationAction, outcome: TransitionOutcome) -> ExecState:
    """
    s' = (S ∪ U, b - C, h - Δ) with elapsed and spent updated.

    The input state is left untouched.
    """
    return replace(
        state,
        completed_mask=state.completed_mask | mask_of(outcome.completed_now),
        remaining_budget=state.remaining_budget - outcome.cost,
        remaining_time=state.remaining_time - outcome.duration,
        elapsed=state.elapsed + outcome.duration,
        spent=state.spent + outcome.cost,
    )
