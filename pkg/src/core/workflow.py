"""
Workflow instance model.

This module defines the dependency graph, the model catalog, per-(node, model)
statistics (parametric profiles or empirical rollout pools) and the workflow
instance that bundles them with a budget and a deadline. It also provides the
graph queries (ready set, topological order) and instance validation.

Nodes are dense integer indices; string names only appear at the I/O boundary.
Completed sets are carried internally as integer bitmasks.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULT_TOKEN_CV, ExecutionMode
from src.core.errors import InputError
from src.utils.units import generation_latency_ms, latency_s_to_ms, token_cost_micro

PairKey = Tuple[int, int]


# ===== Graph =====

@dataclass(frozen=True)
class WorkflowGraph:
    """
    Directed acyclic graph of subtasks.

    Attributes:
        node_count (int): Number of nodes; nodes are 0..node_count-1.
        edges (Tuple[Tuple[int, int], ...]): Pairs (u, v) meaning v depends on u.
        names (Tuple[str, ...]): Optional display names, one per node.
    """

    node_count: int
    edges: Tuple[Tuple[int, int], ...] = ()
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def nodes(self) -> range:
        return range(self.node_count)

    @property
    def full_mask(self) -> int:
        """Bitmask with every node set."""
        return (1 << self.node_count) - 1

    def name(self, node: int) -> str:
        """Display name of ``node`` (its index when unnamed)."""
        if node < len(self.names) and self.names[node]:
            return self.names[node]
        return str(node)

    @cached_property
    def pred_masks(self) -> Tuple[int, ...]:
        """Predecessor bitmask per node; edges with unknown endpoints are ignored."""
        masks = [0] * self.node_count
        for u, v in self.edges:
            if 0 <= u < self.node_count and 0 <= v < self.node_count:
                masks[v] |= 1 << u
        return tuple(masks)

    @cached_property
    def dependency_matrix(self) -> np.ndarray:
        """Integer matrix D with D[u, v] = 1 iff v depends on u."""
        matrix = np.zeros((self.node_count, self.node_count), dtype=np.int32)
        for u, v in self.edges:
            if 0 <= u < self.node_count and 0 <= v < self.node_count:
                matrix[u, v] = 1
        return matrix

    def ready_mask(self, completed_mask: int) -> int:
        """Bitmask form of R(S)."""
        ready = 0
        for v in self.nodes:
            if not completed_mask >> v & 1 and self.pred_masks[v] & ~completed_mask == 0:
                ready |= 1 << v
        return ready


def mask_of(nodes: Iterable[int]) -> int:
    """Bitmask of a node collection."""
    mask = 0
    for v in nodes:
        mask |= 1 << int(v)
    return mask


def nodes_of(mask: int) -> Tuple[int, ...]:
    """Sorted node indices set in ``mask``."""
    nodes = []
    v = 0
    while mask:
        if mask & 1:
            nodes.append(v)
        mask >>= 1
        v += 1
    return tuple(nodes)


def ready_set(graph: WorkflowGraph, completed: Iterable[int]) -> FrozenSet[int]:
    """
    Compute R(S): the nodes not yet completed whose predecessors are all completed.

    Args:
        graph (WorkflowGraph): The workflow graph.
        completed (Iterable[int]): Completed node indices S.

    Returns:
        FrozenSet[int]: The ready set.

    Raises:
        InputError: If ``completed`` names a node outside the graph.
    """
    completed = set(completed)
    unknown = sorted(v for v in completed if not 0 <= v < graph.node_count)
    if unknown:
        raise InputError(f"Unknown node ids in completed set: {unknown}")
    return frozenset(nodes_of(graph.ready_mask(mask_of(completed))))


def topological_order(graph: WorkflowGraph) -> Tuple[int, ...]:
    """
    Kahn's algorithm; ties resolved by smallest index.

    Raises:
        InputError: If the graph contains a cycle.
    """
    indegree = [bin(mask).count("1") for mask in graph.pred_masks]
    successors: Dict[int, List[int]] = {v: [] for v in graph.nodes}
    for u, v in set(graph.edges):
        if 0 <= u < graph.node_count and 0 <= v < graph.node_count:
            successors[u].append(v)
    frontier = sorted(v for v in graph.nodes if indegree[v] == 0)
    order = []
    while frontier:
        u = frontier.pop(0)
        order.append(u)
        for v in sorted(successors[u]):
            indegree[v] -= 1
            if indegree[v] == 0:
                frontier.append(v)
        frontier.sort()
    if len(order) != graph.node_count:
        stuck = sorted(set(graph.nodes) - set(order))
        raise InputError(f"Workflow graph contains a cycle through nodes {stuck}")
    return tuple(order)


# ===== Models =====

@dataclass(frozen=True)
class ModelSpec:
    """
    One entry of the model catalog.

    Attributes:
        id (str): Model identifier.
        price_per_1k_usd (float): Price per 1000 output tokens.
        tokens_per_second (float): Generation throughput.
    """

    id: str
    price_per_1k_usd: float
    tokens_per_second: float


@dataclass(frozen=True)
class ModelCatalog:
    """Ordered collection of models; models are referenced by index internally."""

    models: Tuple[ModelSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, index: int) -> ModelSpec:
        return self.models[index]

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(m.id for m in self.models)

    def index(self, model_id: str) -> int:
        """
        Index of a model identifier.

        Raises:
            InputError: If the identifier is not in the catalog.
        """
        for i, model in enumerate(self.models):
            if model.id == model_id:
                return i
        raise InputError(f"Unknown model id {model_id!r}; catalog has {list(self.ids)}")


# ===== Profiles =====

@dataclass(frozen=True)
class NodeModelProfile:
    """
    Statistics of one (node, model) pair.

    Attributes:
        p (float): Single-attempt success probability.
        mean_tokens (float): Expected output tokens per attempt.
        cost_micro (int): Per-attempt cost c_{v,m} in micro-USD.
        latency_ms (int): Per-attempt latency τ_{v,m} in milliseconds.
    """

    p: float
    mean_tokens: float
    cost_micro: int
    latency_ms: int

    @classmethod
    def derive(cls, p: float, mean_tokens: float, model: ModelSpec) -> "NodeModelProfile":
        """Build a profile from (p, ℓ) using the model's price and throughput."""
        return cls(
            p=float(p),
            mean_tokens=float(mean_tokens),
            cost_micro=token_cost_micro(mean_tokens, model.price_per_1k_usd),
            latency_ms=generation_latency_ms(mean_tokens, model.tokens_per_second),
        )


class ProfileTable:
    """
    Immutable table of NodeModelProfile entries keyed by (node, model index).

    Attributes:
        node_count (int): Number of nodes in the workflow.
        model_count (int): Number of catalog models.
    """

    def __init__(self, entries: Mapping[PairKey, NodeModelProfile], node_count: int, model_count: int):
        self._entries = dict(entries)
        self.node_count = node_count
        self.model_count = model_count

    def __contains__(self, key: PairKey) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ProfileTable) and dict(self._entries) == dict(other._entries)

    def items(self):
        return self._entries.items()

    def get(self, node: int, model: int) -> NodeModelProfile:
        """
        Profile of one pair.

        Raises:
            InputError: If the pair has no profile.
        """
        try:
            return self._entries[(node, model)]
        except KeyError:
            raise InputError(f"Missing profile for node {node}, model index {model}") from None

    @cached_property
    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Dense (node, model) arrays of p, cost (micro-USD) and latency (ms).

        Missing pairs carry p = 0, zero cost and zero latency; callers only
        index pairs that validation guarantees.
        """
        p = np.zeros((self.node_count, self.model_count), dtype=np.float64)
        cost = np.zeros((self.node_count, self.model_count), dtype=np.int64)
        latency = np.zeros((self.node_count, self.model_count), dtype=np.int64)
        for (v, m), profile in self._entries.items():
            if 0 <= v < self.node_count and 0 <= m < self.model_count:
                p[v, m] = profile.p
                cost[v, m] = profile.cost_micro
                latency[v, m] = profile.latency_ms
        return p, cost, latency


# ===== Rollout pools =====

@dataclass(frozen=True, eq=False)
class PoolSamples:
    """
    Recorded attempts of one (node, model) pair.

    Attributes:
        success (np.ndarray): Boolean success flag per record.
        tokens (np.ndarray): Output token count per record.
        latency_s (np.ndarray): Recorded latency in seconds per record.
    """

    success: np.ndarray
    tokens: np.ndarray
    latency_s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "success", np.asarray(self.success, dtype=bool))
        object.__setattr__(self, "tokens", np.asarray(self.tokens, dtype=np.int64))
        object.__setattr__(self, "latency_s", np.asarray(self.latency_s, dtype=np.float64))
        for array in (self.success, self.tokens, self.latency_s):
            array.setflags(write=False)

    def __len__(self) -> int:
        return int(self.success.shape[0])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PoolSamples)
            and np.array_equal(self.success, other.success)
            and np.array_equal(self.tokens, other.tokens)
            and np.array_equal(self.latency_s, other.latency_s)
        )

    @cached_property
    def latency_ms(self) -> np.ndarray:
        values = np.array([latency_s_to_ms(x) for x in self.latency_s], dtype=np.int64)
        values.setflags(write=False)
        return values

    @classmethod
    def from_records(cls, records: Sequence[Tuple[bool, int, float]]) -> "PoolSamples":
        """Build from (success, tokens, latency_s) triples."""
        if not records:
            return cls(np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64), np.zeros(0))
        success, tokens, latency = zip(*records)
        return cls(np.array(success), np.array(tokens), np.array(latency))


class RolloutPool:
    """Immutable mapping from (node, model index) to PoolSamples."""

    def __init__(self, samples: Mapping[PairKey, PoolSamples]):
        self._samples = dict(samples)

    def __contains__(self, key: PairKey) -> bool:
        return key in self._samples

    def __len__(self) -> int:
        return len(self._samples)

    def __eq__(self, other) -> bool:
        return isinstance(other, RolloutPool) and dict(self._samples) == dict(other._samples)

    def pairs(self) -> List[PairKey]:
        return sorted(self._samples)

    def items(self):
        return ((key, self._samples[key]) for key in self.pairs())

    def get(self, node: int, model: int) -> PoolSamples:
        """
        Samples of one pair.

        Raises:
            InputError: If the pair has no pool.
        """
        try:
            return self._samples[(node, model)]
        except KeyError:
            raise InputError(f"Missing rollout pool for node {node}, model index {model}") from None

    def replace(self, updates: Mapping[PairKey, PoolSamples]) -> "RolloutPool":
        """Return a new pool with some pairs replaced."""
        merged = dict(self._samples)
        merged.update(updates)
        return RolloutPool(merged)


def derive_profile(pool: RolloutPool, catalog: ModelCatalog, node_count: Optional[int] = None) -> ProfileTable:
    """
    Derive parametric profiles from empirical pools.

    p is the raw success fraction (no smoothing) and ℓ the arithmetic mean of
    the recorded token counts; cost and latency follow from the catalog.

    Args:
        pool (RolloutPool): Empirical samples.
        catalog (ModelCatalog): Pricing and throughput per model.
        node_count (Optional[int]): Node count of the workflow; inferred from
            the pool when omitted.

    Returns:
        ProfileTable: One profile per pool pair.

    Raises:
        InputError: If any pair in the pool is empty.
    """
    entries = {}
    for (v, m), samples in pool.items():
        if len(samples) == 0:
            raise InputError(f"Empty rollout pool for node {v}, model {catalog[m].id}")
        p = float(np.count_nonzero(samples.success)) / len(samples)
        mean_tokens = float(samples.tokens.mean())
        entries[(v, m)] = NodeModelProfile.derive(p, mean_tokens, catalog[m])
    if node_count is None:
        node_count = 1 + max((v for v, _ in entries), default=-1)
    return ProfileTable(entries, node_count, len(catalog))


def synthesize_pool(
    profiles: ProfileTable,
    catalog: ModelCatalog,
    n: int,
    rng: np.random.Generator,
    token_cv: float = DEFAULT_TOKEN_CV,
) -> RolloutPool:
    """
    Draw a synthetic rollout pool matching parametric profiles.

    Each of the ``n`` records per pair has a Bernoulli(p) success flag, a
    token count drawn around ℓ (normal with coefficient of variation
    ``token_cv``, at least 1) and latency tokens / throughput.

    Args:
        profiles (ProfileTable): Target (p, ℓ) per pair.
        catalog (ModelCatalog): Model throughputs.
        n (int): Records per pair.
        rng (np.random.Generator): Random stream.
        token_cv (float): Relative spread of token counts; 0 makes them constant.

    Returns:
        RolloutPool: Fresh pool.
    """
    if n < 1:
        raise InputError(f"Pool size must be positive, got {n}")
    samples = {}
    for (v, m), profile in sorted(profiles.items()):
        success = rng.random(n) < profile.p
        if token_cv > 0:
            raw = rng.normal(profile.mean_tokens, token_cv * profile.mean_tokens, size=n)
        else:
            raw = np.full(n, profile.mean_tokens)
        tokens = np.maximum(1, np.rint(raw)).astype(np.int64)
        latency_s = tokens / catalog[m].tokens_per_second
        samples[(v, m)] = PoolSamples(success, tokens, latency_s)
    return RolloutPool(samples)


# ===== Instance =====

@dataclass(frozen=True)
class WorkflowInstance:
    """
    A workflow execution instance I = (G, M, Φ, B, D).

    Attributes:
        graph (WorkflowGraph): Dependency DAG.
        catalog (ModelCatalog): Available models.
        mode (ExecutionMode): Parametric profiles or empirical pools.
        profiles (ProfileTable): Parametric statistics; in empirical mode the
            cached estimates derived from ``pools``.
        pools (Optional[RolloutPool]): Empirical samples (empirical mode only).
        budget_micro (int): Budget B in micro-USD.
        deadline_ms (int): Deadline D in milliseconds.
        batch_latency (Optional[Callable[[int], float]]): Multiplier of τ as a
            function of width k; None means ideal parallelism.
    """

    graph: WorkflowGraph
    catalog: ModelCatalog
    mode: ExecutionMode
    profiles: ProfileTable
    pools: Optional[RolloutPool] = None
    budget_micro: int = 0
    deadline_ms: int = 0
    batch_latency: Optional[Callable[[int], float]] = field(default=None, compare=False)

    @classmethod
    def parametric(cls, graph: WorkflowGraph, catalog: ModelCatalog, profiles: ProfileTable,
                   budget_micro: int, deadline_ms: int, **kwargs) -> "WorkflowInstance":
        return cls(graph, catalog, ExecutionMode.PARAMETRIC, profiles, None, budget_micro, deadline_ms, **kwargs)

    @classmethod
    def empirical(cls, graph: WorkflowGraph, catalog: ModelCatalog, pools: RolloutPool,
                  budget_micro: int, deadline_ms: int, **kwargs) -> "WorkflowInstance":
        """Empirical instance; empty pool pairs are left for validate() to report."""
        filled = RolloutPool({key: s for key, s in pools.items() if len(s) > 0})
        profiles = derive_profile(filled, catalog, graph.node_count)
        return cls(graph, catalog, ExecutionMode.EMPIRICAL, profiles, pools, budget_micro, deadline_ms, **kwargs)

    @property
    def is_empirical(self) -> bool:
        return self.mode is ExecutionMode.EMPIRICAL

    def with_constraints(self, budget_micro: int, deadline_ms: int) -> "WorkflowInstance":
        return replace(self, budget_micro=int(budget_micro), deadline_ms=int(deadline_ms))

    def with_pools(self, pools: RolloutPool) -> "WorkflowInstance":
        """Copy of an empirical instance backed by different pools."""
        if not self.is_empirical:
            raise InputError("with_pools requires an empirical instance")
        return WorkflowInstance.empirical(
            self.graph, self.catalog, pools, self.budget_micro, self.deadline_ms, batch_latency=self.batch_latency
        )

    def restrict_models(self, model_ids: Sequence[str]) -> "WorkflowInstance":
        """Copy keeping only the listed models, re-indexed in the given order."""
        old_indices = [self.catalog.index(mid) for mid in model_ids]
        catalog = ModelCatalog(tuple(self.catalog[i] for i in old_indices))
        remap = {old: new for new, old in enumerate(old_indices)}
        if self.is_empirical:
            pools = RolloutPool({(v, remap[m]): s for (v, m), s in self.pools.items() if m in remap})
            return WorkflowInstance.empirical(self.graph, catalog, pools, self.budget_micro,
                                              self.deadline_ms, batch_latency=self.batch_latency)
        entries = {(v, remap[m]): prof for (v, m), prof in self.profiles.items() if m in remap}
        profiles = ProfileTable(entries, self.graph.node_count, len(catalog))
        return replace(self, catalog=catalog, profiles=profiles)


# ===== Validation =====

@dataclass(frozen=True)
class Violation:
    """
    One invariant violation found by validate().

    Attributes:
        kind (str): Short category, e.g. "cycle" or "probability-range".
        message (str): Human-readable description.
        node (Optional[int]): Node involved, if any.
        model (Optional[str]): Model id involved, if any.
    """

    kind: str
    message: str
    node: Optional[int] = None
    model: Optional[str] = None


def validate(instance: WorkflowInstance) -> List[Violation]:
    """
    Collect every invariant violation of an instance.

    Args:
        instance (WorkflowInstance): Instance to check.

    Returns:
        List[Violation]: Empty when the instance is valid.
    """
    violations: List[Violation] = []
    graph = instance.graph
    violations.extend(_graph_violations(graph))

    for model in instance.catalog:
        if not model.tokens_per_second > 0:
            violations.append(Violation("throughput", f"Model {model.id} has non-positive throughput "
                                        f"{model.tokens_per_second}", model=model.id))
        if model.price_per_1k_usd < 0:
            violations.append(Violation("price", f"Model {model.id} has negative price "
                                        f"{model.price_per_1k_usd}", model=model.id))
    if len(set(instance.catalog.ids)) != len(instance.catalog):
        violations.append(Violation("duplicate-model", "Model identifiers are not unique"))

    for v in graph.nodes:
        for m, model in enumerate(instance.catalog):
            if instance.is_empirical:
                violations.extend(_pool_violations(instance, v, m, model))
            if (v, m) not in instance.profiles:
                if not instance.is_empirical:
                    violations.append(Violation("missing-profile", f"No profile for node {v}, model {model.id}",
                                                node=v, model=model.id))
                continue
            profile = instance.profiles.get(v, m)
            if not 0.0 <= profile.p <= 1.0:
                violations.append(Violation("probability-range", f"p = {profile.p} outside [0, 1] at node {v}, "
                                            f"model {model.id}", node=v, model=model.id))
            if not profile.mean_tokens > 0:
                violations.append(Violation("mean-tokens", f"Non-positive mean tokens {profile.mean_tokens} "
                                            f"at node {v}, model {model.id}", node=v, model=model.id))
            if profile.latency_ms <= 0:
                violations.append(Violation("latency", f"Non-positive latency at node {v}, model {model.id}",
                                            node=v, model=model.id))
            if profile.cost_micro < 0:
                violations.append(Violation("cost", f"Negative cost at node {v}, model {model.id}",
                                            node=v, model=model.id))

    if instance.budget_micro < 0:
        violations.append(Violation("budget", f"Negative budget {instance.budget_micro} micro-USD"))
    if instance.deadline_ms < 0:
        violations.append(Violation("deadline", f"Negative deadline {instance.deadline_ms} ms"))
    return violations


def _graph_violations(graph: WorkflowGraph) -> List[Violation]:
    """Structural checks: endpoints, self-loops, duplicates, cycles."""
    violations = []
    seen = set()
    for u, v in graph.edges:
        if not (0 <= u < graph.node_count and 0 <= v < graph.node_count):
            violations.append(Violation("edge-endpoint", f"Edge ({u}, {v}) references a missing node"))
            continue
        if u == v:
            violations.append(Violation("self-loop", f"Self-loop on node {u}", node=u))
        if (u, v) in seen:
            violations.append(Violation("duplicate-edge", f"Duplicate edge ({u}, {v})", node=v))
        seen.add((u, v))
    if graph.names and len(graph.names) != graph.node_count:
        violations.append(Violation("names", f"{len(graph.names)} names for {graph.node_count} nodes"))
    try:
        topological_order(graph)
    except InputError as e:
        violations.append(Violation("cycle", str(e)))
    return violations


def _pool_violations(instance: WorkflowInstance, v: int, m: int, model: ModelSpec) -> List[Violation]:
    if instance.pools is None or (v, m) not in instance.pools:
        return [Violation("missing-pool", f"No rollout pool for node {v}, model {model.id}", node=v, model=model.id)]
    samples = instance.pools.get(v, m)
    violations = []
    if len(samples) == 0:
        violations.append(Violation("empty-pool", f"Empty rollout pool for node {v}, model {model.id}",
                                    node=v, model=model.id))
    if np.any(samples.tokens <= 0):
        violations.append(Violation("pool-tokens", f"Non-positive token count in pool of node {v}, "
                                    f"model {model.id}", node=v, model=model.id))
    if np.any(samples.latency_s <= 0):
        violations.append(Violation("latency", f"Non-positive recorded latency in pool of node {v}, "
                                    f"model {model.id}", node=v, model=model.id))
    return violations
