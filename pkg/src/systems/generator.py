"""
Synthetic workflow instances.

Builds chain, diamond-stack and random DAG workflows with a small model
catalog in which pricier models are also more reliable, so the planner faces a
genuine cost/quality trade-off. Generation is deterministic per seed; an
attempt that fails validation is retried with a fresh stream.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from config import (
    DEFAULT_POOL_SIZE,
    DEFAULT_TOKEN_CV,
    GENERATION_MAX_ATTEMPTS,
    STREAM_GENERATION,
    ExecutionMode,
    GraphShape,
)
from src.core.errors import GenerationError, InputError
from src.core.workflow import (
    ModelCatalog,
    ModelSpec,
    NodeModelProfile,
    ProfileTable,
    WorkflowGraph,
    WorkflowInstance,
    synthesize_pool,
    validate,
)
from src.utils.rng import derive_stream
from src.utils.units import seconds_to_ms, usd_to_micro

logger = logging.getLogger(__name__)

Range = Tuple[float, float]


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Recipe for one synthetic instance.

    Attributes:
        node_count (int): Number of subtasks.
        shape (GraphShape): Chain, diamond stack or random DAG.
        p_edge (float): Edge probability of the random DAG.
        model_count (int): Catalog size.
        p_range (Range): Range of single-attempt success probabilities.
        tokens_range (Range): Range of mean output lengths.
        price_range (Range): Range of prices per 1000 tokens, in USD.
        throughput_range (Range): Range of throughputs, tokens per second.
        mode (ExecutionMode): Parametric profiles or synthetic pools.
        pool_size (int): Records per (node, model) pool in empirical mode.
        budget_usd (float): Budget stored with the instance.
        deadline_s (float): Deadline stored with the instance.
        seed (int): Generation seed.
    """

    node_count: int
    shape: GraphShape = GraphShape.RANDOM
    p_edge: float = 0.3
    model_count: int = 3
    p_range: Range = (0.05, 0.9)
    tokens_range: Range = (200.0, 4000.0)
    price_range: Range = (0.0005, 0.02)
    throughput_range: Range = (30.0, 150.0)
    mode: ExecutionMode = ExecutionMode.PARAMETRIC
    pool_size: int = DEFAULT_POOL_SIZE
    budget_usd: float = 1.0
    deadline_s: float = 600.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shape", GraphShape(self.shape))
        object.__setattr__(self, "mode", ExecutionMode(self.mode))
        if self.node_count < 1:
            raise InputError(f"node_count must be >= 1, got {self.node_count}")
        if self.model_count < 1:
            raise InputError(f"model_count must be >= 1, got {self.model_count}")
        if not 0.0 <= self.p_edge <= 1.0:
            raise InputError(f"p_edge must lie in [0, 1], got {self.p_edge}")
        if self.pool_size < 1:
            raise InputError(f"pool_size must be >= 1, got {self.pool_size}")
        for name in ("p_range", "tokens_range", "price_range", "throughput_range"):
            low, high = getattr(self, name)
            if low > high:
                raise InputError(f"{name} is empty: {low} > {high}")


# ===== Shapes =====

def chain_edges(n: int) -> List[Tuple[int, int]]:
    return [(v, v + 1) for v in range(n - 1)]


def diamond_edges(n: int) -> List[Tuple[int, int]]:
    """
    Stack of diamonds: a root fans out to two branches that join again.

    Nodes left over after the last complete diamond are chained to its sink.
    """
    edges = []
    sink = 0
    v = 1
    while v + 2 < n:
        left, right, join = v, v + 1, v + 2
        edges += [(sink, left), (sink, right), (left, join), (right, join)]
        sink = join
        v += 3
    while v < n:
        edges.append((sink, v))
        sink = v
        v += 1
    return edges


def random_edges(n: int, p_edge: float, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Edge (u, v) for u < v with probability p_edge; acyclic by construction."""
    draws = rng.random((n, n))
    return [(u, v) for u in range(n) for v in range(u + 1, n) if draws[u, v] < p_edge]


def build_graph(spec: SyntheticSpec, rng: np.random.Generator) -> WorkflowGraph:
    if spec.shape is GraphShape.CHAIN:
        edges = chain_edges(spec.node_count)
    elif spec.shape is GraphShape.DIAMOND:
        edges = diamond_edges(spec.node_count)
    else:
        edges = random_edges(spec.node_count, spec.p_edge, rng)
    names = tuple(f"task-{v}" for v in range(spec.node_count))
    return WorkflowGraph(spec.node_count, tuple(edges), names)


# ===== Catalog and profiles =====

def build_catalog(spec: SyntheticSpec, rng: np.random.Generator) -> Tuple[ModelCatalog, np.ndarray]:
    """
    Models sorted by strength; price grows log-linearly with strength.

    Returns:
        Tuple[ModelCatalog, np.ndarray]: Catalog and per-model strength in [0, 1].
    """
    strength = np.sort(rng.random(spec.model_count))
    low, high = spec.price_range
    prices = np.exp(np.log(max(low, 1e-9)) + strength * (np.log(max(high, 1e-9)) - np.log(max(low, 1e-9))))
    t_low, t_high = spec.throughput_range
    throughput = t_high - strength * (t_high - t_low)
    models = tuple(
        ModelSpec(f"m{i}", round(float(prices[i]), 6), round(float(throughput[i]), 3))
        for i in range(spec.model_count)
    )
    return ModelCatalog(models), strength


def build_profiles(spec: SyntheticSpec, catalog: ModelCatalog, strength: np.ndarray,
                   rng: np.random.Generator) -> ProfileTable:
    """p mixes node ease with model strength; ℓ is a node length scaled per model."""
    ease = rng.random(spec.node_count)
    lengths = rng.uniform(*spec.tokens_range, size=spec.node_count)
    verbosity = rng.uniform(0.75, 1.25, size=(spec.node_count, spec.model_count))
    p_low, p_high = spec.p_range
    entries = {}
    for v in range(spec.node_count):
        for m, model in enumerate(catalog):
            p = p_low + (p_high - p_low) * (0.5 * ease[v] + 0.5 * strength[m])
            mean_tokens = max(1.0, round(float(lengths[v] * verbosity[v, m])))
            entries[(v, m)] = NodeModelProfile.derive(round(p, 6), mean_tokens, model)
    return ProfileTable(entries, spec.node_count, spec.model_count)


# ===== Entry point =====

def generate_instance(spec: SyntheticSpec, token_cv: float = DEFAULT_TOKEN_CV) -> WorkflowInstance:
    """
    Generate one valid synthetic instance.

    Args:
        spec (SyntheticSpec): Generation recipe.
        token_cv (float): Spread of synthetic pool token counts.

    Returns:
        WorkflowInstance: Instance passing validate(); empirical instances
        carry freshly synthesized pools.

    Raises:
        GenerationError: If no valid instance was found within the bounded
            number of attempts.
    """
    last_problem: Optional[str] = None
    for attempt in range(GENERATION_MAX_ATTEMPTS):
        rng = derive_stream(spec.seed, STREAM_GENERATION, attempt, 0)
        graph = build_graph(spec, rng)
        catalog, strength = build_catalog(spec, rng)
        profiles = build_profiles(spec, catalog, strength, rng)
        budget, deadline = usd_to_micro(spec.budget_usd), seconds_to_ms(spec.deadline_s)
        if spec.mode is ExecutionMode.EMPIRICAL:
            pool_rng = derive_stream(spec.seed, STREAM_GENERATION, attempt, 1)
            pools = synthesize_pool(profiles, catalog, spec.pool_size, pool_rng, token_cv)
            instance = WorkflowInstance.empirical(graph, catalog, pools, budget, deadline)
        else:
            instance = WorkflowInstance.parametric(graph, catalog, profiles, budget, deadline)
        violations = validate(instance)
        if not violations:
            logger.info("Generated %s instance with %d nodes, %d edges (attempt %d)",
                        spec.shape.value, graph.node_count, len(graph.edges), attempt)
            return instance
        last_problem = violations[0].message
        logger.warning("Generation attempt %d rejected: %s", attempt, last_problem)
    raise GenerationError(f"No valid instance after {GENERATION_MAX_ATTEMPTS} attempts; last problem: {last_problem}")
