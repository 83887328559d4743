"""
Workflow and rollout-pool file I/O.

Workflow files are UTF-8 JSON documents; empirical pools live next to them in
a JSON Lines file referenced by a relative path. The pydantic schemas below
only check structure and types. Domain invariants (probability ranges,
acyclicity, positive throughputs, ...) are reported by validate() so that a
malformed-but-parseable file can still be inspected.
"""

import json
import logging
import os
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config import ExecutionMode
from src.core.errors import WorkflowParseError
from src.core.workflow import (
    ModelCatalog,
    ModelSpec,
    NodeModelProfile,
    PoolSamples,
    ProfileTable,
    RolloutPool,
    WorkflowGraph,
    WorkflowInstance,
)
from src.utils.units import micro_to_usd, ms_to_seconds, seconds_to_ms, usd_to_micro

logger = logging.getLogger(__name__)

DEFAULT_POOLS_FILENAME = "pools.jsonl"


# ===== Schemas =====

class NodeRecord(BaseModel):
    """One workflow node."""

    model_config = ConfigDict(extra="forbid")

    id: int = Field(ge=0)
    name: str = ""


class ModelRecord(BaseModel):
    """One catalog entry."""

    model_config = ConfigDict(extra="forbid")

    id: str
    price_per_1k_tokens_usd: float
    tokens_per_second: float


class ProfileRecord(BaseModel):
    """Parametric statistics of one (node, model) pair."""

    model_config = ConfigDict(extra="forbid")

    node: int
    model: str
    p: float
    mean_tokens: float


class PoolRecord(BaseModel):
    """One recorded attempt, one line of a pool file."""

    model_config = ConfigDict(extra="forbid")

    node: int
    model: str
    success: bool
    tokens: int
    latency_s: float


class WorkflowDocument(BaseModel):
    """Top-level workflow file."""

    model_config = ConfigDict(extra="forbid")

    nodes: List[NodeRecord]
    edges: List[Tuple[int, int]] = Field(default_factory=list)
    models: List[ModelRecord]
    mode: ExecutionMode
    profiles: Optional[List[ProfileRecord]] = None
    pools: Optional[str] = None
    budget_usd: float = 0.0
    deadline_s: float = 0.0


# ===== Reading =====

def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except (OSError, UnicodeDecodeError) as e:
        raise WorkflowParseError(f"Cannot read {path}: {e}") from e


def _build_graph(document: WorkflowDocument) -> WorkflowGraph:
    ids = sorted(node.id for node in document.nodes)
    if ids != list(range(len(ids))):
        raise WorkflowParseError(f"Node ids must be 0..{len(ids) - 1} without gaps, got {ids}")
    names = {node.id: node.name or f"node-{node.id}" for node in document.nodes}
    return WorkflowGraph(len(ids), tuple((int(u), int(v)) for u, v in document.edges),
                         tuple(names[v] for v in range(len(ids))))


def _model_index(catalog: ModelCatalog, model_id: str, where: str) -> int:
    if model_id not in catalog.ids:
        raise WorkflowParseError(f"{where} references unknown model {model_id!r}")
    return catalog.ids.index(model_id)


def _build_profiles(document: WorkflowDocument, graph: WorkflowGraph, catalog: ModelCatalog) -> ProfileTable:
    entries: Dict[Tuple[int, int], NodeModelProfile] = {}
    for record in document.profiles or []:
        m = _model_index(catalog, record.model, f"Profile of node {record.node}")
        if not 0 <= record.node < graph.node_count:
            raise WorkflowParseError(f"Profile references unknown node {record.node}")
        if (record.node, m) in entries:
            raise WorkflowParseError(f"Duplicate profile for node {record.node}, model {record.model}")
        entries[(record.node, m)] = NodeModelProfile.derive(record.p, record.mean_tokens, catalog[m])
    return ProfileTable(entries, graph.node_count, len(catalog))


def _read_pool_records(path: str) -> Iterator[Tuple[int, PoolRecord]]:
    for line_number, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            yield line_number, PoolRecord.model_validate_json(line)
        except ValidationError as e:
            raise WorkflowParseError(f"{path}:{line_number}: invalid pool record: {e}") from e


def _group(records: Dict[Tuple[int, int], List[Tuple[bool, int, float]]]) -> RolloutPool:
    return RolloutPool({key: PoolSamples.from_records(rows) for key, rows in records.items()})


def load_pools(path: str, catalog: ModelCatalog, node_count: int) -> RolloutPool:
    """
    Read a JSON Lines pool file.

    Records of a pair keep their file order. Blank lines are ignored.

    Args:
        path (str): Pool file.
        catalog (ModelCatalog): Catalog resolving model ids.
        node_count (int): Number of workflow nodes.

    Returns:
        RolloutPool: Samples grouped per (node, model).

    Raises:
        WorkflowParseError: If the file is unreadable or a record is malformed.
    """
    grouped: Dict[Tuple[int, int], List[Tuple[bool, int, float]]] = {}
    for line_number, record in _read_pool_records(path):
        m = _model_index(catalog, record.model, f"{path}:{line_number}")
        if not 0 <= record.node < node_count:
            raise WorkflowParseError(f"{path}:{line_number}: unknown node {record.node}")
        grouped.setdefault((record.node, m), []).append((record.success, record.tokens, record.latency_s))
    logger.debug("Loaded %d pool pairs from %s", len(grouped), path)
    return _group(grouped)


def read_pool_file(path: str) -> Tuple[RolloutPool, Tuple[str, ...]]:
    """
    Read a pool file on its own, without a workflow.

    Model indices follow the order in which model ids first appear.

    Returns:
        Tuple[RolloutPool, Tuple[str, ...]]: The pool and its model ids.
    """
    model_ids: List[str] = []
    grouped: Dict[Tuple[int, int], List[Tuple[bool, int, float]]] = {}
    for line_number, record in _read_pool_records(path):
        if record.node < 0:
            raise WorkflowParseError(f"{path}:{line_number}: negative node id {record.node}")
        if record.model not in model_ids:
            model_ids.append(record.model)
        key = (record.node, model_ids.index(record.model))
        grouped.setdefault(key, []).append((record.success, record.tokens, record.latency_s))
    return _group(grouped), tuple(model_ids)


def load_workflow(path: str) -> WorkflowInstance:
    """
    Load a workflow file, and its pool file in empirical mode.

    Budget and deadline are taken from the optional ``budget_usd`` and
    ``deadline_s`` fields; callers usually override them with
    WorkflowInstance.with_constraints().

    Args:
        path (str): Workflow JSON file.

    Returns:
        WorkflowInstance: The parsed instance, not yet validated.

    Raises:
        WorkflowParseError: If the file is unreadable, not valid JSON, or does
            not match the workflow schema.
    """
    try:
        document = WorkflowDocument.model_validate_json(_read_text(path))
    except ValidationError as e:
        raise WorkflowParseError(f"{path}: invalid workflow file: {e}") from e

    graph = _build_graph(document)
    catalog = ModelCatalog(tuple(
        ModelSpec(m.id, m.price_per_1k_tokens_usd, m.tokens_per_second) for m in document.models
    ))
    budget, deadline = usd_to_micro(document.budget_usd), seconds_to_ms(document.deadline_s)

    if document.mode is ExecutionMode.EMPIRICAL:
        if document.profiles:
            raise WorkflowParseError(f"{path}: empirical workflows must not carry profiles")
        if not document.pools:
            raise WorkflowParseError(f"{path}: empirical workflows need a 'pools' file reference")
        pool_path = os.path.join(os.path.dirname(os.path.abspath(path)), document.pools)
        pools = load_pools(pool_path, catalog, graph.node_count)
        return WorkflowInstance.empirical(graph, catalog, pools, budget, deadline)

    if document.pools:
        raise WorkflowParseError(f"{path}: parametric workflows must not reference a pool file")
    profiles = _build_profiles(document, graph, catalog)
    return WorkflowInstance.parametric(graph, catalog, profiles, budget, deadline)


# ===== Writing =====

def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as e:
        raise WorkflowParseError(f"Cannot write {path}: {e}") from e


def save_pools(pool: RolloutPool, model_ids: Sequence[str], path: str) -> None:
    """Write a pool as JSON Lines, pairs in (node, model) order; model m is written as model_ids[m]."""
    lines = []
    for (v, m), samples in pool.items():
        for success, tokens, latency in zip(samples.success, samples.tokens, samples.latency_s):
            record = PoolRecord(node=v, model=model_ids[m], success=bool(success),
                                tokens=int(tokens), latency_s=float(latency))
            lines.append(json.dumps(record.model_dump(), separators=(",", ":")))
    _write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def workflow_document(instance: WorkflowInstance, pools_filename: str = DEFAULT_POOLS_FILENAME) -> WorkflowDocument:
    """Schema view of an instance."""
    graph, catalog = instance.graph, instance.catalog
    document = WorkflowDocument(
        nodes=[NodeRecord(id=v, name=graph.name(v)) for v in graph.nodes],
        edges=[(u, v) for u, v in graph.edges],
        models=[ModelRecord(id=m.id, price_per_1k_tokens_usd=m.price_per_1k_usd,
                            tokens_per_second=m.tokens_per_second) for m in catalog],
        mode=instance.mode,
        budget_usd=micro_to_usd(instance.budget_micro),
        deadline_s=ms_to_seconds(instance.deadline_ms),
    )
    if instance.is_empirical:
        document.pools = pools_filename
    else:
        document.profiles = [
            ProfileRecord(node=v, model=catalog[m].id, p=profile.p, mean_tokens=profile.mean_tokens)
            for (v, m), profile in sorted(instance.profiles.items())
        ]
    return document


def save_workflow(instance: WorkflowInstance, path: str, pools_filename: str = DEFAULT_POOLS_FILENAME) -> None:
    """
    Write an instance as a workflow file (plus its pool file in empirical mode).

    The output is deterministic: the same instance always produces the same
    bytes.

    Args:
        instance (WorkflowInstance): Instance to write.
        path (str): Workflow JSON destination.
        pools_filename (str): Pool file name, relative to the workflow file.

    Raises:
        WorkflowParseError: If a destination cannot be written.
    """
    document = workflow_document(instance, pools_filename)
    payload = document.model_dump(mode="json", exclude_none=True)
    _write_text(path, json.dumps(payload, indent=2) + "\n")
    if instance.is_empirical:
        pool_path = os.path.join(os.path.dirname(os.path.abspath(path)), pools_filename)
        save_pools(instance.pools, instance.catalog.ids, pool_path)
    logger.info("Saved %s workflow with %d nodes to %s", instance.mode.value, instance.graph.node_count, path)
