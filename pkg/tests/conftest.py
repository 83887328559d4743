import pytest

from config import ExecutionMode, GraphShape
from factories import DIAMOND, chain_edges, homogeneous, single_node
from src.core.loader import save_workflow
from src.systems.generator import SyntheticSpec, generate_instance


@pytest.fixture
def coin_node():
    """One node, p = 0.5, unit cost and latency, b = 2, h = 1: a single round fits."""
    return single_node(p=0.5, cost=1, latency=1, budget=2, deadline=1)


@pytest.fixture
def certain_node():
    return single_node(p=1.0, cost=1, latency=1, budget=100, deadline=100)


@pytest.fixture
def chain3():
    return homogeneous(3, p=1.0, edges=chain_edges(3))


@pytest.fixture
def diamond():
    return homogeneous(4, p=0.5, edges=DIAMOND)


@pytest.fixture
def parametric_file(tmp_path):
    spec = SyntheticSpec(node_count=3, shape=GraphShape.CHAIN, model_count=2, budget_usd=1.0,
                         deadline_s=600.0, seed=11)
    path = tmp_path / "workflow.json"
    save_workflow(generate_instance(spec), str(path))
    return path


@pytest.fixture
def empirical_file(tmp_path):
    spec = SyntheticSpec(node_count=3, shape=GraphShape.DIAMOND, model_count=2, mode=ExecutionMode.EMPIRICAL,
                         pool_size=64, budget_usd=1.0, deadline_s=600.0, seed=5)
    path = tmp_path / "workflow.json"
    save_workflow(generate_instance(spec), str(path))
    return path
