import json

import pytest

from config import ExecutionMode
from factories import empirical, homogeneous, samples
from src.core.errors import WorkflowParseError
from src.core.loader import load_workflow, read_pool_file, save_pools, save_workflow


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def parametric_payload(**overrides):
    payload = {
        "nodes": [{"id": 0, "name": "draft"}, {"id": 1, "name": "review"}],
        "edges": [[0, 1]],
        "models": [{"id": "small", "price_per_1k_tokens_usd": 0.002, "tokens_per_second": 80.0}],
        "mode": "parametric",
        "profiles": [{"node": 0, "model": "small", "p": 0.6, "mean_tokens": 500.0},
                     {"node": 1, "model": "small", "p": 0.8, "mean_tokens": 250.0}],
        "budget_usd": 0.05,
        "deadline_s": 30.0,
    }
    payload.update(overrides)
    return payload


def test_parametric_file_is_decoded(tmp_path):
    instance = load_workflow(write_json(tmp_path / "w.json", parametric_payload()))
    assert instance.mode is ExecutionMode.PARAMETRIC
    assert instance.graph.edges == ((0, 1),)
    assert instance.graph.name(1) == "review"
    assert (instance.budget_micro, instance.deadline_ms) == (50_000, 30_000)
    draft = instance.profiles.get(0, 0)
    assert draft.cost_micro == 1000
    assert draft.latency_ms == 6250


def test_parametric_round_trip(parametric_file, tmp_path):
    instance = load_workflow(str(parametric_file))
    save_workflow(instance, str(tmp_path / "copy.json"))
    assert load_workflow(str(tmp_path / "copy.json")) == instance
    assert (tmp_path / "copy.json").read_bytes() == parametric_file.read_bytes()


def test_empirical_round_trip(empirical_file, tmp_path):
    instance = load_workflow(str(empirical_file))
    assert instance.is_empirical
    target = tmp_path / "out"
    target.mkdir()
    save_workflow(instance, str(target / "workflow.json"), pools_filename="records.jsonl")
    assert (target / "records.jsonl").exists()
    assert load_workflow(str(target / "workflow.json")) == instance


def test_missing_file(tmp_path):
    with pytest.raises(WorkflowParseError):
        load_workflow(str(tmp_path / "absent.json"))


def test_malformed_json(tmp_path):
    path = tmp_path / "w.json"
    path.write_text("{ not json", encoding="utf-8")
    with pytest.raises(WorkflowParseError):
        load_workflow(str(path))


def test_undecodable_files_are_parse_errors(tmp_path):
    workflow = tmp_path / "w.json"
    workflow.write_bytes(b'{"nodes": [], "edges": [], "name": "\xff\xfe"}')
    pools = tmp_path / "pools.jsonl"
    pools.write_bytes(b"\xff\n")
    with pytest.raises(WorkflowParseError, match="w.json"):
        load_workflow(str(workflow))
    with pytest.raises(WorkflowParseError, match="pools.jsonl"):
        read_pool_file(str(pools))


@pytest.mark.parametrize("overrides", [
    {"nodes": [{"id": 0}, {"id": 2}]},
    {"profiles": [{"node": 0, "model": "large", "p": 0.5, "mean_tokens": 10.0}]},
    {"mode": "sometimes"},
    {"surprise": True},
    {"pools": "pools.jsonl"},
])
def test_schema_errors(tmp_path, overrides):
    with pytest.raises(WorkflowParseError):
        load_workflow(write_json(tmp_path / "w.json", parametric_payload(**overrides)))


def test_empirical_file_must_not_carry_profiles(tmp_path):
    payload = parametric_payload(mode="empirical", pools="pools.jsonl")
    with pytest.raises(WorkflowParseError):
        load_workflow(write_json(tmp_path / "w.json", payload))


def test_empirical_file_needs_a_pool_reference(tmp_path):
    payload = parametric_payload(mode="empirical", profiles=None)
    with pytest.raises(WorkflowParseError):
        load_workflow(write_json(tmp_path / "w.json", payload))


def test_invalid_but_parseable_values_load(tmp_path):
    payload = parametric_payload(edges=[[0, 1], [1, 0]])
    instance = load_workflow(write_json(tmp_path / "w.json", payload))
    assert instance.graph.edges == ((0, 1), (1, 0))


def test_pool_file_round_trip(tmp_path):
    instance = empirical(2, {(0, 0): samples(2, 1, tokens=[10, 20, 30], latency_s=0.25),
                             (1, 1): samples(0, 2)}, 10, 10, model_count=2)
    path = str(tmp_path / "pools.jsonl")
    save_pools(instance.pools, ["alpha", "beta"], path)
    pool, model_ids = read_pool_file(path)
    assert model_ids == ("alpha", "beta")
    assert pool == instance.pools


def test_pool_record_errors_name_the_line(tmp_path):
    path = tmp_path / "pools.jsonl"
    path.write_text('{"node": 0, "model": "a", "success": true, "tokens": 5, "latency_s": 1.0}\n'
                    '{"node": 0, "model": "a", "success": "maybe"}\n', encoding="utf-8")
    with pytest.raises(WorkflowParseError, match=":2:"):
        read_pool_file(str(path))


def test_pool_file_with_unknown_model(tmp_path):
    workflow = tmp_path / "w.json"
    (tmp_path / "pools.jsonl").write_text(
        '{"node": 0, "model": "ghost", "success": true, "tokens": 5, "latency_s": 1.0}\n', encoding="utf-8")
    payload = parametric_payload(mode="empirical", profiles=None, pools="pools.jsonl")
    del payload["profiles"]
    with pytest.raises(WorkflowParseError, match="ghost"):
        load_workflow(write_json(workflow, payload))


def test_saved_parametric_workflow_is_plain_json(tmp_path):
    path = tmp_path / "w.json"
    save_workflow(homogeneous(2, p=0.5), str(path))
    document = json.loads(path.read_text(encoding="utf-8"))
    assert document["mode"] == "parametric"
    assert "pools" not in document
    assert len(document["profiles"]) == 2
