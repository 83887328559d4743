import pytest

from config import ExecutionMode, GraphShape, MethodEnum, NoiseKind
from factories import chain_edges, empirical, homogeneous, samples
from src.core.engine import initial_state
from src.core.errors import InputError, UnknownMethodError, UnsupportedModeError
from src.systems.harness import (
    EvaluationReport,
    MethodSpec,
    ReportRow,
    best_rows,
    ci_radius,
    estimate_success_probability,
    expand_methods,
    m_sweep,
    noise_robustness,
    parse_method,
    portfolio_ablation,
    sweep,
)
from src.systems.generator import SyntheticSpec, generate_instance
from src.systems.noise import NoiseSpec
from src.systems.oracle import ExactOracle
from src.systems.planner import PlannerConfig

SMALL = PlannerConfig(width_grid=(1, 2), sims_per_pair=8)


def row(method="mcpp", budget=1.0, deadline=10.0, rate=0.5, **kwargs):
    values = dict(method=method, model_set="m0", width_set="1", budget_usd=budget, deadline_s=deadline,
                  n_eval=10, n_sim=0, success_rate=rate, ci_radius=0.1, mean_planner_s=0.0, seed=0)
    values.update(kwargs)
    return ReportRow(**values)


def test_ci_radius_example():
    assert ci_radius(10_000, 0.05) == pytest.approx(0.01358, abs=1e-5)


# ----- methods -----

@pytest.mark.parametrize("name, expected", [("MCPP", MethodEnum.MCPP), (" retry ", MethodEnum.RETRY),
                                            ("uniform", MethodEnum.UNIFORM), ("base", MethodEnum.BASE)])
def test_parse_method(name, expected):
    assert parse_method(name) is expected


def test_unknown_method():
    with pytest.raises(UnknownMethodError):
        parse_method("greedy")
    with pytest.raises(UnknownMethodError):
        MethodSpec("mcpp")


def test_method_arguments_are_checked():
    with pytest.raises(InputError):
        MethodSpec(MethodEnum.RETRY, model=0)
    with pytest.raises(InputError):
        MethodSpec(MethodEnum.UNIFORM)


def test_expand_methods():
    instance = homogeneous(1, p=0.5, model_count=2)
    specs = expand_methods(["mcpp", "retry", "uniform"], instance, SMALL)
    assert [s.method for s in specs].count(MethodEnum.RETRY) == 4
    assert [s.method for s in specs].count(MethodEnum.UNIFORM) == 2
    assert specs[0].width_set(SMALL) == "1|2"
    assert specs[0].model_set(instance) == "m0|m1"
    assert specs[-1].width_set(SMALL) == "static"


# ----- estimates -----

@pytest.mark.parametrize("method", [MethodSpec(MethodEnum.MCPP), MethodSpec(MethodEnum.RETRY, 0, 1),
                                    MethodSpec(MethodEnum.UNIFORM, 0)])
def test_trivial_instance_always_succeeds(certain_node, method):
    result = estimate_success_probability(certain_node, method, SMALL, n_eval=50, seed=1)
    assert result.success_rate == 1.0
    assert result.n_eval == 50


def test_row_describes_the_method(coin_node):
    result = estimate_success_probability(coin_node, MethodSpec(MethodEnum.RETRY, 0, 2), SMALL, n_eval=20)
    assert (result.method, result.model_set, result.width_set, result.n_sim) == ("retry", "m0", "2", 0)
    assert result.budget_usd == pytest.approx(2e-6)
    assert result.deadline_s == pytest.approx(0.001)
    assert result.mean_planner_s == 0.0


def test_estimates_are_reproducible(coin_node):
    spec = MethodSpec(MethodEnum.RETRY, 0, 1)
    first = estimate_success_probability(coin_node, spec, SMALL, n_eval=200, seed=5)
    assert first == estimate_success_probability(coin_node, spec, SMALL, n_eval=200, seed=5)


def test_worker_count_does_not_change_estimates():
    instance = homogeneous(3, p=0.5, budget=8, deadline=5, edges=chain_edges(3), model_count=2)
    for spec in (MethodSpec(MethodEnum.RETRY, 1, 2), MethodSpec(MethodEnum.MCPP)):
        serial = estimate_success_probability(instance, spec, SMALL, n_eval=40, seed=3)
        parallel = estimate_success_probability(instance, spec, SMALL, n_eval=40, seed=3, workers=2)
        untimed = {"mean_planner_s": 0.0}
        assert serial.model_copy(update=untimed) == parallel.model_copy(update=untimed)


def test_n_eval_must_be_positive(coin_node):
    with pytest.raises(InputError):
        estimate_success_probability(coin_node, MethodSpec(MethodEnum.MCPP), SMALL, n_eval=0)


# ----- reports and sweeps -----

def test_report_rows_are_sorted():
    report = EvaluationReport([row("retry", 2.0), row("mcpp", 2.0), row("mcpp", 1.0)])
    assert [(r.method, r.budget_usd) for r in report] == [("mcpp", 1.0), ("mcpp", 2.0), ("retry", 2.0)]
    assert len(report.select(method="mcpp")) == 2
    assert len(report.select(budget_usd=2.0)) == 2


def test_best_rows_take_the_cell_maximum():
    rows = [row("retry", rate=0.2, model_set="m0"), row("retry", rate=0.7, model_set="m1"),
            row("retry", budget=2.0, rate=0.4), row("mcpp", rate=0.9)]
    best = sorted(best_rows(rows, "retry"), key=ReportRow.sort_key)
    assert [(r.method, r.budget_usd, r.success_rate, r.model_set) for r in best] == [
        ("retry-best", 1.0, 0.7, "m1"), ("retry-best", 2.0, 0.4, "m0")]


def test_sweep_covers_every_cell():
    instance = homogeneous(2, p=0.6, edges=chain_edges(2), model_count=2)
    report = sweep(instance, ["mcpp", "retry"], [1e-5, 2e-5], [0.01], SMALL, n_eval=10)
    # Per cell: one mcpp row, four retry rows and one retry-best row.
    assert len(report) == 2 * 6
    for budget in (1e-5, 2e-5):
        cell = report.select(budget_usd=budget)
        best = [r for r in cell if r.method == "retry-best"]
        assert best[0].success_rate == max(r.success_rate for r in cell if r.method == "retry")


def test_sweep_needs_grids(coin_node):
    with pytest.raises(InputError):
        sweep(coin_node, ["mcpp"], [], [1.0], SMALL)


def test_m_sweep_rows():
    instance = homogeneous(2, p=0.6, model_count=1)
    report = m_sweep(instance, [1, 4], [1e-5], [0.01], SMALL, n_eval=10)
    assert sorted(r.n_sim for r in report) == [1, 4]
    assert all(r.method == "mcpp" for r in report)
    with pytest.raises(InputError):
        m_sweep(instance, [0], [1e-5], [0.01], SMALL)


def test_portfolio_ablation_columns():
    instance = homogeneous(1, p=0.6, model_count=2)
    report = portfolio_ablation(instance, [["m0"], ["m0", "m1"]], [[1], [1, 2]], [1e-5], [0.01], SMALL,
                                n_eval=10)
    assert {(r.model_set, r.width_set) for r in report} == {("m0", "1"), ("m0", "1|2"), ("m0|m1", "1"),
                                                            ("m0|m1", "1|2")}


def test_noise_robustness_reports_deltas():
    pools = {(v, 0): samples(5, 3, tokens=[100] * 8) for v in range(2)}
    instance = empirical(2, pools, 10**6, 10**6, edges=chain_edges(2))
    specs = [NoiseSpec(NoiseKind.SUCCESS_RATE, 0.1, seed=1), NoiseSpec(NoiseKind.TOKEN_LENGTH, 0.1, seed=1)]
    report, deltas = noise_robustness(instance, specs, [1.0], [100.0], PlannerConfig(width_grid=(1,),
                                                                                      sims_per_pair=4),
                                      n_eval=20)
    assert {r.method for r in report} == {"mcpp", "mcpp[success:0.1]", "mcpp[tokens:0.1]"}
    assert [d.noise for d in deltas] == ["success:0.1", "tokens:0.1"]
    for d in deltas:
        assert d.delta_pp == pytest.approx(100.0 * (d.noisy - d.clean))


def test_noise_robustness_needs_pools(coin_node):
    with pytest.raises(UnsupportedModeError):
        noise_robustness(coin_node, [NoiseSpec(NoiseKind.SUCCESS_RATE, 0.1)], [1.0], [1.0], SMALL)


# ----- statistical checks -----

@pytest.mark.slow
def test_confidence_radius_covers_the_true_rate(coin_node):
    spec = MethodSpec(MethodEnum.RETRY, 0, 2)
    misses = 0
    for seed in range(500):
        result = estimate_success_probability(coin_node, spec, SMALL, n_eval=2000, seed=seed)
        misses += abs(result.success_rate - 0.75) > result.ci_radius
    assert misses <= 25


@pytest.mark.slow
def test_mcpp_keeps_up_with_the_best_base_policy():
    instance = homogeneous(2, p=0.5, budget=6, deadline=3, edges=chain_edges(2), model_count=1)
    oracle = ExactOracle(instance, (1, 2))
    best_base = max(oracle.policy_value(initial_state(instance).key(), mu) for mu in oracle.portfolio)
    config = PlannerConfig(width_grid=(1, 2), sims_per_pair=256)
    result = estimate_success_probability(instance, MethodSpec(MethodEnum.MCPP), config, n_eval=400, seed=2)
    assert result.success_rate >= best_base - 2 * result.ci_radius


def synthetic_chain():
    spec = SyntheticSpec(6, shape=GraphShape.CHAIN, model_count=3, mode=ExecutionMode.EMPIRICAL, pool_size=128,
                         seed=21)
    return generate_instance(spec)


@pytest.mark.slow
def test_mcpp_matches_the_best_baseline_in_every_cell():
    config = PlannerConfig(width_grid=(1, 4, 16), sims_per_pair=32)
    report = sweep(synthetic_chain(), ["mcpp", "retry", "uniform"], [0.05, 0.5], [300.0, 1800.0], config,
                   n_eval=300, seed=1, workers=2)
    for budget in (0.05, 0.5):
        for deadline in (300.0, 1800.0):
            cell = {r.method: r for r in report.select(budget_usd=budget, deadline_s=deadline)}
            baseline = max(cell["retry-best"].success_rate, cell["uniform-best"].success_rate)
            assert cell["mcpp"].success_rate >= baseline - 2 * cell["mcpp"].ci_radius


@pytest.mark.slow
def test_more_simulations_do_not_hurt():
    config = PlannerConfig(width_grid=(1, 4, 16))
    report = m_sweep(synthetic_chain(), [4, 64], [0.05], [600.0], config, n_eval=300, seed=2, workers=2)
    low, high = sorted(report, key=lambda r: r.n_sim)
    assert high.success_rate >= low.success_rate - 2 * high.ci_radius


@pytest.mark.slow
def test_success_grows_with_the_budget():
    instance = synthetic_chain()
    report = sweep(instance, ["mcpp"], [0.01, 0.05, 0.5], [600.0], PlannerConfig(width_grid=(1, 4, 16),
                                                                                  sims_per_pair=16),
                   n_eval=300, seed=3, workers=2)
    rates = [r.success_rate for r in sorted(report, key=lambda r: r.budget_usd)]
    radius = report.rows[0].ci_radius
    assert all(later >= earlier - 2 * radius for earlier, later in zip(rates, rates[1:]))


@pytest.mark.slow
def test_planner_time_grows_with_the_simulation_budget():
    spec = SyntheticSpec(20, shape=GraphShape.CHAIN, model_count=3, mode=ExecutionMode.EMPIRICAL, pool_size=128,
                         seed=33)
    report = m_sweep(generate_instance(spec), [16, 64, 256], [0.5], [1800.0], PlannerConfig(), n_eval=10, seed=4)
    times = {r.n_sim: r.mean_planner_s for r in report}
    assert times[16] < times[64] < times[256]
    assert times[64] <= 5.0
