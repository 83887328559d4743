"""
Experiment harness.

Estimates closed-loop success probabilities by running many seeded
executions of a method, and assembles those estimates into reports: budget
and deadline sweeps with best-of baseline rows, Monte Carlo budget sweeps,
portfolio ablations and planner-side noise robustness.

Replicates are independent given (seed, run id), so they can be spread over
worker processes without changing any reported number except timings.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from config import (
    DEFAULT_DELTA,
    DEFAULT_N_EVAL,
    MethodEnum,
)
from src.core.errors import InputError, UnknownMethodError, UnsupportedModeError
from src.core.executor import WorkflowExecutor
from src.core.workflow import WorkflowInstance
from src.policies.base import Policy
from src.policies.retry import RetryPolicy
from src.policies.uniform import UniformPolicy
from src.systems.noise import NoiseSpec, perturb_pool
from src.systems.planner import PlannerConfig, PlannerPolicy, hoeffding_radius
from src.utils.units import micro_to_usd, ms_to_seconds, seconds_to_ms, usd_to_micro

logger = logging.getLogger(__name__)

SET_SEPARATOR = "|"
UNIFORM_WIDTH_LABEL = "static"
BEST_SUFFIX = "-best"


# ===== Methods =====

@dataclass(frozen=True)
class MethodSpec:
    """
    One concrete method to evaluate.

    Attributes:
        method (MethodEnum): MCPP, Uniform, or a Retry/base policy.
        model (Optional[int]): Model index for Uniform and Retry.
        width (Optional[int]): Width for Retry.
        tag (str): Suffix distinguishing variants of the same method in a
            report, e.g. a noise setting.
    """

    method: MethodEnum
    model: Optional[int] = None
    width: Optional[int] = None
    tag: str = ""

    def __post_init__(self):
        if not isinstance(self.method, MethodEnum):
            raise UnknownMethodError(f"Unknown method {self.method!r}")
        if self.method in (MethodEnum.RETRY, MethodEnum.BASE) and (self.model is None or self.width is None):
            raise InputError(f"{self.method.value} needs a model and a width")
        if self.method is MethodEnum.UNIFORM and self.model is None:
            raise InputError("uniform needs a model")

    @property
    def name(self) -> str:
        return self.method.value + (f"[{self.tag}]" if self.tag else "")

    def build_policy(self, instance: WorkflowInstance, config: PlannerConfig,
                     planner_instance: Optional[WorkflowInstance] = None) -> Policy:
        if self.method is MethodEnum.MCPP:
            return PlannerPolicy(config, planner_instance)
        if self.method is MethodEnum.UNIFORM:
            return UniformPolicy.for_instance(instance, self.model)
        return RetryPolicy(self.model, self.width)

    def model_set(self, instance: WorkflowInstance) -> str:
        if self.model is None:
            return SET_SEPARATOR.join(instance.catalog.ids)
        return instance.catalog[self.model].id

    def width_set(self, config: PlannerConfig) -> str:
        if self.method is MethodEnum.MCPP:
            return SET_SEPARATOR.join(str(k) for k in config.width_grid)
        if self.method is MethodEnum.UNIFORM:
            return UNIFORM_WIDTH_LABEL
        return str(self.width)


def parse_method(name: str) -> MethodEnum:
    """
    Resolve a method name.

    Raises:
        UnknownMethodError: For anything but mcpp, uniform, retry or base.
    """
    try:
        return MethodEnum(name.strip().lower())
    except ValueError:
        choices = ", ".join(m.value for m in MethodEnum)
        raise UnknownMethodError(f"Unknown method {name!r}; expected one of {choices}") from None


def expand_methods(names: Sequence[str], instance: WorkflowInstance, config: PlannerConfig) -> List[MethodSpec]:
    """
    Expand method names into concrete specs.

    ``retry`` and ``base`` expand to every (model, width) of the catalog and
    width grid, ``uniform`` to every model.
    """
    specs = []
    for name in names:
        method = parse_method(name)
        if method is MethodEnum.MCPP:
            specs.append(MethodSpec(method))
        elif method is MethodEnum.UNIFORM:
            specs.extend(MethodSpec(method, model=m) for m in range(len(instance.catalog)))
        else:
            specs.extend(MethodSpec(method, model=m, width=k)
                         for m in range(len(instance.catalog)) for k in config.width_grid)
    return specs


# ===== Reports =====

class ReportRow(BaseModel):
    """One evaluated (method, budget, deadline) cell."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: str
    model_set: str
    width_set: str
    budget_usd: float
    deadline_s: float
    n_eval: int = Field(ge=1)
    n_sim: int = Field(ge=0)
    success_rate: float = Field(ge=0.0, le=1.0)
    ci_radius: float = Field(ge=0.0)
    mean_planner_s: float = Field(ge=0.0)
    seed: int

    def sort_key(self) -> Tuple:
        return (self.method, self.budget_usd, self.deadline_s, self.model_set, self.width_set, self.n_sim)


class EvaluationReport:
    """Rows kept sorted by (method, budget, deadline), then by portfolio and M."""

    def __init__(self, rows: Sequence[ReportRow] = ()):
        self.rows: Tuple[ReportRow, ...] = tuple(sorted(rows, key=ReportRow.sort_key))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ReportRow]:
        return iter(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, EvaluationReport) and self.rows == other.rows

    def __add__(self, other: "EvaluationReport") -> "EvaluationReport":
        return EvaluationReport(self.rows + other.rows)

    def select(self, method: Optional[str] = None, budget_usd: Optional[float] = None,
               deadline_s: Optional[float] = None) -> List[ReportRow]:
        return [
            row for row in self.rows
            if (method is None or row.method == method)
            and (budget_usd is None or row.budget_usd == budget_usd)
            and (deadline_s is None or row.deadline_s == deadline_s)
        ]


def ci_radius(n_eval: int, delta: float) -> float:
    """Hoeffding radius √(ln(2/δ) / (2 n_eval)) of a success-rate estimate."""
    return hoeffding_radius(1, n_eval, delta)


# ===== Replicates =====

def _run_replicates(instance: WorkflowInstance, spec: MethodSpec, config: PlannerConfig, seed: int,
                    run_ids: Sequence[int], planner_instance: Optional[WorkflowInstance]) -> List[Tuple[bool, float]]:
    """(succeeded, mean planner seconds per round) for each run id."""
    policy = spec.build_policy(instance, config, planner_instance)
    results = []
    for run_id in run_ids:
        result = WorkflowExecutor(instance, policy, seed=seed, run_id=run_id).run()
        results.append((result.succeeded, result.mean_planner_seconds))
    return results


def _chunks(n: int, parts: int) -> List[range]:
    size = max(1, -(-n // parts))
    return [range(start, min(n, start + size)) for start in range(0, n, size)]


def estimate_success_probability(instance: WorkflowInstance, method: MethodSpec, config: PlannerConfig,
                                 n_eval: int = DEFAULT_N_EVAL, delta: float = DEFAULT_DELTA, seed: int = 0,
                                 workers: int = 1,
                                 planner_instance: Optional[WorkflowInstance] = None) -> ReportRow:
    """
    Run ``n_eval`` seeded closed-loop executions of one method.

    Run i uses the execution streams of (seed, i), so the estimate does not
    depend on ``workers``. Planner wall-clock time is averaged per round
    within a run, then across runs.

    Args:
        instance (WorkflowInstance): Execution instance with its B and D.
        method (MethodSpec): Method to evaluate.
        config (PlannerConfig): Planner settings (also fixes the reported K).
        n_eval (int): Number of executions, >= 1.
        delta (float): Confidence level of the reported radius.
        seed (int): Experiment seed.
        workers (int): Worker processes; 1 runs inline.
        planner_instance (Optional[WorkflowInstance]): Planner-visible
            instance for MCPP.

    Returns:
        ReportRow: Success rate, Hoeffding radius and mean planner time.
    """
    if n_eval < 1:
        raise InputError(f"n_eval must be >= 1, got {n_eval}")
    start = time.perf_counter()
    if workers <= 1:
        outcomes = _run_replicates(instance, method, config, seed, range(n_eval), planner_instance)
    else:
        chunks = _chunks(n_eval, workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_replicates, instance, method, config, seed, chunk, planner_instance)
                       for chunk in chunks]
            outcomes = [item for future in futures for item in future.result()]

    successes = sum(1 for ok, _ in outcomes if ok)
    planner_s = sum(t for _, t in outcomes) / n_eval if method.method is MethodEnum.MCPP else 0.0
    row = ReportRow(
        method=method.name,
        model_set=method.model_set(instance),
        width_set=method.width_set(config),
        budget_usd=micro_to_usd(instance.budget_micro),
        deadline_s=ms_to_seconds(instance.deadline_ms),
        n_eval=n_eval,
        n_sim=config.sims_per_pair if method.method is MethodEnum.MCPP else 0,
        success_rate=successes / n_eval,
        ci_radius=ci_radius(n_eval, delta),
        mean_planner_s=planner_s,
        seed=seed,
    )
    logger.info("%s %s/%s B=%g D=%g: %.4f ± %.4f (%.1fs)", row.method, row.model_set, row.width_set,
                row.budget_usd, row.deadline_s, row.success_rate, row.ci_radius, time.perf_counter() - start)
    return row


# ===== Sweeps =====

def best_rows(rows: Sequence[ReportRow], method: str) -> List[ReportRow]:
    """
    Per (budget, deadline) cell, the row of ``method`` with the highest success rate.

    The returned rows are copies named ``<method>-best``; ties keep the first
    row in report order.
    """
    best = {}
    for row in sorted(rows, key=ReportRow.sort_key):
        if row.method != method:
            continue
        cell = (row.budget_usd, row.deadline_s)
        if cell not in best or row.success_rate > best[cell].success_rate:
            best[cell] = row
    return [row.model_copy(update={"method": method + BEST_SUFFIX}) for row in best.values()]


def _constrained(instance: WorkflowInstance, budget_usd: float, deadline_s: float) -> WorkflowInstance:
    return instance.with_constraints(usd_to_micro(budget_usd), seconds_to_ms(deadline_s))


def _check_grids(budgets: Sequence[float], deadlines: Sequence[float]) -> None:
    if not budgets or not deadlines:
        raise InputError("Budget and deadline grids must not be empty")


def sweep(instance: WorkflowInstance, methods: Sequence[str], budgets: Sequence[float],
          deadlines: Sequence[float], config: PlannerConfig, n_eval: int = DEFAULT_N_EVAL,
          delta: float = DEFAULT_DELTA, seed: int = 0, workers: int = 1) -> EvaluationReport:
    """
    Full factorial budget × deadline evaluation.

    Retry and Uniform contribute one row per swept model (and width) plus a
    ``retry-best`` / ``uniform-best`` row holding the per-cell maximum.

    Args:
        instance (WorkflowInstance): Execution instance.
        methods (Sequence[str]): Method names.
        budgets (Sequence[float]): Budgets in USD.
        deadlines (Sequence[float]): Deadlines in seconds.
        config (PlannerConfig): Planner settings.
        n_eval (int): Executions per row.
        delta (float): Confidence level.
        seed (int): Experiment seed.
        workers (int): Worker processes.

    Returns:
        EvaluationReport: Every row of every cell.
    """
    _check_grids(budgets, deadlines)
    specs = expand_methods(methods, instance, config)
    rows = []
    for budget in budgets:
        for deadline in deadlines:
            cell = _constrained(instance, budget, deadline)
            rows.extend(estimate_success_probability(cell, spec, config, n_eval, delta, seed, workers)
                        for spec in specs)
    for method in (MethodEnum.RETRY, MethodEnum.BASE, MethodEnum.UNIFORM):
        if any(spec.method is method for spec in specs):
            rows.extend(best_rows(rows, method.value))
    return EvaluationReport(rows)


def m_sweep(instance: WorkflowInstance, m_values: Sequence[int], budgets: Sequence[float],
            deadlines: Sequence[float], config: PlannerConfig, n_eval: int = DEFAULT_N_EVAL,
            delta: float = DEFAULT_DELTA, seed: int = 0, workers: int = 1) -> EvaluationReport:
    """MCPP rows per (M, B, D), M being the simulations per scored pair."""
    _check_grids(budgets, deadlines)
    if not m_values or min(m_values) < 1:
        raise InputError(f"M values must be >= 1, got {list(m_values)}")
    rows = []
    for m in m_values:
        m_config = replace(config, sims_per_pair=int(m))
        for budget in budgets:
            for deadline in deadlines:
                cell = _constrained(instance, budget, deadline)
                rows.append(estimate_success_probability(cell, MethodSpec(MethodEnum.MCPP), m_config,
                                                         n_eval, delta, seed, workers))
    return EvaluationReport(rows)


def portfolio_ablation(instance: WorkflowInstance, model_subsets: Sequence[Sequence[str]],
                       width_subsets: Sequence[Sequence[int]], budgets: Sequence[float],
                       deadlines: Sequence[float], config: PlannerConfig, n_eval: int = DEFAULT_N_EVAL,
                       delta: float = DEFAULT_DELTA, seed: int = 0, workers: int = 1) -> EvaluationReport:
    """
    MCPP with reduced model catalogs and reduced width grids.

    Each (model subset, width subset) pair is evaluated over the full budget
    and deadline grid; the report's model_set and width_set columns tell the
    variants apart.
    """
    _check_grids(budgets, deadlines)
    rows = []
    for models in model_subsets:
        restricted = instance.restrict_models(models)
        for widths in width_subsets:
            variant = replace(config, width_grid=tuple(widths))
            for budget in budgets:
                for deadline in deadlines:
                    cell = _constrained(restricted, budget, deadline)
                    rows.append(estimate_success_probability(cell, MethodSpec(MethodEnum.MCPP), variant,
                                                             n_eval, delta, seed, workers))
    return EvaluationReport(rows)


@dataclass(frozen=True)
class RobustnessDelta:
    """Clean versus noisy MCPP success in one cell, delta in percentage points."""
    noise: str
    budget_usd: float
    deadline_s: float
    clean: float
    noisy: float

    @property
    def delta_pp(self) -> float:
        return 100.0 * (self.noisy - self.clean)


def noise_robustness(instance: WorkflowInstance, specs: Sequence[NoiseSpec], budgets: Sequence[float],
                     deadlines: Sequence[float], config: PlannerConfig, n_eval: int = DEFAULT_N_EVAL,
                     delta: float = DEFAULT_DELTA, seed: int = 0,
                     workers: int = 1) -> Tuple[EvaluationReport, List[RobustnessDelta]]:
    """
    MCPP planning from perturbed pools while executing on the clean ones.

    Clean and noisy runs share the execution seed, so any difference comes
    from the planner's decisions.

    Raises:
        UnsupportedModeError: For parametric instances, which carry no pools.
    """
    if not instance.is_empirical:
        raise UnsupportedModeError("Noise robustness needs an empirical instance")
    _check_grids(budgets, deadlines)
    views = [(spec, instance.with_pools(perturb_pool(instance.pools, spec))) for spec in specs]
    rows, deltas = [], []
    for budget in budgets:
        for deadline in deadlines:
            cell = _constrained(instance, budget, deadline)
            clean = estimate_success_probability(cell, MethodSpec(MethodEnum.MCPP), config,
                                                 n_eval, delta, seed, workers)
            rows.append(clean)
            for spec, view in views:
                noisy_view = _constrained(view, budget, deadline)
                noisy = estimate_success_probability(cell, MethodSpec(MethodEnum.MCPP, tag=spec.label), config,
                                                     n_eval, delta, seed, workers, planner_instance=noisy_view)
                rows.append(noisy)
                deltas.append(RobustnessDelta(spec.label, clean.budget_usd, clean.deadline_s,
                                              clean.success_rate, noisy.success_rate))
    return EvaluationReport(rows), deltas
