"""
Command-line surface.

Subcommands generate and validate workflows, plan a single decision, run one
closed-loop execution, evaluate methods over budget and deadline grids, sweep
the Monte Carlo budget, ablate the portfolio, perturb pools, measure how
planning from perturbed pools changes success, and dump exact oracle
values. JSON and CSV go to stdout (or --out); logs go to stderr.
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from config import (
    DEFAULT_BUDGETS_USD,
    DEFAULT_CLIP_EPS,
    DEFAULT_DEADLINES_S,
    DEFAULT_DELTA,
    DEFAULT_LOG_LEVEL,
    DEFAULT_M_VALUES,
    DEFAULT_N_EVAL,
    DEFAULT_POOL_SIZE,
    DEFAULT_SIMS_PER_PAIR,
    DEFAULT_WIDTH_GRID,
    DEFAULT_WORKERS,
    ExecutionMode,
    GraphShape,
    MethodEnum,
    NoiseKind,
    ReportFormat,
)
from src.core.engine import initial_state
from src.core.errors import InputError, WorkflowError
from src.core.executor import WorkflowExecutor, action_to_list, trace_to_dict
from src.core.loader import load_workflow, read_pool_file, save_pools, save_workflow
from src.core.workflow import WorkflowInstance, validate
from src.systems.generator import SyntheticSpec, generate_instance
from src.systems.harness import MethodSpec, m_sweep, noise_robustness, parse_method, portfolio_ablation, sweep
from src.systems.noise import NoiseSpec, perturb_pool
from src.systems.oracle import ExactOracle
from src.systems.planner import PlannerConfig, PlanningStreams, hoeffding_radius, select_action
from src.utils.logging_utils import configure_logging
from src.utils.report_io import emit_report
from src.utils.units import micro_to_usd, ms_to_seconds, seconds_to_ms, usd_to_micro

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


# ===== Argument helpers =====

def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated integers, got {text!r}") from None


def _kinds(text: str) -> List[str]:
    kinds = [part.strip() for part in text.split(",") if part.strip()]
    known = {k.value for k in NoiseKind}
    unknown = [k for k in kinds if k not in known]
    if unknown:
        raise argparse.ArgumentTypeError(f"Unknown noise kind(s) {unknown}; expected {sorted(known)}")
    return kinds


def _groups(text: str) -> List[List[str]]:
    """'a,b;c' -> [['a', 'b'], ['c']]."""
    return [[item.strip() for item in group.split(",") if item.strip()] for group in text.split(";") if group.strip()]


def _joined(values: Sequence[Any]) -> str:
    return ",".join(str(v) for v in values)


def _print_json(payload: Any, out: Optional[str] = None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _load_valid(path: str, budget_usd: Optional[float] = None, deadline_s: Optional[int] = None) -> WorkflowInstance:
    """Load a workflow, apply CLI constraints, and refuse invalid instances."""
    instance = load_workflow(path)
    if budget_usd is not None or deadline_s is not None:
        budget = usd_to_micro(budget_usd) if budget_usd is not None else instance.budget_micro
        deadline = seconds_to_ms(deadline_s) if deadline_s is not None else instance.deadline_ms
        instance = instance.with_constraints(budget, deadline)
    violations = validate(instance)
    if violations:
        details = "; ".join(v.message for v in violations[:5])
        raise InputError(f"{path} has {len(violations)} violation(s): {details}")
    return instance


def _planner_config(args: argparse.Namespace, sims: Optional[int] = None) -> PlannerConfig:
    return PlannerConfig(
        width_grid=tuple(args.widths),
        sims_per_pair=sims if sims is not None else args.sims,
        delta=getattr(args, "delta", DEFAULT_DELTA),
        workers=getattr(args, "planner_workers", 1),
    )


# ===== Commands =====

def cmd_gen(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        node_count=args.nodes,
        shape=GraphShape(args.shape),
        p_edge=args.p_edge,
        model_count=args.models,
        mode=ExecutionMode(args.mode),
        pool_size=args.pool_size,
        budget_usd=args.budget,
        deadline_s=args.deadline,
        seed=args.seed,
    )
    save_workflow(generate_instance(spec), args.out)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    violations = validate(load_workflow(args.workflow))
    _print_json({
        "valid": not violations,
        "violations": [
            {"kind": v.kind, "message": v.message, "node": v.node, "model": v.model} for v in violations
        ],
    })
    return EXIT_OK if not violations else EXIT_USAGE


def cmd_plan(args: argparse.Namespace) -> int:
    instance = _load_valid(args.workflow, args.budget, args.deadline)
    config = _planner_config(args)
    state = initial_state(instance)
    result = select_action(state, instance, config, PlanningStreams(args.seed, 0, 0))
    _print_json({
        "action": action_to_list(result.action, instance) if result.action is not None else None,
        "candidates": result.candidate_count,
        "feasible": len(result.scores),
        "radius": hoeffding_radius(max(1, len(result.scores)) * len(instance.catalog) * len(config.width_grid),
                                   config.sims_per_pair, config.delta),
        "scores": [
            {
                "action": action_to_list(score.action, instance),
                "score": score.portfolio_score,
                "continuation": score.best_continuation.label(instance),
                "continuation_values": list(score.continuation_values),
            }
            for score in result.scores
        ],
    })
    return EXIT_OK


def _method_for_run(args: argparse.Namespace, instance: WorkflowInstance) -> MethodSpec:
    method = parse_method(args.method)
    if method is MethodEnum.MCPP:
        return MethodSpec(method)
    if args.model is None:
        raise InputError(f"--model is required for {method.value}")
    model = instance.catalog.index(args.model)
    if method is MethodEnum.UNIFORM:
        return MethodSpec(method, model=model)
    return MethodSpec(method, model=model, width=args.width)


def cmd_run(args: argparse.Namespace) -> int:
    instance = _load_valid(args.workflow, args.budget, args.deadline)
    config = _planner_config(args)
    policy = _method_for_run(args, instance).build_policy(instance, config)
    result = WorkflowExecutor(instance, policy, seed=args.seed, run_id=0).run()
    trace = trace_to_dict(result, instance)
    trace["method"] = policy.describe()
    _print_json(trace)
    return EXIT_OK


def _emit(report, args: argparse.Namespace) -> int:
    text = emit_report(report, ReportFormat(args.format), args.out)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    instance = _load_valid(args.workflow)
    methods = [m for m in args.methods.split(",") if m.strip()]
    report = sweep(instance, methods, args.budgets, args.deadlines, _planner_config(args),
                   args.n_eval, args.delta, args.seed, args.workers)
    return _emit(report, args)


def cmd_msweep(args: argparse.Namespace) -> int:
    instance = _load_valid(args.workflow)
    report = m_sweep(instance, args.m_values, args.budgets, args.deadlines, _planner_config(args),
                     args.n_eval, args.delta, args.seed, args.workers)
    return _emit(report, args)


def cmd_ablate(args: argparse.Namespace) -> int:
    instance = _load_valid(args.workflow)
    model_subsets = _groups(args.model_subsets) if args.model_subsets else [list(instance.catalog.ids)]
    width_subsets = ([[int(k) for k in group] for group in _groups(args.width_subsets)]
                     if args.width_subsets else [list(args.widths)])
    report = portfolio_ablation(instance, model_subsets, width_subsets, args.budgets, args.deadlines,
                                _planner_config(args), args.n_eval, args.delta, args.seed, args.workers)
    return _emit(report, args)


def cmd_noise(args: argparse.Namespace) -> int:
    pool, model_ids = read_pool_file(args.input)
    spec = NoiseSpec(NoiseKind(args.kind), args.sigma, args.eps, args.seed)
    save_pools(perturb_pool(pool, spec), model_ids, args.out)
    logger.info("Wrote %s-perturbed pool to %s", spec.label, args.out)
    return EXIT_OK


def cmd_robust(args: argparse.Namespace) -> int:
    instance = _load_valid(args.workflow)
    specs = [NoiseSpec(NoiseKind(kind), sigma, args.eps, args.noise_seed)
             for kind in args.kinds for sigma in args.sigmas]
    if not specs:
        raise InputError("--kinds and --sigmas must name at least one perturbation")
    report, deltas = noise_robustness(instance, specs, args.budgets, args.deadlines, _planner_config(args),
                                      args.n_eval, args.delta, args.seed, args.workers)
    for d in deltas:
        logger.info("%s at B=%g D=%g: clean %.4f, noisy %.4f (%+.2f pp)", d.noise, d.budget_usd, d.deadline_s,
                    d.clean, d.noisy, d.delta_pp)
    if args.deltas:
        _print_json([{"noise": d.noise, "budget_usd": d.budget_usd, "deadline_s": d.deadline_s, "clean": d.clean,
                      "noisy": d.noisy, "delta_pp": d.delta_pp} for d in deltas], args.deltas)
    return _emit(report, args)


def cmd_oracle(args: argparse.Namespace) -> int:
    instance = _load_valid(args.workflow, args.budget, args.deadline)
    oracle = ExactOracle(instance, args.widths)
    start = initial_state(instance).key()
    policy_values: Dict[str, float] = {
        mu.label(instance): oracle.policy_value(start, mu) for mu in oracle.portfolio
    }
    action, score = oracle.plan(start)
    _print_json({
        "budget_usd": micro_to_usd(instance.budget_micro),
        "deadline_s": ms_to_seconds(instance.deadline_ms),
        "widths": list(oracle.width_grid),
        "optimal_value": oracle.optimal_value(start),
        "planner_value": oracle.planner_value(start),
        "planner_action": action_to_list(action, instance) if action is not None else None,
        "planner_score": score,
        "policy_values": policy_values,
        "states": oracle.state_values(),
    }, args.out)
    return EXIT_OK


# ===== Parser =====

def _add_widths(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--widths", type=_ints, default=list(DEFAULT_WIDTH_GRID),
                        help=f"width grid K (default {_joined(DEFAULT_WIDTH_GRID)})")


def _add_constraints(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--budget", type=float, help="budget in USD (default: the workflow file's)")
    parser.add_argument("--deadline", type=int, help="deadline in seconds (default: the workflow file's)")


def _add_evaluation(parser: argparse.ArgumentParser, sims: bool = True) -> None:
    parser.add_argument("--workflow", required=True)
    parser.add_argument("--budgets", type=_floats, default=list(DEFAULT_BUDGETS_USD))
    parser.add_argument("--deadlines", type=_floats, default=list(DEFAULT_DEADLINES_S))
    if sims:
        parser.add_argument("--sims", type=int, default=DEFAULT_SIMS_PER_PAIR)
    parser.add_argument("--n-eval", dest="n_eval", type=int, default=DEFAULT_N_EVAL)
    parser.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=DEFAULT_WORKERS, help="evaluation worker processes")
    parser.add_argument("--out", help="report file (default: stdout)")
    parser.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.CSV.value)
    _add_widths(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowplan",
        description="Plan and simulate budget- and deadline-constrained workflow execution.",
    )
    parser.add_argument("--log-level", default=DEFAULT_LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("gen", help="generate a synthetic workflow")
    gen.add_argument("--nodes", type=int, required=True)
    gen.add_argument("--shape", choices=[s.value for s in GraphShape], default=GraphShape.RANDOM.value)
    gen.add_argument("--p-edge", dest="p_edge", type=float, default=0.3)
    gen.add_argument("--models", type=int, default=3)
    gen.add_argument("--mode", choices=[m.value for m in ExecutionMode], default=ExecutionMode.PARAMETRIC.value)
    gen.add_argument("--pool-size", dest="pool_size", type=int, default=DEFAULT_POOL_SIZE)
    gen.add_argument("--budget", type=float, default=1.0, help="budget in USD stored in the file")
    gen.add_argument("--deadline", type=float, default=600.0, help="deadline in seconds stored in the file")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen)

    check = subparsers.add_parser("validate", help="report every invariant violation of a workflow")
    check.add_argument("--workflow", required=True)
    check.set_defaults(handler=cmd_validate)

    plan = subparsers.add_parser("plan", help="select the first action and print the score table")
    plan.add_argument("--workflow", required=True)
    _add_constraints(plan)
    plan.add_argument("--sims", type=int, default=DEFAULT_SIMS_PER_PAIR)
    plan.add_argument("--seed", type=int, default=0)
    plan.add_argument("--planner-workers", dest="planner_workers", type=int, default=1,
                      help="threads scoring candidate pairs")
    _add_widths(plan)
    plan.set_defaults(handler=cmd_plan)

    run = subparsers.add_parser("run", help="execute one closed-loop run and print its trace")
    run.add_argument("--workflow", required=True)
    run.add_argument("--method", choices=[MethodEnum.MCPP.value, MethodEnum.UNIFORM.value,
                                          MethodEnum.RETRY.value, MethodEnum.BASE.value],
                     default=MethodEnum.MCPP.value)
    run.add_argument("--model", help="model id for uniform and retry")
    run.add_argument("--width", type=int, default=1, help="width for retry")
    _add_constraints(run)
    run.add_argument("--sims", type=int, default=DEFAULT_SIMS_PER_PAIR)
    run.add_argument("--seed", type=int, default=0)
    _add_widths(run)
    run.set_defaults(handler=cmd_run)

    evaluate = subparsers.add_parser("eval", help="budget x deadline sweep of several methods")
    evaluate.add_argument("--methods", default="mcpp,uniform,retry")
    _add_evaluation(evaluate)
    evaluate.set_defaults(handler=cmd_eval)

    msweep = subparsers.add_parser("msweep", help="MCPP over several Monte Carlo budgets")
    msweep.add_argument("--m-values", dest="m_values", type=_ints, default=list(DEFAULT_M_VALUES))
    _add_evaluation(msweep, sims=False)
    msweep.set_defaults(handler=cmd_msweep, sims=DEFAULT_SIMS_PER_PAIR)

    ablate = subparsers.add_parser("ablate", help="MCPP with reduced model and width portfolios")
    ablate.add_argument("--model-subsets", dest="model_subsets",
                        help="';'-separated groups of comma-separated model ids, e.g. 'm0,m1;m2'")
    ablate.add_argument("--width-subsets", dest="width_subsets",
                        help="';'-separated groups of comma-separated widths, e.g. '1;1,4,16,64'")
    _add_evaluation(ablate)
    ablate.set_defaults(handler=cmd_ablate)

    noise = subparsers.add_parser("noise", help="perturb a rollout pool file")
    noise.add_argument("--kind", choices=[k.value for k in NoiseKind], required=True)
    noise.add_argument("--sigma", type=float, required=True)
    noise.add_argument("--eps", type=float, default=DEFAULT_CLIP_EPS)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--in", dest="input", required=True)
    noise.add_argument("--out", required=True)
    noise.set_defaults(handler=cmd_noise)

    robust = subparsers.add_parser("robust", help="MCPP planning from perturbed pools, executed on clean ones")
    robust.add_argument("--kinds", type=_kinds, default=[k.value for k in NoiseKind],
                        help="comma-separated noise kinds (default: all)")
    robust.add_argument("--sigmas", type=_floats, required=True)
    robust.add_argument("--eps", type=float, default=DEFAULT_CLIP_EPS)
    robust.add_argument("--noise-seed", dest="noise_seed", type=int, default=0)
    robust.add_argument("--deltas", help="JSON file for clean-versus-noisy deltas")
    _add_evaluation(robust)
    robust.set_defaults(handler=cmd_robust)

    oracle = subparsers.add_parser("oracle", help="exact values of a small parametric workflow")
    oracle.add_argument("--workflow", required=True)
    _add_constraints(oracle)
    oracle.add_argument("--out", help="JSON file (default: stdout)")
    _add_widths(oracle)
    oracle.set_defaults(handler=cmd_oracle)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and dispatch a subcommand.

    Returns:
        int: 0 on success, 2 for input and domain errors, 1 for anything else.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except WorkflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        logger.exception("Unexpected failure in %s", args.command)
        return EXIT_FAILURE
