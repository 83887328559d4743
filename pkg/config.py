"""
Configuration module for the flowplan workflow allocation planner.

This module contains all planner constants, unit factors, default experiment
grids, and the enumerations the rest of the code switches on.
"""

from enum import Enum


# ===== Units =====
# Money is carried as integer micro-dollars, time as integer milliseconds.
MICRO_USD_PER_USD = 1_000_000
MS_PER_SECOND = 1_000
TOKENS_PER_PRICE_UNIT = 1_000  # prices are quoted per 1000 output tokens

# ===== Planner Defaults =====
DEFAULT_WIDTH_GRID = (1, 4, 16, 64)
DEFAULT_SIMS_PER_PAIR = 64
DEFAULT_ENUMERATION_CAP = 4096
DEFAULT_DELTA = 0.05
DEFAULT_TIE_BREAK = "lexicographic"
DEFAULT_WORKERS = 1

# ===== Exact Oracle Guards =====
ORACLE_MAX_NODES = 12
ORACLE_RECURSION_LIMIT = 20_000

# ===== Noise Lab =====
DEFAULT_CLIP_EPS = 1e-3

# ===== Synthetic Instances =====
DEFAULT_POOL_SIZE = 512
DEFAULT_TOKEN_CV = 0.25
GENERATION_MAX_ATTEMPTS = 16

# ===== Experiment Grids =====
DEFAULT_BUDGETS_USD = (0.05, 1.0, 20.0)
DEFAULT_DEADLINES_S = (60, 300, 600, 900, 1800, 3600, 7200)
DEFAULT_M_VALUES = (16, 32, 64, 128, 256)
DEFAULT_N_EVAL = 10_000

# ===== Report Columns =====
REPORT_COLUMNS = (
    "method",
    "model_set",
    "width_set",
    "budget_usd",
    "deadline_s",
    "n_eval",
    "n_sim",
    "success_rate",
    "ci_radius",
    "mean_planner_s",
    "seed",
)

# ===== Logging =====
LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
DEFAULT_LOG_LEVEL = "WARNING"


class ExecutionMode(Enum):
    """Enumeration for how per-(node, model) statistics are represented."""
    PARAMETRIC = "parametric"
    EMPIRICAL = "empirical"


class RunOutcome(Enum):
    """Enumeration for the terminal status of a closed-loop run."""
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"


class MethodEnum(Enum):
    """Enumeration for the execution methods the harness can evaluate."""
    MCPP = "mcpp"
    UNIFORM = "uniform"
    RETRY = "retry"
    BASE = "base"


class GraphShape(Enum):
    """Enumeration for synthetic workflow shapes."""
    CHAIN = "chain"
    DIAMOND = "diamond"
    RANDOM = "random"


class NoiseKind(Enum):
    """Enumeration for planner-side profile perturbations."""
    TOKEN_LENGTH = "tokens"
    SUCCESS_RATE = "success"


class ReportFormat(Enum):
    """Enumeration for report serialisation formats."""
    CSV = "csv"
    JSON = "json"


# ===== Stream Domains =====
# First key component of every derived random stream.
STREAM_EXECUTION = 0
STREAM_PLANNING = 1
STREAM_NOISE = 2
STREAM_GENERATION = 3
