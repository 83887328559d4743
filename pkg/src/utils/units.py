"""
Unit conversion helpers.

Money is represented internally as integer micro-dollars and time as integer
milliseconds so exact state keys can be memoised. Conversions happen only at
the I/O boundary and when deriving per-attempt statistics.
"""

import math

import numpy as np

from config import MICRO_USD_PER_USD, MS_PER_SECOND, TOKENS_PER_PRICE_UNIT


def usd_to_micro(usd: float) -> int:
    """
    Convert a dollar amount to integer micro-dollars.

    Args:
        usd (float): Amount in USD.

    Returns:
        int: Amount in micro-USD, rounded to the nearest unit.
    """
    return int(round(usd * MICRO_USD_PER_USD))


def micro_to_usd(micro: int) -> float:
    """Convert integer micro-dollars back to USD."""
    return micro / MICRO_USD_PER_USD


def seconds_to_ms(seconds: float) -> int:
    """Convert seconds to integer milliseconds (nearest)."""
    return int(round(seconds * MS_PER_SECOND))


def ms_to_seconds(ms: int) -> float:
    """Convert integer milliseconds to seconds."""
    return ms / MS_PER_SECOND


def token_cost_micro(tokens: float, price_per_1k_usd: float) -> int:
    """
    Cost of generating ``tokens`` output tokens, in micro-dollars.

    Args:
        tokens (float): Number of output tokens (may be an expectation).
        price_per_1k_usd (float): Model price per 1000 output tokens.

    Returns:
        int: Cost in micro-USD, rounded to the nearest unit.
    """
    return int(round(tokens * price_per_1k_usd * MICRO_USD_PER_USD / TOKENS_PER_PRICE_UNIT))


def token_cost_micro_array(tokens: np.ndarray, price_per_1k_usd: float) -> np.ndarray:
    """Vectorised token_cost_micro over an integer token array."""
    scale = price_per_1k_usd * MICRO_USD_PER_USD / TOKENS_PER_PRICE_UNIT
    return np.rint(tokens * scale).astype(np.int64)


def generation_latency_ms(tokens: float, tokens_per_second: float) -> int:
    """
    Wall-clock time to generate ``tokens`` tokens, in milliseconds.

    Returns 0 for a non-positive throughput so validation can report the
    violation instead of failing here. Positive latencies are at least 1 ms.
    """
    if tokens_per_second <= 0:
        return 0
    return max(1, int(round(tokens / tokens_per_second * MS_PER_SECOND)))


def latency_s_to_ms(latency_s: float) -> int:
    """Recorded latency in seconds to a positive integer millisecond count."""
    return max(1, int(math.floor(latency_s * MS_PER_SECOND + 0.5)))
