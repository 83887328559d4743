"""
Planner-side perturbation of rollout pools.

Two Gaussian perturbations are supported: token-length noise applied to each
record in the pool's normalized length space, and success-rate noise that
moves a pool's success fraction and then flips the minimum number of labels
to realize it. Both return fresh pools; the input is never modified, so the
execution side keeps sampling from the clean data.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import DEFAULT_CLIP_EPS, STREAM_NOISE, NoiseKind
from src.core.errors import InputError
from src.core.workflow import PoolSamples, RolloutPool
from src.utils.rng import derive_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSpec:
    """
    One perturbation setting.

    Attributes:
        kind (NoiseKind): Token-length or success-rate noise.
        sigma (float): Standard deviation of the Gaussian noise, >= 0.
        eps (float): Clip margin, in (0, 0.5).
        seed (int): Seed of the per-pair noise streams.
    """

    kind: NoiseKind
    sigma: float
    eps: float = DEFAULT_CLIP_EPS
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, NoiseKind):
            object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.sigma < 0:
            raise InputError(f"sigma must be non-negative, got {self.sigma}")
        if not 0.0 < self.eps < 0.5:
            raise InputError(f"eps must lie in (0, 0.5), got {self.eps}")

    @property
    def label(self) -> str:
        return f"{self.kind.value}:{self.sigma:g}"


def noise_stream(spec: NoiseSpec, node: int, model: int) -> np.random.Generator:
    """Independent stream for one (node, model) pool."""
    return derive_stream(spec.seed, STREAM_NOISE, node, model)


def flip_to_target(success: np.ndarray, target: int, rng: np.random.Generator) -> np.ndarray:
    """
    Flip the fewest labels so that exactly ``target`` records succeed.

    The records to flip are drawn uniformly at random among those of the
    polarity that has to change.

    Args:
        success (np.ndarray): Boolean success flags.
        target (int): Desired success count, in [0, len(success)].
        rng (np.random.Generator): Stream choosing which records flip.

    Returns:
        np.ndarray: New flag array.
    """
    flags = np.array(success, dtype=bool)
    if not 0 <= target <= flags.size:
        raise InputError(f"Target success count {target} outside [0, {flags.size}]")
    delta = target - int(np.count_nonzero(flags))
    if delta > 0:
        chosen = rng.choice(np.flatnonzero(~flags), size=delta, replace=False)
        flags[chosen] = True
    elif delta < 0:
        chosen = rng.choice(np.flatnonzero(flags), size=-delta, replace=False)
        flags[chosen] = False
    return flags


def perturb_token_lengths(pool: RolloutPool, spec: NoiseSpec) -> RolloutPool:
    """
    Gaussian noise on token lengths in normalized space.

    For each pair, c_max is the pool's longest record and every record gets
    c̃ = c_max · clip(c / c_max + σ z, ε, 1 - ε) with its own z, rounded to a
    positive integer. Success flags and latencies are unchanged.

    Args:
        pool (RolloutPool): Clean pool.
        spec (NoiseSpec): Token-length noise setting.

    Returns:
        RolloutPool: Perturbed copy.
    """
    if spec.kind is not NoiseKind.TOKEN_LENGTH:
        raise InputError(f"perturb_token_lengths needs token-length noise, got {spec.kind.value}")
    perturbed = {}
    for (v, m), samples in pool.items():
        c_max = int(samples.tokens.max()) if len(samples) else 0
        if c_max <= 0:
            perturbed[(v, m)] = samples
            continue
        z = noise_stream(spec, v, m).standard_normal(len(samples))
        normalized = np.clip(samples.tokens / c_max + spec.sigma * z, spec.eps, 1.0 - spec.eps)
        tokens = np.maximum(1, np.rint(normalized * c_max)).astype(np.int64)
        perturbed[(v, m)] = PoolSamples(samples.success, tokens, samples.latency_s)
    logger.debug("Token-length noise %s applied to %d pairs", spec.label, len(perturbed))
    return RolloutPool(perturbed)


def perturbed_rate(p: float, spec: NoiseSpec, z: float) -> float:
    """p̃ = clip(p + σ z, ε, 1 - ε)."""
    return float(np.clip(p + spec.sigma * z, spec.eps, 1.0 - spec.eps))


def target_count(p_tilde: float, n: int) -> int:
    """round(p̃ · n), halves rounded up."""
    return int(np.floor(p_tilde * n + 0.5))


def perturb_success_rate(pool: RolloutPool, spec: NoiseSpec, realized: Optional[dict] = None) -> RolloutPool:
    """
    Gaussian noise on success rates with minimal label flipping.

    Each pair draws one z, sets p̃ = clip(p + σ z, ε, 1 - ε) and flips labels
    until round(p̃ · n) records succeed. Tokens and latencies are unchanged.

    Args:
        pool (RolloutPool): Clean pool.
        spec (NoiseSpec): Success-rate noise setting.
        realized (Optional[dict]): When given, filled with p̃ per pair.

    Returns:
        RolloutPool: Perturbed copy.
    """
    if spec.kind is not NoiseKind.SUCCESS_RATE:
        raise InputError(f"perturb_success_rate needs success-rate noise, got {spec.kind.value}")
    perturbed = {}
    for (v, m), samples in pool.items():
        n = len(samples)
        if n == 0:
            perturbed[(v, m)] = samples
            continue
        rng = noise_stream(spec, v, m)
        p = float(np.count_nonzero(samples.success)) / n
        p_tilde = perturbed_rate(p, spec, float(rng.standard_normal()))
        if realized is not None:
            realized[(v, m)] = p_tilde
        flags = flip_to_target(samples.success, target_count(p_tilde, n), rng)
        perturbed[(v, m)] = PoolSamples(flags, samples.tokens, samples.latency_s)
    logger.debug("Success-rate noise %s applied to %d pairs", spec.label, len(perturbed))
    return RolloutPool(perturbed)


def perturb_pool(pool: RolloutPool, spec: NoiseSpec) -> RolloutPool:
    """Dispatch on ``spec.kind``."""
    if spec.kind is NoiseKind.TOKEN_LENGTH:
        return perturb_token_lengths(pool, spec)
    return perturb_success_rate(pool, spec)
