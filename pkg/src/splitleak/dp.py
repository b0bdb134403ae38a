"""Mitigations: cut-gradient clipping + Gaussian noise, and label randomized
response with privacy-budget bookkeeping."""

import math
from dataclasses import dataclass, field

import numpy as np

ADAPTIVE_MEDIAN = "adaptive_median"
FIXED = "fixed"


@dataclass
class DpConfig:
    """Per-sample cut-gradient clipping and noising parameters.

    ``delta`` is nominal, echoed into logs so an external accountant can
    compute epsilon from (sigma, clip policy, steps, batch size, delta).
    """
    noise_multiplier: float = 0.01
    clip_mode: str = ADAPTIVE_MEDIAN
    clip_norm: float | None = None  # required for clip_mode == "fixed"
    delta: float = 1e-5
    warmup: int = 1024
    ema_rate: float = 0.01

    def __post_init__(self):
        if self.noise_multiplier < 0:
            raise ValueError("noise multiplier must be >= 0")
        if self.clip_mode not in (ADAPTIVE_MEDIAN, FIXED):
            raise ValueError(f"unknown clip mode {self.clip_mode!r}")
        if self.clip_mode == FIXED and (self.clip_norm is None or self.clip_norm <= 0):
            raise ValueError("fixed clip mode needs clip_norm > 0")


@dataclass
class LabelDpConfig:
    flip_probability: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.flip_probability < 0.5:
            raise ValueError("flip probability must be in [0, 0.5)")


@dataclass
class ClipState:
    """Running clip norm: C = 0.5 x estimated median per-sample gradient norm.

    The estimate is the exact median over a warm-up buffer, then an
    exponential-moving update toward each new norm.  Fixed mode ignores the
    estimator and always returns the configured norm.
    """
    config: DpConfig
    norms: list = field(default_factory=list)
    median_estimate: float | None = None
    observed: int = 0

    def observe(self, norm: float):
        self.observed += 1
        if self.config.clip_mode == FIXED:
            return
        if self.median_estimate is None:
            self.norms.append(norm)
            if len(self.norms) >= self.config.warmup:
                self.median_estimate = float(np.median(self.norms))
                self.norms = []
        else:
            r = self.config.ema_rate
            self.median_estimate = (1.0 - r) * self.median_estimate + r * norm

    def clip_norm(self) -> float:
        if self.config.clip_mode == FIXED:
            return self.config.clip_norm
        if self.median_estimate is not None:
            return 0.5 * self.median_estimate
        if not self.norms:
            raise ValueError("clip state has seen no gradients yet")
        return 0.5 * float(np.median(self.norms))


def clip_and_noise(g, state: ClipState, sigma: float, rng) -> np.ndarray:
    """Clip a single cut gradient to the current norm bound and add noise.

    g' = g * min(1, C/|g|) + N(0, (sigma*C)^2 I).  The norm estimator sees
    the unclipped norm first, so the very first gradient is clipped against
    half its own norm.
    """
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    state.observe(norm)
    c = state.clip_norm()
    if norm > c > 0:
        g = g * (c / norm)
    if sigma > 0:
        g = g + rng.normal(0.0, sigma * c, size=g.shape)
    return g


def flip_labels(labels, p: float, rng) -> np.ndarray:
    """Randomized response: each label flips independently with probability p."""
    if not 0.0 <= p < 0.5:
        raise ValueError("flip probability must be in [0, 0.5)")
    labels = np.asarray(labels, dtype=np.int64)
    flips = rng.random(labels.shape) < p
    return np.where(flips, 1 - labels, labels)


def flip_label(y: int, p: float, rng) -> int:
    return int(flip_labels(np.array([y]), p, rng)[0])


def label_dp_epsilon(p: float) -> float:
    """Privacy budget of randomized response with flip probability p."""
    if not 0.0 < p < 0.5:
        raise ValueError("flip probability must be in (0, 0.5)")
    return math.log((1.0 - p) / p)


def flip_probability_for_epsilon(epsilon: float) -> float:
    """Inverse of label_dp_epsilon: p = 1 / (e^eps + 1)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return 1.0 / (math.exp(epsilon) + 1.0)
