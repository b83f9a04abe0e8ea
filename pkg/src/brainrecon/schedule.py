"""Deterministic diffusion-schedule arithmetic for the generative stage.

The sampler runs a small number of inference steps against a 1000-step
training discretization whose betas are scaled-linear: sqrt(beta) is linear
between sqrt(beta_start) and sqrt(beta_end). Cumulative signal fractions
(alpha_bar) are computed on the full training grid and then indexed at the
subsampled steps, so the same inference step count always lands on the same
training timesteps.

Image-to-image strength [0, 1] converts to a step count by flooring
strength * total_steps; partial noising then starts the reverse process from
that step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

TRAINING_TIMESTEPS = 1000
BETA_START = 0.00085
BETA_END = 0.012
DEFAULT_TOTAL_STEPS = 50

GUIDANCE_VISION = 0.6
GUIDANCE_TEXT = 0.4
DEFAULT_STRENGTH = 0.75


@dataclass(frozen=True)
class DiffusionSchedule:
    """Subsampled noise schedule indexed by inference step.

    ``alpha_bar`` has ``total_steps + 1`` entries: entry 0 is exactly 1.0
    (the clean signal), entry t is the cumulative signal fraction after the
    t-th subsampled training timestep. ``timesteps`` holds the underlying
    training-grid indices, one per inference step.
    """

    total_steps: int
    training_timesteps: int
    beta_start: float
    beta_end: float
    betas: np.ndarray  # (total_steps,) f64, per-step beta on the training grid
    alpha_bar: np.ndarray  # (total_steps + 1,) f64
    timesteps: np.ndarray  # (total_steps,) i64, training-grid indices

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.alpha_bar.shape != (self.total_steps + 1,):
            raise ConfigError("alpha_bar must have total_steps + 1 entries")
        if self.alpha_bar[0] != 1.0:
            raise ConfigError("alpha_bar[0] must be exactly 1.0")
        inner = self.alpha_bar[1:]
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ConfigError("alpha_bar must be strictly decreasing")
        if np.any(inner <= 0.0) or np.any(inner >= 1.0):
            raise ConfigError("alpha_bar values for t >= 1 must lie in (0, 1)")

    @classmethod
    def nominal(cls, total_steps: int = DEFAULT_TOTAL_STEPS) -> "DiffusionSchedule":
        """The scaled-linear schedule used throughout: 1000 training steps,
        beta from 0.00085 to 0.012."""
        return cls.scaled_linear(total_steps)

    @classmethod
    def scaled_linear(
        cls,
        total_steps: int = DEFAULT_TOTAL_STEPS,
        training_timesteps: int = TRAINING_TIMESTEPS,
        beta_start: float = BETA_START,
        beta_end: float = BETA_END,
    ) -> "DiffusionSchedule":
        if not 1 <= total_steps <= training_timesteps:
            raise ConfigError(
                f"total_steps must lie in [1, {training_timesteps}], got {total_steps}"
            )
        sqrt_beta = np.linspace(
            math.sqrt(beta_start), math.sqrt(beta_end), training_timesteps, dtype=np.float64
        )
        full_betas = sqrt_beta**2
        full_alpha_bar = np.cumprod(1.0 - full_betas)
        # Inference step k (1-based) maps to training index ceil(k*T/total) - 1,
        # so the final step always lands on the last training timestep.
        ks = np.arange(1, total_steps + 1)
        idx = np.ceil(ks * training_timesteps / total_steps).astype(np.int64) - 1
        alpha_bar = np.empty(total_steps + 1, dtype=np.float64)
        alpha_bar[0] = 1.0
        alpha_bar[1:] = full_alpha_bar[idx]
        return cls(
            total_steps=total_steps,
            training_timesteps=training_timesteps,
            beta_start=beta_start,
            beta_end=beta_end,
            betas=full_betas[idx],
            alpha_bar=alpha_bar,
            timesteps=idx,
        )


def steps_from_strength(total_steps: int, strength: float) -> int:
    """Number of inference steps actually run at an img2img strength."""
    if not 0.0 <= strength <= 1.0:
        raise ConfigError(f"strength must lie in [0, 1], got {strength}")
    if total_steps < 1:
        raise ConfigError("total_steps must be >= 1")
    return int(math.floor(total_steps * strength))


def noise(z0: np.ndarray, t: int, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """Forward-noise a clean latent to schedule position ``t``.

    Returns sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps; t=0 is
    the identity on z0.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: z0 {z0.shape} vs eps {eps.shape}")
    if not 0 <= t <= sched.total_steps:
        raise ValueError(f"t must lie in [0, {sched.total_steps}], got {t}")
    a = sched.alpha_bar[t]
    return math.sqrt(a) * z0 + math.sqrt(1.0 - a) * eps


@dataclass(frozen=True)
class GuidanceConfig:
    """Dual-guidance mixing weights plus img2img strength."""

    w_vision: float = GUIDANCE_VISION
    w_text: float = GUIDANCE_TEXT
    strength: float = DEFAULT_STRENGTH

    def __post_init__(self):
        if self.w_vision < 0 or self.w_text < 0:
            raise ConfigError("guidance weights must be >= 0")
        if abs(self.w_vision + self.w_text - 1.0) > 1e-9:
            raise ConfigError(
                f"guidance weights must sum to 1, got "
                f"{self.w_vision} + {self.w_text}"
            )
        if not 0.0 <= self.strength <= 1.0:
            raise ConfigError(f"strength must lie in [0, 1], got {self.strength}")


def mix_guidance(
    cfg: GuidanceConfig, vision_term: np.ndarray, text_term: np.ndarray
) -> np.ndarray:
    """Convex combination of the two conditioning pathways."""
    vision_term = np.asarray(vision_term, dtype=np.float64)
    text_term = np.asarray(text_term, dtype=np.float64)
    if vision_term.shape != text_term.shape:
        raise ValueError(
            f"shape mismatch: vision {vision_term.shape} vs text {text_term.shape}"
        )
    return cfg.w_vision * vision_term + cfg.w_text * text_term


def format_schedule_csv(sched: DiffusionSchedule) -> str:
    """Schedule as CSV text: rows t=0..total_steps with beta and alpha_bar.

    Row t=0 is the clean state (beta blank, alpha_bar 1.0).
    """
    lines = ["# schedule: nominal", "t,beta_t,alpha_bar_t", "0,,1.0"]
    for t in range(1, sched.total_steps + 1):
        lines.append(f"{t},{sched.betas[t - 1]:.12g},{sched.alpha_bar[t]:.12g}")
    return "\n".join(lines) + "\n"


def write_schedule_csv(sched: DiffusionSchedule, path: str | Path) -> None:
    Path(path).write_text(format_schedule_csv(sched))
