"""Noise schedule, SNR, expert-switch decision, and the per-step update rule.

The sampler family is rectified-flow with an Euler update over x0-predicting
backends: t runs from 1 down to 0 on a linear grid with alpha_t = 1 - t and
sigma_t = t.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from .errors import ShapeError
from .tensors import VideoLatent


class ExpertPhase(Enum):
    HIGH_NOISE = "high"
    LOW_NOISE = "low"


def alpha(t: float) -> float:
    return 1.0 - t


def sigma(t: float) -> float:
    return t


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing timesteps in (0, 1]; terminal time is 0."""

    times: tuple[float, ...]

    def __post_init__(self):
        if not self.times:
            raise ValueError("schedule needs at least one step")
        for t in self.times:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"timestep {t} outside (0, 1]")
        for a, b in zip(self.times, self.times[1:]):
            if b >= a:
                raise ValueError("timesteps must be strictly decreasing")

    @property
    def n_steps(self) -> int:
        return len(self.times)

    def pairs(self) -> Iterator[tuple[float, float]]:
        """Yield (t, t_next) for every step; the final t_next is 0."""
        for i, t in enumerate(self.times):
            t_next = self.times[i + 1] if i + 1 < len(self.times) else 0.0
            yield t, t_next


def make_schedule(n_steps: int) -> NoiseSchedule:
    """Linear grid t_i = 1 - (i - 1)/N for i = 1..N."""
    if n_steps < 1:
        raise ValueError(f"step count must be >= 1, got {n_steps}")
    return NoiseSchedule(tuple(1.0 - i / n_steps for i in range(n_steps)))


def snr(t: float) -> float:
    """Signal-to-noise ratio alpha_t^2 / sigma_t^2."""
    s = sigma(t)
    if s == 0.0:
        raise ZeroDivisionError("SNR undefined where sigma_t = 0")
    a = alpha(t)
    return (a * a) / (s * s)


def expert_for(t: float, switch_t: float) -> ExpertPhase:
    """High-noise expert strictly above the switch point, low-noise at or below.

    The boundary goes to the low-noise side so the dropout trigger (t <= T_th)
    fires on the same step the low-noise expert first runs.
    """
    return ExpertPhase.HIGH_NOISE if t > switch_t else ExpertPhase.LOW_NOISE


def euler_step(z_t: VideoLatent, x0_pred: VideoLatent, t: float, t_next: float) -> VideoLatent:
    """One rectified-flow Euler update with velocity v = (z_t - x0_pred) / t.

    At t_next = 0 the update collapses algebraically to x0_pred; that case is
    returned directly so the identity holds bit-exactly.
    """
    if z_t.shape != x0_pred.shape:
        raise ShapeError(f"z_t shape {z_t.shape} != x0_pred shape {x0_pred.shape}")
    if t <= 0.0:
        raise ValueError(f"current timestep must be positive, got {t}")
    if not t > t_next >= 0.0:
        raise ValueError(f"need t > t_next >= 0, got t={t} t_next={t_next}")
    if t_next == 0.0:
        return x0_pred
    coeff = (t_next - t) / t
    return VideoLatent(z_t.data + coeff * (z_t.data - x0_pred.data))
