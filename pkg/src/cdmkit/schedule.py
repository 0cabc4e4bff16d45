"""Noise schedule: continuous sigma(t), its ladders, and step sizes.

The corruption level follows a shifted sine law on t in [0, 1], rising
from a small positive floor at t=0 to sigma_max at t=1. Samplers walk a
discretized ladder of decreasing sigmas; the relative Euler step between
two rungs is eta = (sigma_curr - sigma_next) / sigma_curr.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

DEFAULT_SHIFT = 0.008


@dataclass(frozen=True)
class SineSchedule:
    """sigma(t) = sigma_max * sin(((t + s) / (1 + s)) * pi / 2)."""

    sigma_max: float = 1.0
    s: float = DEFAULT_SHIFT

    def __post_init__(self):
        if self.sigma_max <= 0.0:
            raise DomainError(f"sigma_max must be positive, got {self.sigma_max}")
        if self.s < 0.0:
            raise DomainError(f"shift must be nonnegative, got {self.s}")

    def sigma_of_t(self, t):
        return sigma_of_t(self, t)


def sigma_of_t(sched: SineSchedule, t):
    """Evaluate the schedule; t may be a scalar or an array in [0, 1]."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise DomainError("t must lie in [0, 1]")
    val = sched.sigma_max * np.sin((t_arr + sched.s) / (1.0 + sched.s) * (np.pi / 2.0))
    return float(val) if np.isscalar(t) or t_arr.ndim == 0 else val


@dataclass(frozen=True)
class SigmaLadder:
    """Strictly decreasing noise levels, sigmas[0] highest, sigmas[-1] the floor."""

    sigmas: np.ndarray

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=np.float64)
        object.__setattr__(self, "sigmas", sig)
        if sig.ndim != 1 or sig.size < 2:
            raise DomainError("ladder needs at least two levels")
        if np.any(sig < 0.0):
            raise DomainError("ladder sigmas must be nonnegative")
        if np.any(np.diff(sig) >= 0.0):
            raise DomainError("ladder sigmas must be strictly decreasing")

    @property
    def n_steps(self) -> int:
        return self.sigmas.size - 1

    def etas(self) -> np.ndarray:
        """Relative Euler step for each rung pair, each in (0, 1]."""
        return (self.sigmas[:-1] - self.sigmas[1:]) / self.sigmas[:-1]


def discretize(sched: SineSchedule, t_steps: int) -> SigmaLadder:
    """Ladder of t_steps + 1 sigmas at uniform t from 1 down to 0."""
    if t_steps < 1:
        raise DomainError(f"need at least one step, got {t_steps}")
    t_grid = np.linspace(1.0, 0.0, t_steps + 1)
    return SigmaLadder(sigma_of_t(sched, t_grid))


def euler_eta(sigma_curr: float, sigma_next: float) -> float:
    """Relative step between two noise levels; lands in (0, 1]."""
    if sigma_curr <= 0.0 or not sigma_curr > sigma_next or sigma_next < 0.0:
        raise DomainError(
            f"need sigma_curr > sigma_next >= 0 with sigma_curr > 0, "
            f"got ({sigma_curr}, {sigma_next})"
        )
    return (sigma_curr - sigma_next) / sigma_curr


def geometric_sigma(sigma_start: float, eta: float, k: int) -> float:
    """Noise level after k constant-eta steps: sigma_start * (1 - eta)^k."""
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    return sigma_start * (1.0 - eta) ** k
