"""Forward-diffusion coefficients and distillation weights.

The default schedule is the continuous variance-preserving one,
``alpha_t = exp(-t)`` and ``sigma_t = sqrt(1 - alpha_t**2)`` on ``[0, T]``.
Every function accepts scalars or arrays of times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("variance-preserving-exp",)
WEIGHT_KINDS = ("unit", "sigma", "sigma_squared")


class ScheduleDomainError(ValueError):
    """Raised when a time lies outside the schedule's domain."""


@dataclass(frozen=True)
class DiffusionSchedule:
    kind: str = "variance-preserving-exp"
    T: float = 3.0
    t_min: float = 0.05
    t_max: float | None = None
    weight_kind: str = "unit"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.weight_kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {self.weight_kind!r}; expected one of {WEIGHT_KINDS}")
        if self.t_max is None:
            object.__setattr__(self, "t_max", float(self.T))
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if not 0 < self.t_min <= self.t_max <= self.T:
            raise ValueError(
                f"need 0 < t_min <= t_max <= T, got t_min={self.t_min}, t_max={self.t_max}, T={self.T}")

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.T) or np.any(np.isnan(t)):
            raise ScheduleDomainError(f"time outside [0, {self.T}]: {t}")
        return t

    def alpha(self, t):
        t = self._check(t)
        out = np.exp(-t)
        return float(out) if out.ndim == 0 else out

    def sigma(self, t):
        t = self._check(t)
        # -expm1(-2t) == 1 - exp(-t)**2 without cancellation near t = 0
        out = np.sqrt(-np.expm1(-2.0 * t))
        return float(out) if out.ndim == 0 else out

    def alpha_sigma(self, t):
        return self.alpha(t), self.sigma(t)

    def weight(self, t):
        """Return ``(omega, Omega)`` with ``Omega = omega * sigma / alpha``."""
        a, s = self.alpha(t), self.sigma(t)
        if self.weight_kind == "unit":
            omega = np.ones_like(np.asarray(s, dtype=float))
        elif self.weight_kind == "sigma":
            omega = np.asarray(s, dtype=float)
        else:
            omega = np.asarray(s, dtype=float) ** 2
        big_omega = omega * s / a
        if np.ndim(omega) == 0:
            return float(omega), float(big_omega)
        return omega, big_omega

    def omega(self, t):
        return self.weight(t)[0]

    def sample_t(self, rng, size=None):
        """Uniform draw(s) on ``[t_min, t_max]``."""
        if self.t_min == self.t_max:
            return float(self.t_min) if size is None else np.full(size, float(self.t_min))
        return rng.uniform(self.t_min, self.t_max, size=size)

    def grid(self, n=64):
        """Deterministic uniform quadrature grid on ``[t_min, t_max]``."""
        return np.linspace(self.t_min, self.t_max, n)
