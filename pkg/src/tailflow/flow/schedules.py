"""Interpolation schedules ``x_t = alpha_t x_0 + beta_t x_1``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ScheduleError

KINDS = ("linear", "vp_trig", "vp_poly", "quadratic")


@dataclass(frozen=True)
class Schedule:
    """Schedule coefficients and their time derivatives.

    =========  ===============  ===============  ====================
    kind       alpha_t          beta_t           notes
    =========  ===============  ===============  ====================
    linear     1 - t            t                straight paths
    vp_trig    cos(pi t / 2)    sin(pi t / 2)    variance preserving
    vp_poly    sqrt(1 - t)      sqrt(t)          derivatives blow up at 0 and 1
    quadratic  (1 - t)^2        1 - (1 - t)^2    fast early decay of alpha
    =========  ===============  ===============  ====================
    """

    kind: str = "linear"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {KINDS}")

    @property
    def variance_preserving(self) -> bool:
        return self.kind in ("vp_trig", "vp_poly")

    @property
    def singular_endpoints(self) -> bool:
        return self.kind == "vp_poly"

    def alpha(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "linear":
            return 1.0 - t
        if self.kind == "vp_trig":
            return np.cos(0.5 * np.pi * t)
        if self.kind == "vp_poly":
            return np.sqrt(1.0 - t)
        return (1.0 - t) ** 2

    def beta(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "linear":
            return t.copy()
        if self.kind == "vp_trig":
            return np.sin(0.5 * np.pi * t)
        if self.kind == "vp_poly":
            return np.sqrt(t)
        return 1.0 - (1.0 - t) ** 2

    def dalpha(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "linear":
            return -np.ones_like(t)
        if self.kind == "vp_trig":
            return -0.5 * np.pi * np.sin(0.5 * np.pi * t)
        if self.kind == "vp_poly":
            self._check_open(t, upper=True)
            return -0.5 / np.sqrt(1.0 - t)
        return -2.0 * (1.0 - t)

    def dbeta(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "linear":
            return np.ones_like(t)
        if self.kind == "vp_trig":
            return 0.5 * np.pi * np.cos(0.5 * np.pi * t)
        if self.kind == "vp_poly":
            self._check_open(t, lower=True)
            return 0.5 / np.sqrt(t)
        return 2.0 * (1.0 - t)

    def _check_open(self, t, lower=False, upper=False):
        if (lower and np.any(t <= 0.0)) or (upper and np.any(t >= 1.0)):
            raise ScheduleError(f"{self.kind} schedule derivative is singular at the endpoints")

    def coefficients(self, t):
        """``(alpha, beta, dalpha, dbeta)`` at ``t``."""
        return self.alpha(t), self.beta(t), self.dalpha(t), self.dbeta(t)

    def training_time_range(self) -> tuple[float, float]:
        """Interval from which training times are drawn."""
        return (1e-5, 1.0 - 1e-5) if self.singular_endpoints else (0.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, payload) -> "Schedule":
        return cls(payload["kind"])


def interpolate(schedule: Schedule, x0, x1, t):
    """Interpolant ``x_t`` and per-pair velocity target ``u``.

    ``x_t = alpha_t x0 + beta_t x1``, ``u = alpha'_t x0 + beta'_t x1``,
    with one time per row.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError("x0 and x1 must have the same shape")
    t = np.asarray(t, dtype=np.float64)
    if np.any((t < 0.0) | (t > 1.0)):
        raise ValueError("t must lie in [0, 1]")
    a, b, da, db = (c[..., None] if np.ndim(c) else c for c in schedule.coefficients(t))
    return a * x0 + b * x1, da * x0 + db * x1
