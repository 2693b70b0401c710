"""Closed-form velocity fields used as oracles.

Each class exposes the same ``forward(x, t)`` / ``jvp(x, t, v)`` interface as
:class:`~tailflow.nn.VelocityNet` and can be wrapped in a
:class:`~tailflow.flow.model.TrainedModel` in place of a trained network.
"""
from __future__ import annotations

import numpy as np

from .schedules import Schedule


def _col(t, n):
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    return t[:, None]


class GaussianPathField:
    """Exact marginal velocity when the data are ``N(0, sigma^2 I)``.

    ``x_t`` is then Gaussian with variance ``alpha^2 sigma^2 + beta^2`` and
    the velocity is linear: ``v = c(t) x`` with
    ``c = (alpha' alpha sigma^2 + beta' beta) / (alpha^2 sigma^2 + beta^2)``.
    """

    def __init__(self, d, sigma=1.0, schedule: Schedule | None = None):
        self.d = int(d)
        self.sigma = float(sigma)
        self.schedule = schedule or Schedule("linear")

    def coefficient(self, t):
        a, b, da, db = self.schedule.coefficients(t)
        s2 = self.sigma**2
        return (da * a * s2 + db * b) / (a * a * s2 + b * b)

    def forward(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        return self.coefficient(_col(t, x.shape[0])) * x

    __call__ = forward

    def jvp(self, x, t, v):
        x = np.asarray(x, dtype=np.float64)
        return self.coefficient(_col(t, x.shape[0])) * np.asarray(v, dtype=np.float64)

    def score(self, x, t):
        a, b = self.schedule.alpha(t), self.schedule.beta(t)
        return -np.asarray(x, dtype=np.float64) / (a * a * self.sigma**2 + b * b)


class PointMassField:
    """Exact velocity when every data point equals ``center``.

    Given ``x_t`` the noise is known exactly, ``x1 = (x_t - alpha c) / beta``,
    so ``v = alpha' c + beta' (x_t - alpha c) / beta``.  Defined for ``t > 0``.
    """

    def __init__(self, center, schedule: Schedule | None = None):
        self.center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        self.d = self.center.shape[0]
        self.schedule = schedule or Schedule("linear")

    def forward(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        a, b, da, db = self.schedule.coefficients(_col(t, x.shape[0]))
        return da * self.center + db * (x - a * self.center) / b

    __call__ = forward

    def jvp(self, x, t, v):
        x = np.asarray(x, dtype=np.float64)
        b = self.schedule.beta(_col(t, x.shape[0]))
        db = self.schedule.dbeta(_col(t, x.shape[0]))
        return (db / b) * np.asarray(v, dtype=np.float64)


class LinearField:
    """Time-independent ``v(x) = x A^T``; the divergence is ``trace(A)``."""

    def __init__(self, A):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.d = self.A.shape[0]

    def forward(self, x, t):
        return np.asarray(x, dtype=np.float64) @ self.A.T

    __call__ = forward

    def jvp(self, x, t, v):
        return np.asarray(v, dtype=np.float64) @ self.A.T
