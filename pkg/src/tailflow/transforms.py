"""Coordinate-wise tail-compressing transforms.

The soft-log ``sign(x) * log(1 + |x|)`` and the smooth ``arcsinh`` share a
logarithmic asymptote.  Both come in a scaled form

    f_s(x) = f(s * x) / s,

where ``s = 1`` is the plain map and ``s -> 0`` recovers the identity.  A
:class:`TransformSpec` stores one scale and one boolean gate per coordinate;
a coordinate is transformed only when its gate is on and its scale is
positive.

Jacobian convention: the forward map contracts, so its log-determinant is
negative, e.g. ``-sum(log(1 + |x_j|))`` for the soft-log.  Densities in data
space are recovered with ``log p_X(x) = log p_Z(Phi(x)) + log_det_jacobian``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InverseOverflowError, NonFiniteInputError

FAMILIES = ("softlog", "arcsinh")
MODES = ("adaptive", "uniform", "identity")

# Largest argument for which exp/sinh stay finite in float64.
_EXP_LIMIT = math.log(np.finfo(np.float64).max)
_SINH_LIMIT = _EXP_LIMIT + math.log(2.0)


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError()


def _as_output(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def soft_log(x):
    """``sign(x) * log(1 + |x|)``, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    return _as_output(np.sign(x) * np.log1p(np.abs(x)), x)


def soft_log_inv(y):
    """Inverse soft-log ``sign(y) * (exp(|y|) - 1)``."""
    y = np.asarray(y, dtype=np.float64)
    _check_finite(y)
    if np.any(np.abs(y) > _EXP_LIMIT):
        raise InverseOverflowError()
    return _as_output(np.sign(y) * np.expm1(np.abs(y)), y)


def phi_s2(x, s2):
    """Scaled soft-log ``sign(x) * log(1 + s2 |x|) / s2``; identity at ``s2 = 0``."""
    if s2 < 0:
        raise ValueError(f"scale must be nonnegative, got {s2}")
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if s2 == 0:
        return _as_output(x.copy(), x)
    return _as_output(np.sign(x) * np.log1p(s2 * np.abs(x)) / s2, x)


def phi_s2_inv(y, s2):
    if s2 < 0:
        raise ValueError(f"scale must be nonnegative, got {s2}")
    y = np.asarray(y, dtype=np.float64)
    _check_finite(y)
    if s2 == 0:
        return _as_output(y.copy(), y)
    if np.any(s2 * np.abs(y) > _EXP_LIMIT):
        raise InverseOverflowError()
    return _as_output(np.sign(y) * np.expm1(s2 * np.abs(y)) / s2, y)


def arcsinh_t(x):
    """``arcsinh(x) = log(x + sqrt(1 + x^2))``; infinitely smooth at the origin."""
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    return _as_output(np.arcsinh(x), x)


def arcsinh_inv(y):
    y = np.asarray(y, dtype=np.float64)
    _check_finite(y)
    if np.any(np.abs(y) > _SINH_LIMIT):
        raise InverseOverflowError()
    return _as_output(np.sinh(y), y)


# Column-block kernels: ``s`` broadcasts against the trailing axis.

def _forward_block(family, x, s):
    if family == "softlog":
        return np.sign(x) * np.log1p(s * np.abs(x)) / s
    return np.arcsinh(s * x) / s


def _inverse_block(family, y, s):
    with np.errstate(over="ignore"):
        if family == "softlog":
            return np.sign(y) * np.expm1(s * np.abs(y)) / s
        return np.sinh(s * y) / s


def _logdet_block(family, x, s):
    if family == "softlog":
        return -np.log1p(s * np.abs(x))
    return -0.5 * np.log1p((s * x) ** 2)


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TransformSpec:
    """Per-coordinate transform: a global family, a scale and a gate per column.

    Instances are immutable; the arrays are stored read-only.
    """

    family: str
    mask: np.ndarray
    s2: np.ndarray
    alpha_max: float = 4.0
    _active: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown transform family {self.family!r}")
        mask = _readonly(self.mask, bool)
        s2 = _readonly(self.s2, np.float64)
        if mask.ndim != 1 or s2.shape != mask.shape:
            raise ValueError("mask and s2 must be 1-D arrays of equal length")
        if np.any(s2 < 0) or not np.all(np.isfinite(s2)):
            raise ValueError("s2 entries must be finite and nonnegative")
        if not self.alpha_max > 0:
            raise ValueError("alpha_max must be positive")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "s2", s2)
        active = np.flatnonzero(mask & (s2 > 0))
        active.setflags(write=False)
        object.__setattr__(self, "_active", active)

    @property
    def dim(self) -> int:
        return self.mask.shape[0]

    @property
    def active(self) -> np.ndarray:
        """Indices of coordinates that are actually transformed."""
        return self._active

    @property
    def families(self) -> list[str]:
        out = ["identity"] * self.dim
        for j in self._active:
            out[j] = self.family
        return out

    @classmethod
    def from_mask(cls, mask, family="softlog", alpha_max=4.0):
        """Binary instance of the scaled family: ``s2 = 1`` where gated, else 0."""
        mask = np.asarray(mask, dtype=bool)
        return cls(family, mask, mask.astype(np.float64), alpha_max)

    @classmethod
    def identity(cls, d):
        return cls.from_mask(np.zeros(d, dtype=bool))

    @classmethod
    def fit(cls, data, mode="adaptive", family="softlog", alpha_max=4.0, k=None):
        """Build a spec from training data.

        ``adaptive`` gates each column on its Hill tail index
        (``alpha_hat <= alpha_max``); ``uniform`` transforms every column;
        ``identity`` transforms none.
        """
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("data must be an n x d matrix")
        d = data.shape[1]
        if mode == "adaptive":
            from .evt import hill_mask

            mask = hill_mask(data, alpha_max=alpha_max, k=k)
        elif mode == "uniform":
            mask = np.ones(d, dtype=bool)
        elif mode == "identity":
            mask = np.zeros(d, dtype=bool)
        else:
            raise ValueError(f"unknown transform mode {mode!r}; expected one of {MODES}")
        return cls.from_mask(mask, family=family, alpha_max=alpha_max)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "alpha_max": float(self.alpha_max),
            "mask": [int(m) for m in self.mask],
            "s2": [float(s) for s in self.s2],
        }

    @classmethod
    def from_dict(cls, payload) -> "TransformSpec":
        return cls(
            payload["family"],
            np.asarray(payload["mask"], dtype=bool),
            np.asarray(payload["s2"], dtype=np.float64),
            float(payload.get("alpha_max", 4.0)),
        )

    def __eq__(self, other):
        if not isinstance(other, TransformSpec):
            return NotImplemented
        return (
            self.family == other.family
            and self.alpha_max == other.alpha_max
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.s2, other.s2)
        )

    __hash__ = None


def _as_matrix(spec, data):
    data = np.asarray(data, dtype=np.float64)
    squeeze = data.ndim == 1
    if squeeze:
        data = data[None, :]
    if data.ndim != 2 or data.shape[1] != spec.dim:
        raise ValueError(
            f"dimension mismatch: transform has {spec.dim} coordinates, data shape {data.shape}"
        )
    return data, squeeze


def apply_forward(spec: TransformSpec, data) -> np.ndarray:
    """Map data to the transformed space; ungated columns are copied bitwise."""
    x, squeeze = _as_matrix(spec, data)
    _check_finite(x)
    out = x.copy()
    cols = spec.active
    if cols.size:
        out[:, cols] = _forward_block(spec.family, x[:, cols], spec.s2[cols])
    return out[0] if squeeze else out


def apply_inverse(spec: TransformSpec, data, clamp: float = math.inf) -> np.ndarray:
    """Map transformed values back to data space.

    Gated columns are first clipped to ``[-clamp, clamp]``; with the default
    ``clamp=inf`` nothing is clipped.  Overflow raises
    :class:`InverseOverflowError` naming the first offending column.
    """
    if not clamp > 0:
        raise ValueError("clamp must be positive (use math.inf to disable)")
    y, squeeze = _as_matrix(spec, data)
    _check_finite(y)
    out = y.copy()
    cols = spec.active
    if cols.size:
        block = y[:, cols]
        if math.isfinite(clamp):
            block = np.clip(block, -clamp, clamp)
        inv = _inverse_block(spec.family, block, spec.s2[cols])
        bad = ~np.isfinite(inv)
        if bad.any():
            raise InverseOverflowError(int(cols[np.argmax(bad.any(axis=0))]))
        out[:, cols] = inv
    return out[0] if squeeze else out


def log_det_jacobian(spec: TransformSpec, x):
    """``log |det d Phi / dx|`` at data-space point(s) ``x``.

    Returns a float for a single vector and an ``(n,)`` array for a matrix.
    """
    xm, squeeze = _as_matrix(spec, x)
    cols = spec.active
    if cols.size == 0:
        out = np.zeros(xm.shape[0])
    else:
        out = _logdet_block(spec.family, xm[:, cols], spec.s2[cols]).sum(axis=1)
    return float(out[0]) if squeeze else out
