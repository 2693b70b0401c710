"""Synthetic benchmark data: copula samplers composed with margin quantiles.

Copulas
-------
gaussian
    Equicorrelated Gaussian copula, correlation ``sin(pi * tau / 2)``.
gumbel
    Archimedean Gumbel copula, ``theta = 1 / (1 - tau)``, sampled exactly by
    the Marshall-Olkin frailty construction with a positive-stable mixing
    variable (Kanter's representation).
husler_reiss
    Max-stable Husler-Reiss copula with variogram
    ``Gamma_ij = 2 (1 - rho**|i-j|)``, sampled exactly by the extremal-function
    algorithm of Dombry, Engelke and Oesting (2016).
iid
    Independent uniforms.

Every sampler returns an ``(n, d)`` array strictly inside ``(0, 1)``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .evt import ParetoMargin

COPULAS = ("gaussian", "gumbel", "husler_reiss", "iid", "hickling")
LABELS = ("Pareto", "Gaussian", "Other")

_U_LO = np.nextafter(0.0, 1.0)
_U_HI = np.nextafter(1.0, 0.0)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _open_unit(u):
    # Guards the measure-zero event of rounding onto the boundary.
    return np.clip(u, _U_LO, _U_HI)


def _check_unit_param(name, value):
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")


def gaussian_copula_correlation(tau: float) -> float:
    return math.sin(math.pi * tau / 2.0)


def sample_gaussian_copula(tau: float, d: int, n: int, seed) -> np.ndarray:
    _check_unit_param("tau", tau)
    rng = _rng(seed)
    rho = gaussian_copula_correlation(tau)
    # One-factor form of the equicorrelation matrix.
    common = rng.standard_normal((n, 1))
    idio = rng.standard_normal((n, d))
    z = math.sqrt(rho) * common + math.sqrt(1.0 - rho) * idio
    return _open_unit(special.ndtr(z))


def sample_positive_stable(a: float, size, rng) -> np.ndarray:
    """Positive stable variates with Laplace transform ``exp(-s**a)``, ``0 < a <= 1``.

    Kanter's representation with ``Theta ~ U(0, pi)`` and ``W ~ Exp(1)``.
    """
    if not 0.0 < a <= 1.0:
        raise ValueError("stability index must lie in (0, 1]")
    theta = rng.uniform(0.0, math.pi, size)
    w = rng.exponential(1.0, size)
    if a == 1.0:
        return np.ones(size)
    log_v = (
        a * np.log(np.sin(a * theta))
        + (1.0 - a) * np.log(np.sin((1.0 - a) * theta))
        - np.log(np.sin(theta))
    ) / a - (1.0 - a) / a * np.log(w)
    return np.exp(log_v)


def sample_gumbel_copula(tau: float, d: int, n: int, seed) -> np.ndarray:
    _check_unit_param("tau", tau)
    rng = _rng(seed)
    theta = 1.0 / (1.0 - tau)
    a = 1.0 / theta
    v = sample_positive_stable(a, (n, 1), rng)
    e = rng.exponential(1.0, (n, d))
    return _open_unit(np.exp(-((e / v) ** a)))


def husler_reiss_variogram(rho: float, d: int) -> np.ndarray:
    lag = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    return 2.0 * (1.0 - rho**lag)


def husler_reiss_extremal_coefficient(gamma_ij: float) -> float:
    """Bivariate extremal coefficient ``2 * Phi(sqrt(Gamma_ij) / 2)``."""
    return 2.0 * float(special.ndtr(math.sqrt(gamma_ij) / 2.0))


def _spectral_factors(variogram):
    """Cholesky factors of ``W - W_j`` for every anchor ``j``."""
    d = variogram.shape[0]
    factors = []
    for j in range(d):
        others = [i for i in range(d) if i != j]
        g = variogram[np.ix_(others, others)]
        gj = variogram[others, j]
        cov = 0.5 * (gj[:, None] + gj[None, :] - g)
        factors.append((np.array(others), np.linalg.cholesky(cov) if others else None))
    return factors


def sample_max_stable_hr(variogram: np.ndarray, n: int, rng) -> np.ndarray:
    """Husler-Reiss max-stable vectors with unit Frechet margins.

    Extremal-function algorithm, vectorized over rows: for each anchor ``j``
    Poisson points ``zeta`` are drawn in decreasing order while
    ``zeta > Z_j``; a proposal ``zeta * Y`` with
    ``Y_i = exp(W_i - W_j - Gamma_ij / 2)`` is kept only if it does not
    exceed ``Z`` on the already-processed coordinates ``0..j-1``.
    """
    d = variogram.shape[0]
    factors = _spectral_factors(variogram)
    z = np.zeros((n, d))
    for j in range(d):
        others, chol = factors[j]
        shift = variogram[others, j] / 2.0
        e = rng.exponential(1.0, n)
        active = np.arange(n)
        zeta = 1.0 / e
        keep = zeta > z[:, j]
        active, e = active[keep], e[keep]
        while active.size:
            m = active.size
            y = np.ones((m, d))
            if chol is not None:
                g = rng.standard_normal((m, d - 1)) @ chol.T
                y[:, others] = np.exp(g - shift)
            proposal = (1.0 / e)[:, None] * y
            if j == 0:
                accept = np.ones(m, dtype=bool)
            else:
                accept = np.all(proposal[:, :j] < z[active, :j], axis=1)
            rows = active[accept]
            z[rows] = np.maximum(z[rows], proposal[accept])
            e = e + rng.exponential(1.0, m)
            keep = 1.0 / e > z[active, j]
            active, e = active[keep], e[keep]
    return z


def sample_husler_reiss(rho: float, d: int, n: int, seed) -> np.ndarray:
    _check_unit_param("rho", rho)
    rng = _rng(seed)
    z = sample_max_stable_hr(husler_reiss_variogram(rho, d), n, rng)
    return _open_unit(np.exp(-1.0 / z))


def sample_independent(d: int, n: int, seed) -> np.ndarray:
    return _open_unit(1.0 - _rng(seed).random((n, d)))


# --------------------------------------------------------------------------
# Margins


@dataclass(frozen=True)
class MarginSpec:
    """One column's law: ``pareto`` (symmetrized, tail index ``param``),
    ``gaussian`` (standard) or ``student_t`` (``param`` degrees of freedom)."""

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in ("pareto", "gaussian", "student_t"):
            raise ValueError(f"unknown margin kind {self.kind!r}")
        if self.kind != "gaussian" and not (self.param and self.param > 0):
            raise ValueError(f"{self.kind} margin needs a positive parameter")

    @property
    def label(self) -> str:
        return {"pareto": "Pareto", "gaussian": "Gaussian"}.get(self.kind, "Other")

    def quantile(self, u):
        if self.kind == "pareto":
            return ParetoMargin(1.0 / self.param, symmetrized=True).quantile(u)
        if self.kind == "gaussian":
            return special.ndtri(u)
        return stats.t.ppf(u, self.param)

    def to_list(self):
        return [self.kind] if self.param is None else [self.kind, self.param]

    @classmethod
    def parse(cls, item):
        if isinstance(item, MarginSpec):
            return item
        if isinstance(item, str):
            return cls(item)
        kind, *rest = item
        return cls(kind, float(rest[0]) if rest else None)


def default_margins(d: int, alpha: float, pareto_fraction: float = 0.7) -> list[MarginSpec]:
    """First ``ceil(0.7 d)`` columns symmetrized Pareto(alpha), the rest Gaussian."""
    # round before ceil so that e.g. 0.7 * 20 counts as exactly 14
    n_pareto = math.ceil(round(pareto_fraction * d, 9))
    return [MarginSpec("pareto", alpha)] * n_pareto + [MarginSpec("gaussian")] * (d - n_pareto)


@dataclass
class SampleMatrix:
    data: np.ndarray
    margin_labels: list[str]
    spec_fingerprint: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("data must be an n x d matrix")
        if len(self.margin_labels) != self.data.shape[1]:
            raise ValueError("one margin label per column is required")
        bad = set(self.margin_labels) - set(LABELS)
        if bad:
            raise ValueError(f"unknown margin labels {sorted(bad)}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def rows(self, sl) -> "SampleMatrix":
        return SampleMatrix(self.data[sl], list(self.margin_labels), self.spec_fingerprint, self.seed)

    def save(self, path) -> None:
        """Write ``path`` as CSV plus a ``<path>.meta.json`` sidecar."""
        path = Path(path)
        np.savetxt(path, self.data, delimiter=",", fmt="%.17g")
        meta = {"labels": self.margin_labels, "spec_fingerprint": self.spec_fingerprint,
                "seed": self.seed, "shape": list(self.data.shape)}
        sidecar_path(path).write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, path) -> "SampleMatrix":
        path = Path(path)
        sm = load_csv(path, has_header=False)
        side = sidecar_path(path)
        if side.exists():
            meta = json.loads(side.read_text())
            sm.margin_labels = list(meta["labels"])
            sm.spec_fingerprint = meta.get("spec_fingerprint", "")
            sm.seed = meta.get("seed")
            if len(sm.margin_labels) != sm.d:
                raise ValueError(f"{side}: label count does not match column count")
        return sm


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def compose_margins(u, margins) -> SampleMatrix:
    """Column ``j`` becomes ``quantile_j(u[:, j])``."""
    u = np.asarray(u, dtype=np.float64)
    margins = [MarginSpec.parse(m) for m in margins]
    if u.ndim != 2 or u.shape[1] != len(margins):
        raise ValueError("need one margin per column of u")
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("copula sample must lie strictly inside (0, 1)")
    x = np.empty_like(u)
    for j, m in enumerate(margins):
        x[:, j] = m.quantile(u[:, j])
    return SampleMatrix(x, [m.label for m in margins])


def sample_hickling(d: int, nu: float, n: int, seed) -> SampleMatrix:
    """``d-1`` iid Student-t(nu) columns and a last column ``N(X_{d-1}, 1)``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    if not nu > 0:
        raise ValueError("nu must be positive")
    rng = _rng(seed)
    x = np.empty((n, d))
    x[:, : d - 1] = rng.standard_t(nu, (n, d - 1))
    x[:, d - 1] = x[:, d - 2] + rng.standard_normal(n)
    return SampleMatrix(x, ["Other"] * d)


def load_csv(path, has_header: bool = False) -> SampleMatrix:
    """Read a rectangular numeric CSV; every cell must parse as a finite float."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, record in enumerate(reader):
            if has_header and i == 0:
                continue
            if not record or all(not c.strip() for c in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise ValueError(f"{path}: row {i} has {len(record)} fields, expected {width}")
            vals = []
            for j, cell in enumerate(record):
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(f"{path}: non-numeric value {cell!r} at row {i}, column {j}") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}: non-finite value {cell!r} at row {i}, column {j}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    return SampleMatrix(data, ["Other"] * data.shape[1])


# --------------------------------------------------------------------------
# Dataset recipes


@dataclass
class DatasetSpec:
    """Copula + margins recipe with split sizes and a seed.

    ``dependence`` is Kendall's tau for ``gaussian``/``gumbel``, ``rho`` for
    ``husler_reiss``, the degrees of freedom for ``hickling`` and unused for
    ``iid``.  ``hickling`` ignores ``margins``.
    """

    copula: str
    dependence: float
    d: int
    margins: list = field(default_factory=list)
    n_train: int = 10_000
    n_val: int = 5_000
    n_test: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.copula not in COPULAS:
            raise ValueError(f"unknown copula {self.copula!r}")
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.copula in ("gaussian", "gumbel", "husler_reiss"):
            _check_unit_param("dependence", self.dependence)
        self.margins = [MarginSpec.parse(m) for m in self.margins]
        if self.copula != "hickling" and len(self.margins) != self.d:
            raise ValueError(f"expected {self.d} margins, got {len(self.margins)}")
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def n_total(self) -> int:
        return self.n_train + self.n_val + self.n_test

    def to_dict(self) -> dict:
        out = asdict(self)
        out["margins"] = [m.to_list() for m in self.margins]
        return out

    @classmethod
    def from_dict(cls, payload) -> "DatasetSpec":
        return cls(**payload)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def sample(self) -> SampleMatrix:
        n, d, seed = self.n_total, self.d, self.seed
        if self.copula == "hickling":
            sm = sample_hickling(d, self.dependence, n, seed)
        else:
            sampler = {
                "gaussian": lambda: sample_gaussian_copula(self.dependence, d, n, seed),
                "gumbel": lambda: sample_gumbel_copula(self.dependence, d, n, seed),
                "husler_reiss": lambda: sample_husler_reiss(self.dependence, d, n, seed),
                "iid": lambda: sample_independent(d, n, seed),
            }[self.copula]
            sm = compose_margins(sampler(), self.margins)
        sm.spec_fingerprint = self.fingerprint()
        sm.seed = self.seed
        return sm

    def generate(self) -> tuple[SampleMatrix, SampleMatrix, SampleMatrix]:
        """Train/validation/test splits: consecutive, disjoint, exhaustive."""
        full = self.sample()
        a, b = self.n_train, self.n_train + self.n_val
        return full.rows(slice(0, a)), full.rows(slice(a, b)), full.rows(slice(b, None))
