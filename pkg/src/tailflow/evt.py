"""Extreme-value primitives and Monte Carlo checks of the log-space tail theory.

Conventions: a Pareto variable with shape ``gamma`` has survival
``P(X > t) = t**(-1/gamma)`` for ``t >= 1``; its tail index is
``alpha = 1/gamma``.  The Hill estimator returns both.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateTailError
from .transforms import soft_log


@dataclass(frozen=True)
class HillEstimate:
    alpha_hat: float
    gamma_hat: float
    k: int
    n: int


def default_gating_k(n: int) -> int:
    """Order statistics used for the per-coordinate gate: top 5%, at least 10."""
    return max(10, math.ceil(0.05 * n))


def oracle_k(n: int) -> int:
    return math.ceil(math.sqrt(n))


def hill(sample, k: int) -> HillEstimate:
    """Hill estimator on absolute values using the ``k`` largest.

    ``gamma_hat = mean(log(|x|_(n-i+1) / |x|_(n-k)))`` for ``i = 1..k``.
    """
    a = np.abs(np.asarray(sample, dtype=np.float64).ravel())
    n = a.size
    k = int(k)
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    if not np.all(np.isfinite(a)):
        raise ValueError("sample contains non-finite values")
    # Only the top k+1 order statistics matter.
    top = np.partition(a, n - k - 1)[n - k - 1:]
    threshold = top.min()
    if threshold <= 0:
        raise ValueError(f"need at least k+1={k + 1} strictly positive |x| values")
    upper = np.sort(top)[1:]
    gamma_hat = float(np.mean(np.log(upper / threshold)))
    if gamma_hat <= 0:
        raise DegenerateTailError()
    return HillEstimate(alpha_hat=1.0 / gamma_hat, gamma_hat=gamma_hat, k=k, n=n)


def hill_exact_grid_gamma(gamma: float, k: int) -> float:
    """Hill value on the noiseless grid ``x_i = (i/(n+1))**-gamma``.

    The log-spacings are ``gamma * log((k+1)/i)``, so the estimate is
    ``gamma * (log(k+1) - log(k!)/k)`` independently of ``n``.
    """
    return gamma * (math.log(k + 1) - math.lgamma(k + 1) / k)


def pareto_grid(gamma: float, n: int) -> np.ndarray:
    """Deterministic Pareto quantile grid ``(i/(n+1))**-gamma``, ``i = 1..n``."""
    return (np.arange(1, n + 1) / (n + 1)) ** (-gamma)


def hill_mask(data, alpha_max: float = 4.0, k: int | None = None) -> np.ndarray:
    """Boolean gate per column: ``hill(column).alpha_hat <= alpha_max``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be an n x d matrix")
    n, d = data.shape
    k = default_gating_k(n) if k is None else k
    if k >= n:
        k = n - 1
    return np.array([hill(data[:, j], k).alpha_hat <= alpha_max for j in range(d)])


@dataclass(frozen=True)
class ParetoMargin:
    """Pareto law on ``[1, inf)``; optionally symmetrized as ``S * P`` with a fair sign."""

    gamma: float
    symmetrized: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def alpha(self) -> float:
        return 1.0 / self.gamma

    def quantile(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any((p <= 0) | (p >= 1)):
            raise ValueError("p must lie strictly inside (0, 1)")
        if not self.symmetrized:
            out = (1.0 - p) ** (-self.gamma)
        else:
            # The support excludes (-1, 1); p = 1/2 maps to the sign boundary 0.
            out = np.sign(2.0 * p - 1.0) * (2.0 * np.minimum(p, 1.0 - p)) ** (-self.gamma)
        return float(out) if out.ndim == 0 else out

    def survival(self, t):
        t = np.asarray(t, dtype=np.float64)
        if not self.symmetrized:
            out = np.where(t < 1.0, 1.0, np.abs(np.maximum(t, 1.0)) ** (-1.0 / self.gamma))
        else:
            tail = 0.5 * np.maximum(np.abs(t), 1.0) ** (-1.0 / self.gamma)
            out = np.where(t >= 1.0, tail, np.where(t <= -1.0, 1.0 - tail, 0.5))
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size):
        u = 1.0 - rng.random(size)  # (0, 1]
        x = u ** (-self.gamma)
        if self.symmetrized:
            x = np.where(rng.random(size) < 0.5, -x, x)
        return x


def pareto_quantile(margin: ParetoMargin, p):
    return margin.quantile(p)


# --------------------------------------------------------------------------
# Monte Carlo verification of the tail theory


@dataclass
class VerificationReport:
    name: str
    metric: str
    theoretical: float
    estimate: float
    tolerance: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}  {self.name:<28} {self.metric:<22} "
            f"theory={self.theoretical:<10.4g} estimate={self.estimate:<10.4g} tol={self.tolerance}"
        )


def format_reports(reports) -> str:
    lines = ["status name                         metric                 values"]
    lines += [r.line() for r in reports]
    failed = sum(not r.passed for r in reports)
    lines.append(f"{len(reports) - failed}/{len(reports)} checks passed")
    return "\n".join(lines)


def _rel_check(name, metric, theory, estimate, rel_tol, details):
    passed = abs(estimate - theory) <= rel_tol * abs(theory)
    return VerificationReport(name, metric, theory, estimate, f"+/-{rel_tol:.0%}", passed, details)


def verify_hill_grid(gamma: float = 0.5, n: int = 10_000, k: int = 100) -> VerificationReport:
    """Hill on a noiseless Pareto grid against its closed form (detects indexing bugs)."""
    est = hill(pareto_grid(gamma, n), k).gamma_hat
    theory = hill_exact_grid_gamma(gamma, k)
    passed = abs(est - theory) <= 1e-10 * theory
    return VerificationReport(
        "hill_exact_grid", "gamma_hat", theory, est, "rel 1e-10", passed, {"n": n, "k": k}
    )


def verify_power_lemma(gamma, exponent, n=100_000, rng_seed=0, k=None, rel_tol=0.10):
    """Hill index of ``X**exponent`` for Pareto ``X`` against ``1/(gamma*exponent)``.

    The data are exactly Pareto, so the estimator is unbiased for any ``k``;
    the default uses the top 10% to keep the Monte Carlo error near 1%.
    """
    rng = np.random.default_rng(rng_seed)
    x = ParetoMargin(gamma).sample(rng, n)
    k = math.ceil(0.1 * n) if k is None else k
    est = hill(x**exponent, k).alpha_hat
    theory = 1.0 / (gamma * exponent)
    return _rel_check(
        f"power_lemma(g={gamma},a={exponent})", "tail index", theory, est, rel_tol,
        {"n": n, "k": k, "seed": rng_seed},
    )


def verify_annealing_path(gamma=0.5, exponents=(1.0, 0.75, 0.5), n=100_000, rng_seed=0,
                          rel_tol=0.15):
    """Tail index of ``X**a`` grows as ``a`` shrinks and tracks ``1/(gamma*a)``."""
    rng = np.random.default_rng(rng_seed)
    x = ParetoMargin(gamma).sample(rng, n)
    k = math.ceil(0.1 * n)
    order = sorted(exponents, reverse=True)
    estimates = [hill(x**a, k).alpha_hat for a in order]
    theories = [1.0 / (gamma * a) for a in order]
    monotone = all(b > a for a, b in zip(estimates, estimates[1:]))
    close = all(abs(e - t) <= rel_tol * t for e, t in zip(estimates, theories))
    return VerificationReport(
        f"annealing_path(g={gamma})", "tail index (last)", theories[-1], estimates[-1],
        f"+/-{rel_tol:.0%}, monotone", monotone and close,
        {"exponents": order, "estimates": estimates, "theory": theories, "n": n, "k": k},
    )


def verify_breiman(alpha, n=1_000_000, rng_seed=0, degenerate=False, k=None, rel_tol=0.15):
    """Hill index of ``X * Y`` with ``X`` Pareto(1/alpha) and ``Y ~ LogNormal(0, 1)``."""
    rng = np.random.default_rng(rng_seed)
    x = ParetoMargin(1.0 / alpha).sample(rng, n)
    y = np.ones(n) if degenerate else rng.lognormal(0.0, 1.0, n)
    k = oracle_k(n) if k is None else k
    est = hill(x * y, k).alpha_hat
    return _rel_check(
        f"breiman(a={alpha})", "tail index", alpha, est, rel_tol,
        {"n": n, "k": k, "seed": rng_seed, "degenerate": degenerate},
    )


def empirical_log_survival(values, grid, min_count=10):
    """``log(#{v > z} / n)`` on ``grid``; points with fewer than ``min_count``
    exceedances are dropped.  Returns ``(kept_grid, log_survival)``.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    counts = n - np.searchsorted(v, grid, side="right")
    keep = counts >= min_count
    return np.asarray(grid)[keep], np.log(counts[keep] / n)


def tail_slope(values, grid, min_count=10):
    """OLS slope of the empirical log survival against ``z`` on ``grid``."""
    z, ls = empirical_log_survival(values, grid, min_count)
    if z.size < 2:
        raise ValueError("fewer than two grid points with enough exceedances")
    slope = np.polyfit(z, ls, 1)[0]
    return float(slope), z


Z_GRID = np.arange(3.0, 8.0 + 1e-9, 0.25)


def verify_log_score(gamma, n=1_000_000, rng_seed=0, exact_exponential=False, min_count=25,
                     abs_tol=0.3):
    """Log-survival slope of ``soft_log(X)`` on ``z in [3, 8]`` against ``-1/gamma``.

    A constant slope is a constant log-space score.  The grid is cut where
    fewer than ``min_count`` points exceed ``z``.
    """
    rng = np.random.default_rng(rng_seed)
    if exact_exponential:
        values = rng.exponential(gamma, n)
    else:
        values = soft_log(ParetoMargin(gamma).sample(rng, n))
    slope, used = tail_slope(values, Z_GRID, min_count)
    theory = -1.0 / gamma
    return VerificationReport(
        f"log_score(g={gamma}{',exp' if exact_exponential else ''})", "log-survival slope",
        theory, slope, f"+/-{abs_tol}", abs(slope - theory) <= abs_tol,
        {"n": n, "seed": rng_seed, "z_min": float(used[0]), "z_max": float(used[-1]),
         "grid_points": int(used.size)},
    )


def verify_potter_sandwich(alpha, n=1_000_000, rng_seed=0, eps=0.3, min_count=10):
    """``-log P(soft_log(X) > z) / z`` stays within ``[alpha - eps, alpha + eps]``.

    Checked on ``z in [3, 8]`` up to the largest grid point the sample reaches.
    """
    rng = np.random.default_rng(rng_seed)
    values = soft_log(ParetoMargin(1.0 / alpha).sample(rng, n))
    z, ls = empirical_log_survival(values, Z_GRID, min_count)
    rates = -ls / z
    worst = float(rates[np.argmax(np.abs(rates - alpha))]) if z.size else float("nan")
    passed = z.size > 0 and bool(np.all(np.abs(rates - alpha) <= eps))
    return VerificationReport(
        f"potter_sandwich(a={alpha})", "worst -log S(z)/z", alpha, worst, f"+/-{eps}", passed,
        {"n": n, "seed": rng_seed, "z_max": float(z[-1]) if z.size else None,
         "grid_points": int(z.size)},
    )


def theory_checks(seed: int = 0):
    """Every tail-theory check at desk scale, in a fixed order."""
    return [
        verify_hill_grid(),
        verify_power_lemma(0.5, 2.0, 100_000, seed),
        verify_power_lemma(0.5, 1.0, 100_000, seed + 1),
        verify_power_lemma(0.4, 0.5, 100_000, seed + 2),
        verify_annealing_path(0.5, (1.0, 0.75, 0.5), 100_000, seed + 3),
        verify_breiman(2.0, 1_000_000, seed + 4),
        verify_breiman(1.5, 1_000_000, seed + 5),
        verify_potter_sandwich(1.5, 1_000_000, seed + 6),
        verify_potter_sandwich(2.0, 1_000_000, seed + 7),
        verify_log_score(0.5, 1_000_000, seed + 8),
        verify_log_score(1.0, 1_000_000, seed + 9),
        verify_log_score(0.5, 1_000_000, seed + 10, exact_exponential=True),
    ]
