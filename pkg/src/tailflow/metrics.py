"""Two-sample evaluation metrics for heavy-tailed generative models.

Marginal metrics are computed per coordinate and averaged over a label
group (``Pareto`` or ``Gaussian`` margins); joint metrics use all columns.
Tail metrics (VaR, CVaR, extreme quantiles) look at the upper tail of the
raw signed values.  A metric over an empty coordinate group is NaN, never 0.
All randomness (subsampling, projection directions) comes from an explicit
seed, so every metric is a deterministic function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels
from .errors import DegenerateTailError
from .evt import hill, oracle_k

SEVERE_W1 = 1e3
CATASTROPHIC_W1P = 1.0


def _vec(a, name):
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    return a


def _subsample(a, size, rng):
    if a.shape[0] <= size:
        return a
    idx = np.sort(rng.choice(a.shape[0], size=size, replace=False))
    return a[idx]


def _equalize(a, b, seed):
    """Subsample the larger input (rows, without replacement) to the smaller size.

    Both inputs draw from identically seeded streams, so equal-sized inputs
    keep matching rows.
    """
    m = min(a.shape[0], b.shape[0])
    return (_subsample(a, m, np.random.default_rng(seed)),
            _subsample(b, m, np.random.default_rng(seed)))


# -- marginal -----------------------------------------------------------------

def w1_1d(a, b, seed=0) -> float:
    """Empirical 1-Wasserstein distance between two 1-D samples.

    The larger sample is subsampled to the size of the smaller one, after
    which the distance is the mean absolute difference of order statistics.
    """
    a, b = _equalize(_vec(a, "a"), _vec(b, "b"), seed)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def _relerr(g, r):
    if r == 0:
        raise ValueError("undefined relative error (reference value is 0)")
    return abs(g - r) / abs(r)


def value_at_risk(x, level) -> float:
    return float(np.quantile(x, level))


def expected_shortfall(x, level) -> float:
    """Mean of the values at or above the ``level`` quantile."""
    var = value_at_risk(x, level)
    tail = x[x >= var]
    return float(np.mean(tail))


def risk_metrics(gen, ref, level=0.99):
    """Relative errors of ``(VaR_level, CVaR_level)`` of ``gen`` against ``ref``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    gen, ref = _vec(gen, "gen"), _vec(ref, "ref")
    with np.errstate(over="ignore", invalid="ignore"):
        var_rel = _relerr(value_at_risk(gen, level), value_at_risk(ref, level))
        cvar_rel = _relerr(expected_shortfall(gen, level), expected_shortfall(ref, level))
    return var_rel, cvar_rel


def extreme_quantile_err(gen, ref, p=0.999) -> float:
    """Relative error of the upper ``p`` quantile."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    gen, ref = _vec(gen, "gen"), _vec(ref, "ref")
    with np.errstate(over="ignore", invalid="ignore"):
        return _relerr(value_at_risk(gen, p), value_at_risk(ref, p))


# -- dependence ---------------------------------------------------------------

def _tie_pairs(values) -> int:
    _, counts = np.unique(values, return_counts=True, axis=0)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(x, y) -> float:
    """Kendall's tau-b in O(n log n) by merge-sort inversion counting.

    After sorting by ``(x, y)`` the discordant pairs are exactly the strict
    inversions of the ``y`` sequence; ties are handled by the tau-b
    normalization.
    """
    x, y = _vec(x, "x"), _vec(y, "y")
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    n = x.shape[0]
    n0 = n * (n - 1) // 2
    order = np.lexsort((y, x))
    _, y_rank = np.unique(y, return_inverse=True)
    disc = kernels.count_inversions(y_rank[order].astype(np.int64))
    n1 = _tie_pairs(x)
    n2 = _tie_pairs(y)
    n3 = _tie_pairs(np.column_stack([x, y]))
    denom = math.sqrt(float(n0 - n1) * float(n0 - n2))
    if denom == 0:
        return math.nan
    conc = n0 - n1 - n2 + n3 - disc
    return (conc - disc) / denom


def kendall_matrix(data) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    d = data.shape[1]
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = kendall_tau(data[:, i], data[:, j])
    return out


def ake(gen, ref, cap=5000, seed=0) -> float:
    """Absolute Kendall error: mean over pairs ``i < j`` of ``|tau_gen - tau_ref|``.

    Both samples are subsampled to a common size of at most ``cap`` rows.
    """
    gen = np.asarray(gen, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if gen.ndim != 2 or gen.shape[1] != ref.shape[1]:
        raise ValueError("gen and ref must be matrices with the same columns")
    d = gen.shape[1]
    if d < 2:
        raise ValueError("AKE needs at least two coordinates")
    m = min(gen.shape[0], ref.shape[0], cap)
    g = _subsample(gen, m, np.random.default_rng(seed))
    r = _subsample(ref, m, np.random.default_rng(seed))
    iu = np.triu_indices(d, k=1)
    return float(np.mean(np.abs(kendall_matrix(g)[iu] - kendall_matrix(r)[iu])))


def random_directions(d, n_proj, seed) -> np.ndarray:
    u = np.random.default_rng(seed).standard_normal((n_proj, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def projected_w2(gen, ref, directions, seed=0) -> np.ndarray:
    """1-D 2-Wasserstein distance along each direction (rows of ``directions``)."""
    gen = np.asarray(gen, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if gen.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("empty input")
    g, r = _equalize(gen, ref, seed)
    with np.errstate(over="ignore", invalid="ignore"):
        pg = np.sort(g @ directions.T, axis=0)
        pr = np.sort(r @ directions.T, axis=0)
        return np.sqrt(np.mean((pg - pr) ** 2, axis=0))


def sliced_wasserstein(gen, ref, projections=512, seed=0) -> float:
    """Mean over random unit directions of the projected 1-D W2."""
    gen = np.atleast_2d(np.asarray(gen, dtype=np.float64))
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    if gen.shape[1] != ref.shape[1]:
        raise ValueError("gen and ref must have the same columns")
    dirs = random_directions(gen.shape[1], projections, seed)
    return float(np.mean(projected_w2(gen, ref, dirs, seed)))


def angular_sample(data) -> np.ndarray:
    """The ``ceil(sqrt(n))`` rows of largest Euclidean norm, scaled to unit length."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if n < 4:
        raise ValueError("need at least 4 rows")
    k = math.ceil(math.sqrt(n))
    norms = np.linalg.norm(data, axis=1)
    top = np.argsort(norms, kind="stable")[n - k:]
    if np.any(norms[top] == 0):
        raise ValueError("cannot project all-zero rows to the sphere")
    return data[top] / norms[top, None]


def angular_w2(gen, ref, projections=512, seed=0) -> float:
    """Sliced W2 between the empirical angular measures of the top extremes."""
    return sliced_wasserstein(angular_sample(gen), angular_sample(ref), projections, seed)


def energy_distance(gen, ref, cap=4000, seed=0) -> float:
    """``2 E|X - Y| - E|X - X'| - E|Y - Y'|`` with Euclidean norms.

    Each sample is subsampled to at most ``cap`` rows.  The within-sample
    means are taken over all ordered pairs including the diagonal
    (V-statistics), which keeps the estimate nonnegative.
    """
    gen = np.asarray(gen, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if gen.ndim == 1:
        gen, ref = gen[:, None], ref[:, None]
    if gen.shape[0] < 2 or ref.shape[0] < 2:
        raise ValueError("need at least two rows in each sample")
    g = np.ascontiguousarray(_subsample(gen, cap, np.random.default_rng(seed)))
    r = np.ascontiguousarray(_subsample(ref, cap, np.random.default_rng(seed)))
    n, m = g.shape[0], r.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        cross = kernels.pairwise_distance_sum(g, r) / (n * m)
        within_g = 2.0 * kernels.pairwise_distance_sum_within(g) / (n * n)
        within_r = 2.0 * kernels.pairwise_distance_sum_within(r) / (m * m)
    return float(max(2.0 * cross - within_g - within_r, 0.0))


# -- report -------------------------------------------------------------------

@dataclass
class MetricsReport:
    """All metrics for one (generated, reference) pair.

    NaN marks a metric over an empty coordinate group; +inf marks a
    diverged run.
    """

    w1_pareto: float = math.nan
    w1_gauss: float = math.nan
    w1_all: float = math.nan
    hill_err: float = math.nan
    var99_rel: float = math.nan
    cvar99_rel: float = math.nan
    q995_rel: float = math.nan
    q999_rel: float = math.nan
    ake: float = math.nan
    angular_w2: float = math.nan
    sliced_w: float = math.nan
    energy: float = math.nan
    diverged: bool = False
    severe: bool = False
    catastrophic: bool = False

    @classmethod
    def divergent(cls) -> "MetricsReport":
        inf = math.inf
        return cls(inf, inf, inf, inf, inf, inf, inf, inf, inf, inf, inf, inf,
                   diverged=True, severe=True, catastrophic=True)

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_row(self) -> list[str]:
        out = []
        for value in asdict(self).values():
            if isinstance(value, bool):
                out.append(str(int(value)))
            else:
                out.append(repr(float(value)))
        return out

    @classmethod
    def from_row(cls, row) -> "MetricsReport":
        kwargs = {}
        for f, cell in zip(fields(cls), row):
            kwargs[f.name] = bool(int(cell)) if f.type in (bool, "bool") else float(cell)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def _group_mean(values):
    return float(np.mean(values)) if len(values) else math.nan


def evaluate(gen, ref, labels=None, seed=0, projections=512, energy_cap=4000,
             kendall_cap=5000) -> MetricsReport:
    """Compare a generated sample with a reference sample.

    ``labels`` (one of ``Pareto``/``Gaussian``/``Other`` per column) default
    to ``ref.margin_labels``.  ``gen=None`` yields the divergent report.
    Tail metrics are averaged over the Pareto-labeled coordinates.
    """
    if gen is None:
        return MetricsReport.divergent()
    if labels is None:
        labels = getattr(ref, "margin_labels", None)
    g = np.asarray(getattr(gen, "data", gen), dtype=np.float64)
    r = np.asarray(getattr(ref, "data", ref), dtype=np.float64)
    if g.ndim != 2 or r.ndim != 2 or g.shape[1] != r.shape[1]:
        raise ValueError("gen and ref must be matrices with the same number of columns")
    d = r.shape[1]
    if labels is None:
        labels = ["Other"] * d
    if len(labels) != d:
        raise ValueError(f"expected {d} labels, got {len(labels)}")
    if not np.all(np.isfinite(g)):
        return MetricsReport.divergent()

    w1 = [w1_1d(g[:, j], r[:, j], seed=seed + j) for j in range(d)]
    pareto = [j for j, lab in enumerate(labels) if lab == "Pareto"]
    gauss = [j for j, lab in enumerate(labels) if lab == "Gaussian"]
    rep = MetricsReport()
    rep.w1_all = _group_mean(w1)
    rep.w1_pareto = _group_mean([w1[j] for j in pareto])
    rep.w1_gauss = _group_mean([w1[j] for j in gauss])

    if pareto:
        hill_e, var_e, cvar_e, q5, q9 = [], [], [], [], []
        for j in pareto:
            a_r = hill(r[:, j], oracle_k(r.shape[0])).alpha_hat
            try:
                a_g = hill(g[:, j], oracle_k(g.shape[0])).alpha_hat
            except DegenerateTailError:
                a_g = math.inf
            hill_e.append(abs(a_g - a_r))
            v, c = risk_metrics(g[:, j], r[:, j], 0.99)
            var_e.append(v)
            cvar_e.append(c)
            q5.append(extreme_quantile_err(g[:, j], r[:, j], 0.995))
            q9.append(extreme_quantile_err(g[:, j], r[:, j], 0.999))
        rep.hill_err = _group_mean(hill_e)
        rep.var99_rel = _group_mean(var_e)
        rep.cvar99_rel = _group_mean(cvar_e)
        rep.q995_rel = _group_mean(q5)
        rep.q999_rel = _group_mean(q9)

    if d >= 2:
        rep.ake = ake(g, r, cap=kendall_cap, seed=seed)
    rep.angular_w2 = angular_w2(g, r, projections, seed)
    rep.sliced_w = sliced_wasserstein(g, r, projections, seed)
    rep.energy = energy_distance(g, r, cap=energy_cap, seed=seed)
    rep.severe = bool(rep.w1_all > SEVERE_W1)
    rep.catastrophic = bool(rep.w1_pareto > CATASTROPHIC_W1P)
    return rep
