"""Benchmark orchestration: grids of datasets x methods x replications.

A grid is described by :class:`BenchConfig` (usually loaded from YAML).  Each
run generates its dataset, trains one method, samples ``n_test`` points and
evaluates them against the test split.  Results are appended to ``runs.csv``
as they finish; a rerun into the same directory skips runs that are already
recorded, and the file is rewritten in canonical order at the end so that
the output does not depend on completion order or worker count.

Config schema (YAML)::

    dataset:
      copulas: {gumbel: [0.5], gaussian: [0.5]}   # copula -> dependence values
      d: [10, 20]
      alpha: [1.5, 2.0]            # Pareto tail index (ignored by hickling)
      pareto_fraction: 0.7         # leading share of Pareto columns
      n_train: 5000
      n_val: 2500
      n_test: 20000
    methods: [logfm, logfm_uniform, arcsinh, identity]   # or mappings, see MethodSpec
    replications: 5
    base_seed: 0
    train: {max_epochs: 1500, patience: 100, lr: 0.005, weight_decay: 1.0e-5}
    sampling: {steps: 100, clamp: .inf}
    evaluation: {projections: 512, energy_cap: 4000}
    save_models: false
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .datagen import DatasetSpec, default_margins
from .errors import ConfigError
from .flow.model import TrainConfig, train
from .flow.sampling import sample
from .metrics import MetricsReport, evaluate

METHOD_PRESETS = {
    "logfm": {"transform": "adaptive", "family": "softlog"},
    "logfm_uniform": {"transform": "uniform", "family": "softlog"},
    "arcsinh": {"transform": "uniform", "family": "arcsinh"},
    "identity": {"transform": "identity", "family": "softlog"},
}

# Accepted spellings of the training keys in config files.
TRAIN_ALIASES = {
    "learning_rate": "lr",
    "gradient_clipping": "clip",
    "hidden_dimension": "hidden",
    "layers": "n_layers",
    "time_embedding": "embed_dim",
    "early_stopping_patience": "patience",
}


@dataclass(frozen=True)
class MethodSpec:
    name: str
    transform: str = "adaptive"
    family: str = "softlog"
    schedule: str = "linear"
    clamp: float = math.inf
    steps: int = 100

    @classmethod
    def parse(cls, item, where="methods") -> "MethodSpec":
        if isinstance(item, str):
            if item not in METHOD_PRESETS:
                raise ConfigError(where, f"unknown method {item!r}; known: {sorted(METHOD_PRESETS)}")
            return cls(item, **METHOD_PRESETS[item])
        if not isinstance(item, dict) or "name" not in item:
            raise ConfigError(where, "a method is a preset name or a mapping with 'name'")
        if item["name"] not in METHOD_PRESETS and "transform" not in item:
            raise ConfigError(where, f"unknown method {item['name']!r}; custom methods "
                                     f"must set 'transform' (known: {sorted(METHOD_PRESETS)})")
        payload = dict(METHOD_PRESETS.get(item["name"], {}))
        payload.update(item)
        known = {f.name for f in fields(cls)}
        for key in payload:
            if key not in known:
                raise ConfigError(f"{where}.{key}", "unknown method key")
        payload["clamp"] = float(payload.get("clamp", math.inf))
        if not payload["clamp"] > 0:
            raise ConfigError(f"{where}.clamp", "must be positive")
        if int(payload.get("steps", 100)) < 1:
            raise ConfigError(f"{where}.steps", "must be at least 1")
        return cls(**payload)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["clamp"] = "inf" if math.isinf(self.clamp) else self.clamp
        return out


@dataclass(frozen=True)
class Cell:
    """One dataset configuration of the grid (without replication)."""

    copula: str
    dependence: float
    d: int
    alpha: float

    @property
    def cell_id(self) -> str:
        return f"{self.copula}-dep{self.dependence:g}-d{self.d}-a{self.alpha:g}"

    def dataset(self, cfg: "BenchConfig", seed: int) -> DatasetSpec:
        margins = [] if self.copula == "hickling" else default_margins(
            self.d, self.alpha, cfg.pareto_fraction)
        return DatasetSpec(self.copula, self.dependence, self.d, margins,
                           cfg.n_train, cfg.n_val, cfg.n_test, seed)


@dataclass
class BenchConfig:
    copulas: dict = field(default_factory=lambda: {"gumbel": [0.5], "gaussian": [0.5]})
    d: list = field(default_factory=lambda: [10, 20])
    alpha: list = field(default_factory=lambda: [1.5, 2.0])
    pareto_fraction: float = 0.7
    n_train: int = 5000
    n_val: int = 2500
    n_test: int = 20000
    methods: list = field(default_factory=lambda: [MethodSpec.parse("logfm")])
    replications: int = 5
    base_seed: int = 0
    train: dict = field(default_factory=dict)
    projections: int = 512
    energy_cap: int = 4000
    save_models: bool = False

    def __post_init__(self):
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m, f"methods[{i}]")
                        for i, m in enumerate(self.methods)]
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError("methods", "method names must be unique")
        if self.replications < 1:
            raise ConfigError("replications", "must be positive")
        if not 0 <= self.pareto_fraction <= 1:
            raise ConfigError("dataset.pareto_fraction", "must lie in [0, 1]")
        if not self.copulas:
            raise ConfigError("dataset.copulas", "at least one copula is required")
        for copula, deps in self.copulas.items():
            if not isinstance(deps, (list, tuple)) or not deps:
                raise ConfigError(f"dataset.copulas.{copula}", "expected a non-empty list")
        self.train = _normalize_train(self.train)
        self.train_config()  # validate early

    def cells(self) -> list[Cell]:
        out = []
        for copula, deps in self.copulas.items():
            alphas = [0.0] if copula == "hickling" else self.alpha
            for dep in deps:
                for d in self.d:
                    for alpha in alphas:
                        out.append(Cell(copula, float(dep), int(d), float(alpha)))
        return out

    def train_config(self, method: MethodSpec | None = None) -> TrainConfig:
        payload = dict(self.train)
        if method is not None:
            payload.update(transform=method.transform, family=method.family,
                           schedule=method.schedule)
        return TrainConfig.from_dict(payload, prefix="train.")

    def to_dict(self) -> dict:
        return {
            "dataset": {"copulas": self.copulas, "d": list(self.d), "alpha": list(self.alpha),
                        "pareto_fraction": self.pareto_fraction, "n_train": self.n_train,
                        "n_val": self.n_val, "n_test": self.n_test},
            "methods": [m.to_dict() for m in self.methods],
            "replications": self.replications,
            "base_seed": self.base_seed,
            "train": dict(self.train),
            "evaluation": {"projections": self.projections, "energy_cap": self.energy_cap},
            "save_models": self.save_models,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, payload: dict) -> "BenchConfig":
        payload = dict(payload or {})
        allowed = {"dataset", "methods", "replications", "base_seed", "train", "sampling",
                   "evaluation", "save_models"}
        for key in payload:
            if key not in allowed:
                raise ConfigError(key, "unknown top-level key")
        kwargs = {}
        ds = payload.get("dataset", {}) or {}
        ds_keys = {"copulas", "d", "alpha", "pareto_fraction", "n_train", "n_val", "n_test"}
        for key, value in ds.items():
            if key not in ds_keys:
                raise ConfigError(f"dataset.{key}", "unknown dataset key")
            kwargs[key] = value
        for key in ("d", "alpha"):
            if key in kwargs and not isinstance(kwargs[key], (list, tuple)):
                kwargs[key] = [kwargs[key]]
        methods = payload.get("methods")
        sampling = payload.get("sampling", {}) or {}
        for key in sampling:
            if key not in ("steps", "clamp"):
                raise ConfigError(f"sampling.{key}", "unknown sampling key")
        if methods is not None:
            parsed = []
            for i, m in enumerate(methods):
                if isinstance(m, str):
                    m = {"name": m}
                merged = {**sampling, **m}
                parsed.append(MethodSpec.parse(merged, f"methods[{i}]"))
            kwargs["methods"] = parsed
        elif sampling:
            kwargs["methods"] = [MethodSpec.parse({"name": "logfm", **sampling})]
        for key in ("replications", "base_seed", "save_models"):
            if key in payload:
                kwargs[key] = payload[key]
        if "train" in payload:
            kwargs["train"] = payload["train"] or {}
        ev = payload.get("evaluation", {}) or {}
        for key, value in ev.items():
            if key not in ("projections", "energy_cap"):
                raise ConfigError(f"evaluation.{key}", "unknown evaluation key")
            kwargs[key] = int(value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        try:
            payload = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"invalid YAML: {exc}") from None
        if payload is not None and not isinstance(payload, dict):
            raise ConfigError(str(path), "top level must be a mapping")
        return cls.from_dict(payload or {})


def _normalize_train(train: dict) -> dict:
    out = {}
    for key, value in (train or {}).items():
        key = TRAIN_ALIASES.get(key, key)
        out[key] = value
    return out


def preset(name: str) -> BenchConfig:
    """Named grids.

    ``desk``: Gumbel and Gaussian copulas at tau=0.5, d in {10, 20}, alpha in
    {1.5, 2.0}, 5 replications, 5 000 training rows, at most 1 500 epochs.
    ``paper``: the full 144-configuration grid with 20 replications and the
    reference training budget.
    """
    if name == "desk":
        return BenchConfig(train={"max_epochs": 1500})
    if name == "paper":
        return BenchConfig(
            copulas={"gumbel": [0.25, 0.5, 0.75], "gaussian": [0.25, 0.5, 0.75],
                     "husler_reiss": [0.1, 0.5, 0.9]},
            d=[10, 20, 50, 100], alpha=[1.5, 2.0, 2.5, 3.0],
            n_train=10_000, n_val=5_000, n_test=20_000,
            methods=[MethodSpec.parse(m) for m in ("logfm", "logfm_uniform", "arcsinh")],
            replications=20,
        )
    raise ConfigError("preset", f"unknown preset {name!r}; expected desk or paper")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


# -- runs ---------------------------------------------------------------------

RUN_FIELDS = ["config_id", "method", "replication", "data_seed", "train_seed",
              "dataset_fingerprint", "epochs", "best_epoch", "failed", "reason"]
WALL_FIELDS = ["wall_seconds"]


@dataclass
class RunRecord:
    config_id: str
    method: str
    replication: int
    data_seed: int
    train_seed: int
    dataset_fingerprint: str
    epochs: int
    best_epoch: int
    diverged: bool
    reason: str
    metrics: MetricsReport
    wall_seconds: float = 0.0

    @property
    def key(self):
        return (self.config_id, self.method, self.replication)

    @classmethod
    def header(cls) -> list[str]:
        return RUN_FIELDS + MetricsReport.header() + WALL_FIELDS

    def to_row(self) -> list[str]:
        base = [self.config_id, self.method, str(self.replication), str(self.data_seed),
                str(self.train_seed), self.dataset_fingerprint, str(self.epochs),
                str(self.best_epoch), str(int(self.diverged)), self.reason]
        return base + self.metrics.to_row() + [f"{self.wall_seconds:.3f}"]

    @classmethod
    def from_row(cls, row: dict) -> "RunRecord":
        metrics = MetricsReport.from_row([row[k] for k in MetricsReport.header()])
        return cls(row["config_id"], row["method"], int(row["replication"]),
                   int(row["data_seed"]), int(row["train_seed"]), row["dataset_fingerprint"],
                   int(row["epochs"]), int(row["best_epoch"]), bool(int(row["failed"])),
                   row["reason"], metrics, float(row["wall_seconds"]))


@dataclass(frozen=True)
class RunTask:
    cell: Cell
    method: MethodSpec
    replication: int
    cfg: BenchConfig
    model_dir: str | None = None


def run_one(task: RunTask) -> RunRecord:
    """Generate, train, sample and evaluate one replication; never raises."""
    cfg, cell, method, rep = task.cfg, task.cell, task.method, task.replication
    data_seed = derive_seed(cfg.base_seed, cell.cell_id, rep, "data")
    train_seed = derive_seed(cfg.base_seed, cell.cell_id, rep, method.name, "train")
    sample_seed = derive_seed(cfg.base_seed, cell.cell_id, rep, method.name, "sample")
    start = time.perf_counter()
    spec = cell.dataset(cfg, data_seed)
    epochs, best, reason = 0, -1, ""
    try:
        tr, va, te = spec.generate()
        model = train(tr, cfg.train_config(method), val=va, seed=train_seed)
        epochs, best = model.log.epochs, model.log.best_epoch
        if model.diverged:
            reason = model.log.diverged
            metrics = MetricsReport.divergent()
        else:
            res = sample(model, te.n, method.steps, clamp=method.clamp, seed=sample_seed)
            if res.ok:
                metrics = evaluate(res.samples, te, seed=0, projections=cfg.projections,
                                   energy_cap=cfg.energy_cap)
                if metrics.diverged:
                    reason = "non-finite samples"
            else:
                reason = res.diverged
                metrics = MetricsReport.divergent()
            if task.model_dir is not None:
                from .checkpoint import save_model

                save_model(model, Path(task.model_dir) / f"{cell.cell_id}_{method.name}_r{rep}.ckpt")
    except Exception as exc:  # crash isolation: record and move on
        reason = f"error: {type(exc).__name__}: {exc}"
        metrics = MetricsReport.divergent()
        if os.environ.get("TAILFLOW_DEBUG"):
            traceback.print_exc()
    diverged = bool(reason) or metrics.diverged
    reason = reason.replace("\n", " ").replace(",", ";")
    return RunRecord(cell.cell_id, method.name, rep, data_seed, train_seed, spec.fingerprint(),
                     epochs, best, diverged, reason, metrics, time.perf_counter() - start)


def _read_runs(path: Path) -> dict:
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RunRecord.header():
            raise ConfigError(str(path), "existing runs.csv has an unexpected header")
        records = [RunRecord.from_row(row) for row in reader]
    return {r.key: r for r in records}


def _write_runs(path: Path, records) -> None:
    tmp = path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RunRecord.header())
        for rec in records:
            w.writerow(rec.to_row())
    os.replace(tmp, path)


def run_grid(cfg: BenchConfig, out_dir, jobs: int = 1, progress=None) -> list[RunRecord]:
    """Run every (cell, method, replication) of ``cfg``, resuming if possible.

    Writes ``runs.csv``, ``summary.csv`` and ``manifest.json`` into ``out_dir``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError("out", f"output directory is not writable: {exc}") from None

    manifest_path = out / "manifest.json"
    fp = cfg.fingerprint()
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        if old.get("fingerprint") != fp:
            raise ConfigError("out", "directory holds results of a different configuration")
    manifest_path.write_text(json.dumps(
        {"fingerprint": fp, "config": cfg.to_dict(), "format": 1}, indent=2, sort_keys=True))

    runs_path = out / "runs.csv"
    done = _read_runs(runs_path)
    model_dir = None
    if cfg.save_models:
        model_dir = out / "models"
        model_dir.mkdir(exist_ok=True)
    tasks = [RunTask(cell, m, r, cfg, None if model_dir is None else str(model_dir))
             for cell in cfg.cells() for m in cfg.methods for r in range(cfg.replications)]
    order = {(t.cell.cell_id, t.method.name, t.replication): i for i, t in enumerate(tasks)}
    pending = [t for t in tasks if (t.cell.cell_id, t.method.name, t.replication) not in done]

    new_file = not runs_path.exists()
    with open(runs_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(RunRecord.header())

        def record(rec):
            done[rec.key] = rec
            writer.writerow(rec.to_row())
            fh.flush()
            if progress is not None:
                progress(rec)

        if jobs > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for rec in pool.map(run_one, pending):
                    record(rec)
        else:
            for task in pending:
                record(run_one(task))

    records = sorted((r for r in done.values() if r.key in order), key=lambda r: order[r.key])
    _write_runs(runs_path, records)
    write_summary(out / "summary.csv", aggregate(records), cfg)
    return records


# -- aggregation --------------------------------------------------------------

SUMMARY_METRICS = [f for f in MetricsReport.header()
                   if f not in ("diverged", "severe", "catastrophic")]


def median(values) -> float:
    """Median with +inf ordered last and NaN ignored (NaN if nothing is left)."""
    arr = np.sort(np.asarray([v for v in values if not math.isnan(v)], dtype=np.float64))
    if arr.size == 0:
        return math.nan
    mid = arr.size // 2
    if arr.size % 2:
        return float(arr[mid])
    return float((arr[mid - 1] + arr[mid]) / 2.0)


def aggregate(records) -> list[dict]:
    """Per (config, method): metric medians and failure fractions."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.config_id, rec.method), []).append(rec)
    rows = []
    for (cid, method), recs in groups.items():
        row = {"config_id": cid, "method": method, "n_runs": len(recs)}
        for name in SUMMARY_METRICS:
            row[f"median_{name}"] = median([getattr(r.metrics, name) for r in recs])
        row["frac_diverged"] = float(np.mean([r.diverged for r in recs]))
        row["frac_severe"] = float(np.mean([r.metrics.severe for r in recs]))
        row["frac_w1p_gt_1"] = float(np.mean([r.metrics.catastrophic for r in recs]))
        rows.append(row)
    return rows


def write_summary(path, rows, cfg: BenchConfig | None = None) -> None:
    cells = {c.cell_id: c for c in cfg.cells()} if cfg is not None else {}
    header = ["copula", "dependence", "d", "alpha", "config_id", "method", "n_runs"]
    header += [f"median_{m}" for m in SUMMARY_METRICS]
    header += ["frac_diverged", "frac_severe", "frac_w1p_gt_1"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            cell = cells.get(row["config_id"])
            lead = [cell.copula, repr(cell.dependence), str(cell.d), repr(cell.alpha)] \
                if cell else ["", "", "", ""]
            rest = [row["config_id"], row["method"], str(row["n_runs"])]
            rest += [repr(float(row[h])) for h in header[7:]]
            w.writerow(lead + rest)


# -- verification ---------------------------------------------------------------

def verify_all(seed: int = 0, include_flow: bool = True):
    """Every theory and analytic-field check; failures are collected, not raised."""
    from .evt import VerificationReport, theory_checks
    from .flow.checks import flow_checks

    reports = []
    for group in ([theory_checks] + ([flow_checks] if include_flow else [])):
        try:
            reports.extend(group(seed))
        except Exception as exc:  # a crashing group is reported as one failure
            reports.append(VerificationReport(group.__name__, "exception", math.nan, math.nan,
                                              "", False, {"error": repr(exc)}))
    return reports


def with_train_overrides(cfg: BenchConfig, **overrides) -> BenchConfig:
    train_cfg = dict(cfg.train)
    train_cfg.update({k: v for k, v in overrides.items() if v is not None})
    return replace(cfg, train=train_cfg)
