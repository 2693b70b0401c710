"""Command line interface: ``tailflow generate|train|sample|evaluate|nll|bench|verify``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import yaml

from .errors import ConfigError, TailflowError


def _float(text):
    return math.inf if str(text).lower() in ("inf", "+inf", "infinity") else float(text)


def _load_yaml(path):
    if path is None:
        return {}
    try:
        payload = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from None
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return payload


# -- generate -----------------------------------------------------------------

def cmd_generate(args):
    from .datagen import DatasetSpec, default_margins

    cfg = _load_yaml(args.config)
    payload = dict(cfg.get("dataset", cfg))
    for key in ("copula", "dependence", "d", "n_train", "n_val", "n_test"):
        value = getattr(args, key)
        if value is not None:
            payload[key] = value
    if args.seed is not None:
        payload["seed"] = args.seed
    alpha = payload.pop("alpha", args.alpha if args.alpha is not None else 2.0)
    fraction = payload.pop("pareto_fraction", 0.7)
    payload.setdefault("copula", "gumbel")
    payload.setdefault("dependence", 0.5)
    payload.setdefault("d", 10)
    if "margins" not in payload and payload["copula"] != "hickling":
        payload["margins"] = default_margins(int(payload["d"]), float(alpha), fraction)
    try:
        spec = DatasetSpec(**payload)
    except TypeError as exc:
        raise ConfigError("dataset", str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "val", "test"), spec.generate()):
        part.save(out / f"{name}.csv")
    (out / "dataset.json").write_text(json.dumps(spec.to_dict(), indent=2))
    print(f"wrote {out}/train.csv, val.csv, test.csv (fingerprint {spec.fingerprint()})")
    return 0


# -- train --------------------------------------------------------------------

def _train_config(args):
    from .bench import _normalize_train
    from .flow.model import TrainConfig

    cfg = _load_yaml(args.config)
    payload = _normalize_train(cfg.get("train", cfg))
    overrides = {"max_epochs": args.epochs, "patience": args.patience, "lr": args.lr,
                 "transform": args.transform, "family": args.family, "schedule": args.schedule,
                 "hidden": args.hidden}
    payload.update({k: v for k, v in overrides.items() if v is not None})
    if args.standardize:
        payload["standardize"] = True
    if args.no_early_stopping:
        payload["early_stopping"] = False
    return TrainConfig.from_dict(payload, prefix="train.")


def cmd_train(args):
    from .checkpoint import save_model
    from .datagen import SampleMatrix
    from .flow.model import train

    config = _train_config(args)
    data = SampleMatrix.load(args.data)
    val = SampleMatrix.load(args.val) if args.val else None
    if val is None and config.early_stopping:
        raise ConfigError("val", "early stopping needs --val (or pass --no-early-stopping)")

    def progress(epoch, tlog):
        if args.verbose and (epoch + 1) % 50 == 0:
            val_txt = f" val={tlog.val_loss[-1]:.5f}" if tlog.val_loss else ""
            print(f"epoch {epoch + 1}: train={tlog.train_loss[-1]:.5f}{val_txt}", flush=True)

    model = train(data, config, val=val, seed=args.seed or 0, callback=progress)
    save_model(model, args.out)
    status = f"diverged ({model.log.diverged})" if model.diverged else "ok"
    print(f"trained {model.log.epochs} epochs, best epoch {model.log.best_epoch}, "
          f"mask={model.transform.mask.astype(int).tolist()}, status {status}; saved {args.out}")
    return 1 if model.diverged else 0


# -- sample -------------------------------------------------------------------

def cmd_sample(args):
    from .checkpoint import load_model
    from .datagen import SampleMatrix
    from .flow.sampling import ddim_sample, sample

    model = load_model(args.model)
    seed = args.seed or 0
    if args.ddim:
        res = ddim_sample(model, args.n, args.steps, args.ddim, seed=seed, clamp=args.clamp)
    else:
        res = sample(model, args.n, args.steps, clamp=args.clamp, seed=seed)
    if not res.ok:
        print(f"sampling diverged: {res.diverged}", file=sys.stderr)
        return 1
    SampleMatrix(res.samples, ["Other"] * model.d, seed=seed).save(args.out)
    print(f"wrote {args.n} samples to {args.out}")
    return 0


# -- evaluate -----------------------------------------------------------------

def cmd_evaluate(args):
    from .datagen import SampleMatrix, load_csv
    from .metrics import MetricsReport, evaluate

    gen = load_csv(args.gen, has_header=args.header)
    ref = SampleMatrix.load(args.ref) if not args.header else load_csv(args.ref, has_header=True)
    rep = evaluate(gen, ref, seed=args.seed or 0, projections=args.projections)
    if args.out:
        out = Path(args.out)
        new = not out.exists()
        with open(out, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["gen", "ref"] + MetricsReport.header())
            w.writerow([args.gen, args.ref] + rep.to_row())
    print(json.dumps(rep.to_dict(), indent=2))
    return 0


# -- nll ----------------------------------------------------------------------

def cmd_nll(args):
    from .checkpoint import load_model
    from .datagen import load_csv
    from .flow.likelihood import nll

    model = load_model(args.model)
    data = load_csv(args.data, has_header=args.header)
    est = nll(model, data, probes=args.probes, atol=args.tol, rtol=args.tol, seed=args.seed or 0)
    print(json.dumps(est.to_dict(), indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(est.to_dict(), indent=2))
    return 0


# -- bench --------------------------------------------------------------------

def cmd_bench(args):
    from .bench import BenchConfig, preset, run_grid, with_train_overrides

    if args.config:
        cfg = BenchConfig.load(args.config)
    else:
        cfg = preset(args.preset or "desk")
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.replications is not None:
        cfg.replications = args.replications
    cfg = with_train_overrides(cfg, max_epochs=args.epochs, patience=args.patience)

    def progress(rec):
        m = rec.metrics
        w = f"W1P={m.w1_pareto:.4g}" if m.w1_pareto == m.w1_pareto else f"W1={m.w1_all:.4g}"
        print(f"{rec.config_id} {rec.method} rep {rec.replication}: "
              f"{w} epochs={rec.epochs} {'DIVERGED ' + rec.reason if rec.diverged else ''}"
              f" ({rec.wall_seconds:.0f}s)", flush=True)

    records = run_grid(cfg, args.out, jobs=args.jobs, progress=progress)
    print(f"{len(records)} runs recorded in {args.out}/runs.csv; summary in {args.out}/summary.csv")
    return 0


# -- verify -------------------------------------------------------------------

def cmd_verify(args):
    from .bench import verify_all
    from .evt import format_reports

    reports = verify_all(args.seed or 0, include_flow=not args.theory_only)
    print(format_reports(reports))
    if args.out:
        Path(args.out).write_text(json.dumps([r.to_dict() for r in reports], indent=2,
                                             default=float))
    return 0 if all(r.passed for r in reports) else 1


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailflow",
                                     description="Log-space flow matching for heavy-tailed data")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output path", out_required=True):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=out_required, help=out_help)

    p = sub.add_parser("generate", help="sample a synthetic dataset with train/val/test splits")
    common(p, "output directory")
    p.add_argument("--copula", choices=["gaussian", "gumbel", "husler_reiss", "iid", "hickling"])
    p.add_argument("--dependence", type=float, help="Kendall tau, HR rho, or Student-t dof")
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float, help="Pareto tail index of the heavy margins")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-val", dest="n_val", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a velocity network (writes a checkpoint)")
    common(p, "checkpoint path")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--val", help="validation CSV (needed for early stopping)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--transform", choices=["adaptive", "uniform", "identity"])
    p.add_argument("--family", choices=["softlog", "arcsinh"])
    p.add_argument("--schedule", choices=["linear", "vp_trig", "vp_poly", "quadratic"])
    p.add_argument("--standardize", action="store_true",
                   help="standardize transformed data before training")
    p.add_argument("--no-early-stopping", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate samples from a checkpoint")
    common(p, "output CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--clamp", type=_float, default=math.inf)
    p.add_argument("--ddim", choices=["zero", "ddpm", "max"],
                   help="use DDIM with this noise mode (variance-preserving schedules)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="compare generated samples with a reference CSV")
    common(p, "results CSV to append to", out_required=False)
    p.add_argument("--gen", required=True)
    p.add_argument("--ref", required=True, help="reference CSV (labels from its sidecar)")
    p.add_argument("--header", action="store_true", help="CSVs have a header row")
    p.add_argument("--projections", type=int, default=512)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("nll", help="negative log-likelihood per dimension")
    common(p, "optional JSON output", out_required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--probes", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-5, help="atol = rtol of the ODE solver")
    p.set_defaults(func=cmd_nll)

    p = sub.add_parser("bench", help="run a benchmark grid")
    common(p, "output directory")
    p.add_argument("--preset", choices=["desk", "paper"])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--replications", type=int)
    p.add_argument("--epochs", type=int, help="override the maximum number of epochs")
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="Monte Carlo checks of the tail theory and samplers")
    common(p, "optional JSON report", out_required=False)
    p.add_argument("--theory-only", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (TailflowError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
