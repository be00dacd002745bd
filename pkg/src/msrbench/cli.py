"""``msrbench`` command line.

Exit codes: 0 success, 2 usage/config error, 3 data or checkpoint error,
4 partial benchmark failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import BenchPlan, SweepPlan, data_root, load_dataset, model_config, run_bench, run_sweep
from .core import CheckpointError, load_checkpoint, precision, set_precision
from .data import (DataError, DatasetManifest, ManifestError, SyntheticSpec, builtin_manifest,
                   gen_synthetic, ingest, scenario_stats, write_processed)
from .evaluation import evaluate_per_scenario
from .models import KINDS, ConfigError, build_model
from .training import TrainConfig, derive_seed, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _manifest(ref: str) -> DatasetManifest:
    p = Path(ref)
    return DatasetManifest.load(p) if p.suffix == ".json" or p.exists() else builtin_manifest(ref)


def _json_file(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"config not found: {path}", EXIT_USAGE) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})", EXIT_USAGE) from None


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands

def cmd_prepare(args) -> int:
    try:
        manifest = _manifest(args.manifest)
    except ManifestError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    raw = Path(args.raw) if args.raw else data_root() / manifest.name
    if not raw.exists():
        raise CliError(f"raw path not found: {raw}", EXIT_USAGE)
    try:
        ds = ingest(manifest, raw, seed=args.seed)
    except (DataError, ManifestError) as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    stats = scenario_stats(ds).to_dict() if len(ds) else {}
    out = Path(args.out)
    write_processed(ds, out, {"scenario_stats": stats})
    _dump(out / "scenario_stats.json", stats)
    if not args.quiet:
        print(f"{manifest.name}: {len(ds)} examples -> {out}")
        if stats:
            print(f"interactions per scenario: {stats['interactions']}  COV {stats['cov']:.4f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.counts:
        from .data.stats import coefficient_of_variation
        counts = [int(x) for x in args.counts.split(",")]
        result = {"interactions": counts, "cov": coefficient_of_variation(counts)}
    else:
        try:
            result = scenario_stats(load_dataset(args.data)).to_dict()
        except FileNotFoundError as exc:
            raise CliError(str(exc), EXIT_DATA) from None
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if not args.quiet:
        print(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticSpec(base_ctr=tuple(args.base_ctr) if args.base_ctr else None,
                         weights=tuple(args.weights) if args.weights else None)
    try:
        ds = gen_synthetic(args.scenarios, args.rows, spec, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    write_processed(ds, args.out, {"scenario_stats": scenario_stats(ds).to_dict()})
    if not args.quiet:
        print(f"synthetic S={args.scenarios} rows={args.rows} -> {args.out}")
    return EXIT_OK


def _train_config(cfg: dict, seed: int, prec: str | None) -> TrainConfig:
    t = dict(cfg.get("train", {}))
    t["seed"] = seed
    if prec:
        t["precision"] = prec
    return TrainConfig.from_dict(t)


def cmd_train(args) -> int:
    cfg = _json_file(args.config)
    if "model" not in cfg or "dataset" not in cfg:
        raise CliError("config needs 'dataset' and 'model' sections", EXIT_USAGE)
    m = dict(cfg["model"])
    kind = m.pop("kind", None)
    try:
        mcfg = model_config(kind, m)
        tcfg = _train_config(cfg, args.seed, args.precision)
    except (ConfigError, ValueError, TypeError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    with precision(tcfg.precision):
        try:
            ds = load_dataset(cfg["dataset"])
        except (FileNotFoundError, DataError) as exc:
            raise CliError(str(exc), EXIT_DATA) from None
        model = build_model(mcfg, ds.feature_space, ds.n_scenarios, derive_seed(args.seed, "init"))
        rec = train(model, ds.parts(), tcfg, args.out, {"dataset": cfg["dataset"], "seed": args.seed})
    if not args.quiet:
        auc = rec.test_report["overall"]["auc"] if rec.test_report else None
        print(f"{mcfg.kind}: status {rec.status}, best epoch {rec.best_epoch}, test AUC {auc}")
    return EXIT_OK if rec.status != "failed" else EXIT_DATA


def cmd_evaluate(args) -> int:
    run = Path(args.run)
    cfg_path = run / "config.resolved.json"
    if not cfg_path.exists():
        raise CliError(f"not a run directory: {run}", EXIT_USAGE)
    cfg = json.loads(cfg_path.read_text())
    try:
        state = load_checkpoint(run / "model.best.swr")
    except (CheckpointError, FileNotFoundError) as exc:
        raise CliError(f"checkpoint error: {exc}", EXIT_DATA) from None
    mcfg = model_config(cfg["model"]["kind"], {k: v for k, v in cfg["model"].items() if k != "kind"})
    with precision(cfg["train"]["precision"]):
        ds = load_dataset(args.data or cfg["dataset"])
        model = build_model(mcfg, ds.feature_space, ds.n_scenarios, cfg["model_seed"])
        try:
            model.params.load_state(state)
        except CheckpointError as exc:
            raise CliError(f"checkpoint error: {exc}", EXIT_DATA) from None
        model.eval()
        report = evaluate_per_scenario(model, ds.parts()[2], cfg["train"]["eval_batch_size"])
    out = Path(args.out) if args.out else run / "metrics.json"
    out.write_text(report.to_json() + "\n")
    if not args.quiet:
        print(f"test AUC {report.auc}  Logloss {report.logloss} -> {out}")
    return EXIT_OK


def _plan_dict(args) -> dict:
    d = _json_file(args.plan) if args.plan else {}
    if args.dataset:
        d["dataset"] = json.loads(args.dataset) if args.dataset.startswith("{") else args.dataset
    if args.models:
        d["models"] = args.models.split(",")
    if args.out:
        d["out"] = args.out
    if "dataset" not in d:
        raise CliError("a dataset is required (--dataset or plan file)", EXIT_USAGE)
    if args.precision:
        d.setdefault("train", {})["precision"] = args.precision
    return d


def cmd_bench(args) -> int:
    d = _plan_dict(args)
    if args.seeds is not None:
        d["seeds"] = args.seeds
    d.setdefault("base_seed", args.seed)
    try:
        plan = BenchPlan.from_dict(d)
        plan.kinds
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    summary = run_bench(plan, args.jobs)
    if not args.quiet:
        print((Path(plan.out) / "summary.txt").read_text(), end="")
    return EXIT_PARTIAL if summary["failed"] else EXIT_OK


def cmd_sweep(args) -> int:
    d = _plan_dict(args)
    if args.ks:
        d["ks"] = [int(k) for k in args.ks.split(",")]
    d.setdefault("seed", args.seed)
    try:
        plan = SweepPlan.from_dict(d)
        plan.kinds
        result = run_sweep(plan, args.jobs)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if not args.quiet:
        print((Path(plan.out) / "sweep_tracked.csv").read_text(), end="")
    return EXIT_PARTIAL if result["failed"] else EXIT_OK


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    def flags(suppress: bool) -> argparse.ArgumentParser:
        # global flags are accepted before or after the subcommand; subparsers
        # must not reset values given before it
        f = argparse.ArgumentParser(add_help=False)
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        f.add_argument("--seed", type=int, default=dflt(42))
        f.add_argument("--jobs", type=int, default=dflt(1))
        f.add_argument("--precision", choices=["f32", "f64"], default=dflt(None))
        f.add_argument("--quiet", action="store_true", default=dflt(False))
        return f

    common = flags(True)
    p = argparse.ArgumentParser(prog="msrbench", parents=[flags(False)],
                                description="Multi-scenario CTR benchmark")
    p.add_argument("--version", action="version", version=f"msrbench {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", parents=[common], help="ingest raw files into a processed dataset")
    s.add_argument("--manifest", required=True, help="built-in manifest name or JSON path")
    s.add_argument("--raw", help="raw directory (default $SWR_DATA_DIR/<name>)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("analyze", parents=[common], help="scenario statistics (counts, COV, overlaps)")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--data")
    g.add_argument("--counts", help="comma-separated interaction counts")
    s.add_argument("--out")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic multi-scenario dataset")
    s.add_argument("--scenarios", type=int, default=3)
    s.add_argument("--rows", type=int, default=100_000)
    s.add_argument("--base-ctr", type=float, nargs="+")
    s.add_argument("--weights", type=float, nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train one model")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="re-evaluate a run's checkpoint on the test split")
    s.add_argument("--run", required=True)
    s.add_argument("--data", help="override the dataset recorded in the run")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    for name, fn, helptext in (("bench", cmd_bench, "model x seed benchmark"),
                               ("sweep", cmd_sweep, "scenario-count sweep")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--plan", help="plan JSON")
        s.add_argument("--dataset", help="processed dir or JSON dataset spec")
        s.add_argument("--models", help="comma-separated kinds or 'all'")
        s.add_argument("--out")
        if name == "bench":
            s.add_argument("--seeds", type=int)
        else:
            s.add_argument("--ks", help="comma-separated scenario counts")
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.precision:
        set_precision(args.precision)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if "unknown model kind" in str(exc) and "valid kinds" not in str(exc):
            print(f"valid kinds: {', '.join(KINDS)}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
