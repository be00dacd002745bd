"""Run matrices: one run, a (model x seed) benchmark, and the scenario-count sweep."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .core import precision
from .data import (ProcessedDataset, SyntheticSpec, filter_top_scenarios, gen_synthetic,
                   read_processed)
from .evaluation import (ScenarioReport, aggregate_reports, rows_to_csv, rows_to_text,
                         summary_rows, welch_ttest)
from .models import KINDS, TOWER_SWEEP, build_model, make_config
from .training import TrainConfig, derive_seed, train

log = logging.getLogger(__name__)


def data_root() -> Path:
    return Path(os.environ.get("SWR_DATA_DIR", "data"))


def load_dataset(spec) -> ProcessedDataset:
    """Dataset from a spec.

    A string or ``{"processed": dir}`` loads a prepared dataset (relative
    paths fall back to $SWR_DATA_DIR). ``{"synthetic": {...}}`` generates one.
    An optional ``"top_k"`` keeps the k largest scenarios.
    """
    if isinstance(spec, str):
        spec = {"processed": spec}
    if "processed" in spec:
        p = Path(spec["processed"])
        if not p.exists() and not p.is_absolute() and (data_root() / p).exists():
            p = data_root() / p
        if not (p / "stats.json").exists():
            raise FileNotFoundError(f"processed dataset not found: {p}")
        ds = read_processed(p)
    elif "synthetic" in spec:
        s = dict(spec["synthetic"])
        S, n_rows, seed = int(s.pop("S", 3)), int(s.pop("n_rows", 100_000)), int(s.pop("seed", 0))
        syn = SyntheticSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in s.items()}) if s else None
        ds = gen_synthetic(S, n_rows, syn, seed)
    else:
        raise ValueError(f"dataset spec needs 'processed' or 'synthetic': {spec}")
    if spec.get("top_k"):
        ds = filter_top_scenarios(ds, int(spec["top_k"]))
    return ds


def model_config(kind: str, model_spec: dict | None = None):
    spec = dict(model_spec or {})
    opts = dict(spec.pop("options", {}))
    return make_config(kind, **spec, **opts)


def run_one(dataset_spec, model_spec: dict, train_spec: dict, seed: int, run_dir) -> dict:
    """Train one (model, seed) pair into ``run_dir``; never raises."""
    cfg = TrainConfig.from_dict({**train_spec, "seed": seed})
    try:
        with precision(cfg.precision):
            ds = load_dataset(dataset_spec)
            mcfg = model_config(model_spec["kind"], {k: v for k, v in model_spec.items() if k != "kind"})
            model = build_model(mcfg, ds.feature_space, ds.n_scenarios, derive_seed(seed, "init"))
            rec = train(model, ds.parts(), cfg, run_dir, {"dataset": dataset_spec, "seed": seed})
        return {"status": rec.status, "report": rec.test_report, "run_dir": str(run_dir),
                "params": model.param_count(), "epochs": len(rec.epochs)}
    except Exception as exc:  # recorded, the plan carries on
        log.exception("run %s failed", run_dir)
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        (Path(run_dir) / "status").write_text(f"failed {type(exc).__name__}: {exc}\n")
        return {"status": "failed", "report": None, "run_dir": str(run_dir), "error": str(exc)}


def _map(jobs: int, fn, argsets: list[tuple]) -> list:
    if jobs <= 1 or len(argsets) <= 1:
        return [fn(*a) for a in argsets]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *a) for a in argsets]
        return [f.result() for f in futures]  # plan order, not completion order


# --------------------------------------------------------------------- bench

@dataclass
class BenchPlan:
    dataset: object
    models: list = field(default_factory=lambda: ["all"])
    seeds: int = 10
    base_seed: int = 42
    train: dict = field(default_factory=dict)
    model_overrides: dict = field(default_factory=dict)   # kind -> {embed_dim, tower_dims, options}
    out: str = "runs/bench"
    alpha: float = 0.05

    @property
    def kinds(self) -> list[str]:
        kinds = list(KINDS) if self.models in (["all"], "all") else list(self.models)
        bad = [k for k in kinds if k not in KINDS]
        if bad:
            raise ValueError(f"unknown model kind {bad[0]!r}; valid kinds: {', '.join(KINDS)}")
        return kinds

    def matrix(self) -> list[tuple[str, int, Path]]:
        root = Path(self.out)
        return [(k, self.base_seed + i, root / k / f"seed{self.base_seed + i}")
                for k in self.kinds for i in range(self.seeds)]

    @classmethod
    def from_dict(cls, d: dict) -> "BenchPlan":
        return cls(**d)


def run_bench(plan: BenchPlan, jobs: int = 1) -> dict:
    """Run the matrix, aggregate mean and std per model, flag best/second, Welch-test against the best."""
    matrix = plan.matrix()
    args = [(plan.dataset, {"kind": k, **plan.model_overrides.get(k, {})}, plan.train, seed, d)
            for k, seed, d in matrix]
    results = _map(jobs, run_one, args)
    by_model: dict[str, list] = {k: [] for k in plan.kinds}
    for (k, seed, _), res in zip(matrix, results):
        by_model[k].append((seed, res))
    aggregates, per_seed_auc = {}, {}
    for k, runs in by_model.items():
        ok = [(s, r) for s, r in runs if r["report"] is not None]
        reports = [ScenarioReport.from_dict(r["report"]) for _, r in ok]
        agg = aggregate_reports(reports, [s for s, _ in ok])
        agg["failed_runs"] = len(runs) - len(ok)
        aggregates[k] = agg
        per_seed_auc[k] = [r.auc for r in reports if r.auc is not None]
    means = {k: a["overall"]["auc"]["mean"] for k, a in aggregates.items() if a["overall"]["auc"]["mean"] is not None}
    best = max(means, key=means.get) if means else None
    tests = {}
    for k in aggregates:
        if best is None or k == best or len(per_seed_auc[k]) < 2 or len(per_seed_auc[best]) < 2:
            continue
        t, p = welch_ttest(per_seed_auc[best], per_seed_auc[k])
        tests[k] = {"t": t, "p": p, "significant": p < plan.alpha}
    rows = summary_rows(aggregates, tests)
    root = Path(plan.out)
    root.mkdir(parents=True, exist_ok=True)
    (root / "summary.csv").write_text(rows_to_csv(rows))
    (root / "summary.txt").write_text(rows_to_text(rows))
    summary = {"plan": asdict(plan), "best": best, "aggregates": aggregates, "tests": tests,
               "per_seed_auc": per_seed_auc, "failed": sum(a["failed_runs"] for a in aggregates.values())}
    (root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    return summary


# --------------------------------------------------------------------- sweep

@dataclass
class SweepPlan:
    dataset: object
    ks: list = field(default_factory=lambda: [3, 4, 5, 6, 7])
    models: list = field(default_factory=lambda: ["all"])
    seed: int = 42
    tower_dims: tuple = TOWER_SWEEP
    train: dict = field(default_factory=dict)
    model_overrides: dict = field(default_factory=dict)
    tracked: tuple = (0, 2)        # a dense and a sparser scenario, by size rank
    out: str = "runs/sweep"

    @property
    def kinds(self) -> list[str]:
        return BenchPlan(self.dataset, self.models).kinds

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        return cls(**d)


def run_sweep(plan: SweepPlan, jobs: int = 1) -> dict:
    base = load_dataset(plan.dataset)
    too_big = [k for k in plan.ks if k > base.n_scenarios or k < 2]
    if too_big:
        raise ValueError(f"requested scenario counts {too_big} but dataset has {base.n_scenarios} scenarios")
    spec = plan.dataset if isinstance(plan.dataset, dict) else {"processed": plan.dataset}
    root = Path(plan.out)
    args = []
    for k in plan.ks:
        for kind in plan.kinds:
            m = {"kind": kind, "tower_dims": list(plan.tower_dims), **plan.model_overrides.get(kind, {})}
            args.append(({**spec, "top_k": k}, m, plan.train, plan.seed, root / f"k{k}" / kind))
    results = _map(jobs, run_one, args)
    rows = []
    for (ds_spec, m, *_), res in zip(args, results):
        rep = res["report"]
        for s in range(ds_spec["top_k"]):
            ps = rep["per_scenario"][s] if rep else None
            rows.append({"k": ds_spec["top_k"], "model": m["kind"], "scenario": s,
                         "n": ps["n"] if ps else None, "auc": ps["auc"] if ps else None,
                         "overall_auc": rep["overall"]["auc"] if rep else None, "status": res["status"]})
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.csv").write_text(rows_to_csv(rows))
    tracked = [r for r in rows if r["scenario"] in plan.tracked]
    (root / "sweep_tracked.csv").write_text(rows_to_csv(tracked))
    out = {"plan": asdict(plan), "rows": rows,
           "failed": sum(r["status"] == "failed" for r in results),
           "kept_scenarios": {k: filter_top_scenarios(base, k).meta["kept_scenarios"] for k in plan.ks}}
    (root / "sweep.json").write_text(json.dumps(out, indent=2, sort_keys=True, default=str) + "\n")
    return out
