"""Metrics, scenario-wise reports, significance tests and efficiency profiling."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import stdtr
from scipy.stats import rankdata

from .core import AdamState, adam_step, collect_grads
from .data.dataset import Batch, ProcessedDataset, make_batches

LOGLOSS_EPS = 1e-7


# ------------------------------------------------------------------ metrics

def auc(labels, scores) -> float:
    """Mann-Whitney AUC with tied scores counted as half. NaN when only one class is present."""
    y = np.asarray(labels, dtype=np.float64).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    pos = y > 0.5
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(s)  # average ranks for ties
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def logloss(labels, scores) -> float:
    y = np.asarray(labels, dtype=np.float64).ravel()
    p = np.clip(np.asarray(scores, dtype=np.float64).ravel(), LOGLOSS_EPS, 1 - LOGLOSS_EPS)
    if y.size == 0:
        return math.nan
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def _num(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


# ------------------------------------------------------------------ reports

@dataclass
class ScenarioReport:
    """Overall (pooled, i.e. micro) and per-scenario metrics.

    Missing values (single-class or empty scenario) are ``None`` and listed in
    ``flags``; they are excluded from the macro average.
    """
    overall: dict
    per_scenario: list
    macro_auc: float | None = None
    flags: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    meta: dict = field(default_factory=lambda: {"overall_auc": "micro (pooled predictions)"})

    @property
    def auc(self):
        return self.overall["auc"]

    @property
    def logloss(self):
        return self.overall["logloss"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


def report_from_predictions(labels, scores, scenario, n_scenarios: int) -> ScenarioReport:
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    scenario = np.asarray(scenario)
    overall = {"auc": _num(auc(labels, scores)), "logloss": _num(logloss(labels, scores)), "n": int(labels.size)}
    flags = []
    if overall["auc"] is None:
        flags.append("overall: single class")
    rows = []
    for s in range(n_scenarios):
        m = scenario == s
        n = int(m.sum())
        row = {"scenario": s, "n": n, "auc": None, "logloss": None}
        if n == 0:
            flags.append(f"S-{s}: empty")
        else:
            row["auc"] = _num(auc(labels[m], scores[m]))
            row["logloss"] = _num(logloss(labels[m], scores[m]))
            if row["auc"] is None:
                flags.append(f"S-{s}: single class")
        rows.append(row)
    valid = [r["auc"] for r in rows if r["auc"] is not None]
    return ScenarioReport(overall, rows, float(np.mean(valid)) if valid else None, flags)


def predict_split(model, split: ProcessedDataset | Batch, batch_size: int = 8192) -> np.ndarray:
    batches = make_batches(split, batch_size)
    if not batches:
        return np.zeros(0)
    return np.concatenate([model.predict(b) for b in batches])


def evaluate_per_scenario(model, split: ProcessedDataset, batch_size: int = 8192) -> ScenarioReport:
    if len(split) == 0:
        raise ValueError("cannot evaluate an empty split")
    scores = predict_split(model, split, batch_size)
    return report_from_predictions(split.label, scores, split.scenario, model.n_scenarios
                                   if getattr(model, "uses_scenario", True) else split.n_scenarios)


def aggregate_reports(reports: list[ScenarioReport], seeds: list[int] | None = None) -> dict:
    """Mean and sample std (n-1) over seeds for overall and per-scenario metrics."""
    def stats(values):
        v = [x for x in values if x is not None]
        if not v:
            return {"mean": None, "std": None, "n": 0}
        return {"mean": float(np.mean(v)), "std": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0, "n": len(v)}

    out = {"seeds": list(seeds or []),
           "overall": {m: stats([r.overall[m] for r in reports]) for m in ("auc", "logloss")},
           "macro_auc": stats([r.macro_auc for r in reports]),
           "per_scenario": []}
    n_s = len(reports[0].per_scenario) if reports else 0
    for s in range(n_s):
        out["per_scenario"].append({"scenario": s, **{m: stats([r.per_scenario[s][m] for r in reports])
                                                      for m in ("auc", "logloss")}})
    return out


# -------------------------------------------------------------- significance

def welch_ttest(a, b) -> tuple[float, float]:
    """Two-sided Welch t-test; returns (t, p)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("welch_ttest needs at least two samples per group")
    # a constant sample is taken at face value; its float mean and variance need not be exact
    const_a, const_b = np.ptp(a) == 0, np.ptp(b) == 0
    ma = a[0] if const_a else a.mean()
    mb = b[0] if const_b else b.mean()
    va = 0.0 if const_a else a.var(ddof=1) / a.size
    vb = 0.0 if const_b else b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        return (0.0, 1.0) if ma == mb else (math.copysign(math.inf, ma - mb), 0.0)
    t = (ma - mb) / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = 2.0 * stdtr(df, -abs(t))
    return float(t), float(min(1.0, p))


# ---------------------------------------------------------------- efficiency

@dataclass
class EfficiencyReport:
    train_seconds_per_epoch: float
    inference_ms_per_batch: float
    param_count: int
    epochs: int
    batches: int

    def to_dict(self) -> dict:
        return asdict(self)


def profile(model, train_split, test_split, cfg, epochs: int = 1) -> EfficiencyReport:
    """Time training epochs and test-set inference; the first batch of each is a warm-up.

    The model is trained in the process, so profile a throwaway instance.
    """
    state = AdamState(lr=cfg.lr)
    model.train()
    per_epoch = []
    for ep in range(epochs):
        batches = make_batches(train_split, cfg.batch_size, cfg.seed, ep)
        times = []
        for b in batches:
            t0 = time.perf_counter()
            model.params.zero_grad()
            model.loss(b).backward()
            adam_step(model.params, state, collect_grads(model.params))
            times.append(time.perf_counter() - t0)
        kept = times[1:] or times
        per_epoch.append(float(np.mean(kept)) * len(batches))
    tb = make_batches(test_split, cfg.batch_size)
    times = []
    for b in tb:
        t0 = time.perf_counter()
        model.predict(b)
        times.append(time.perf_counter() - t0)
    infer = float(np.mean(times[1:] or times)) * 1000.0
    return EfficiencyReport(float(np.mean(per_epoch)), float(infer), model.param_count(), epochs, len(tb))


# -------------------------------------------------------------------- tables

def rank_flags(values: list, higher_is_better: bool = True) -> list[str]:
    """'best' / 'second' / '' per entry; missing values never rank."""
    idx = [i for i, v in enumerate(values) if v is not None]
    order = sorted(idx, key=lambda i: -values[i] if higher_is_better else values[i])
    flags = [""] * len(values)
    if order:
        flags[order[0]] = "best"
    if len(order) > 1:
        flags[order[1]] = "second"
    return flags


def _fmt(mean, std):
    if mean is None:
        return "n/a"
    return f"{mean:.4f}±{std:.4f}" if std is not None else f"{mean:.4f}"


def summary_rows(aggregates: dict[str, dict], tests: dict[str, dict] | None = None) -> list[dict]:
    names = list(aggregates)
    aucs = [aggregates[n]["overall"]["auc"]["mean"] for n in names]
    lls = [aggregates[n]["overall"]["logloss"]["mean"] for n in names]
    af, lf = rank_flags(aucs, True), rank_flags(lls, False)
    rows = []
    for i, n in enumerate(names):
        a, l = aggregates[n]["overall"]["auc"], aggregates[n]["overall"]["logloss"]
        t = (tests or {}).get(n, {})
        rows.append({"model": n, "auc_mean": a["mean"], "auc_std": a["std"], "auc_flag": af[i],
                     "logloss_mean": l["mean"], "logloss_std": l["std"], "logloss_flag": lf[i],
                     "n_runs": a["n"], "p_vs_best": t.get("p"), "significant": t.get("significant"),
                     "failed_runs": aggregates[n].get("failed_runs", 0)})
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else (f"{v:.10g}" if isinstance(v, float) else v))
                        for k, v in r.items()})
    return buf.getvalue()


def rows_to_text(rows: list[dict]) -> str:
    """Aligned text table; best marked with '*', second with '_'."""
    mark = {"best": "*", "second": "_", "": ""}
    header = ["Model", "AUC", "Logloss", "runs", "p vs best"]
    body = []
    for r in rows:
        p = r.get("p_vs_best")
        body.append([r["model"], _fmt(r["auc_mean"], r["auc_std"]) + mark[r["auc_flag"]],
                     _fmt(r["logloss_mean"], r["logloss_std"]) + mark[r["logloss_flag"]],
                     str(r["n_runs"]), "-" if p is None else f"{p:.3g}"])
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(lines) + "\n"
