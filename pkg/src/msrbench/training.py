"""Epoch loop with Adam, val-AUC early stopping, plateau LR schedule and run directories."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import AdamState, adam_step, collect_grads, save_checkpoint
from .data.dataset import make_batches
from .evaluation import evaluate_per_scenario

log = logging.getLogger(__name__)

# Per-component seeds are fixed offsets from the run seed.
SEED_OFFSETS = {"init": 0, "shuffle": 1_000_003, "synthetic": 2_000_003}

# Choices the literature leaves open; recorded in every resolved config.
DESIGN_FLAGS = {
    "init": "dense U(+-1/sqrt(fan_in)), embeddings N(0, 0.01), biases 0",
    "loss": "mean BCE on logits (fused log-sigmoid)",
    "early_stop_metric": "val AUC, strict improvement",
    "restore": "best val AUC checkpoint",
    "dropout": "none",
    "regularization": "none",
}


def derive_seed(seed: int, component: str) -> int:
    return int(seed) + SEED_OFFSETS[component]


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 4096
    max_epochs: int = 10
    early_stop_patience: int = 2
    scheduler: str = "none"
    plateau_factor: float = 0.5
    plateau_patience: int = 1
    min_lr: float = 1e-6
    seed: int = 42
    precision: str = "f32"
    eval_batch_size: int = 16384

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.early_stop_patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("patience, max_epochs and batch_size must be >= 1")
        if self.scheduler not in ("none", "plateau"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"unknown precision {self.precision!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


def early_stop_check(history: list[float], patience: int) -> str:
    """'stop' once ``patience`` epochs have passed without a strict improvement on the best."""
    if not history:
        raise ValueError("empty history")
    vals = [(-math.inf if v is None or math.isnan(v) else v) for v in history]
    best = int(np.argmax(vals))  # first occurrence, so ties are not improvements
    return "stop" if len(vals) - 1 - best >= patience else "continue"


@dataclass
class PlateauState:
    lr: float
    factor: float = 0.5
    patience: int = 1
    min_lr: float = 1e-6
    best: float = -math.inf
    bad_epochs: int = 0


def lr_schedule_step(state: PlateauState, metric: float) -> float:
    """Reduce lr by ``factor`` once more than ``patience`` epochs pass without improvement."""
    if metric is not None and not math.isnan(metric) and metric > state.best:
        state.best = metric
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs > state.patience:
            state.lr = min(state.lr, max(state.min_lr, state.lr * state.factor))  # never raises lr
            state.bad_epochs = 0
    return state.lr


@dataclass
class RunRecord:
    config: dict
    epochs: list = field(default_factory=list)
    checkpoint: str | None = None
    status: str = "running"
    best_epoch: int | None = None
    best_val_auc: float | None = None
    failed_batch: dict | None = None
    test_report: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _jsonable(x):
    if isinstance(x, float) and (math.isnan(x) or math.isinf(x)):
        return None
    return x


def train(model, splits, cfg: TrainConfig, run_dir=None, extra_config: dict | None = None) -> RunRecord:
    """Train ``model`` on splits = (train, val, test) and restore the best-val-AUC parameters.

    With ``run_dir`` the run is persisted as config.resolved.json, log.jsonl,
    model.best.swr, metrics.json and a status file.
    """
    train_split, val_split, test_split = splits
    resolved = {"version": __version__, "train": cfg.to_dict(), "model": model.config.to_dict(),
                "model_seed": model.seed, "n_scenarios": model.n_scenarios,
                "feature_space": model.feature_space.to_dict(), "design": DESIGN_FLAGS,
                "shuffle_seed": derive_seed(cfg.seed, "shuffle"), **(extra_config or {})}
    rec = RunRecord(config=resolved)
    out = Path(run_dir) if run_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
        (out / "log.jsonl").write_text("")
        rec.checkpoint = str(out / "model.best.swr")

    state = AdamState(lr=cfg.lr)
    sched = PlateauState(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr)
    history: list[float] = []
    best_state = model.params.state()
    shuffle_seed = derive_seed(cfg.seed, "shuffle")
    rec.status = "completed"

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        total, count = 0.0, 0
        for i, batch in enumerate(make_batches(train_split, cfg.batch_size, shuffle_seed, epoch)):
            model.params.zero_grad()
            loss = model.loss(batch)
            value = float(loss.data)
            if not math.isfinite(value):
                rec.status = "failed"
                rec.failed_batch = {"epoch": epoch, "batch": i}
                log.error("non-finite loss at epoch %d batch %d", epoch, i)
                break
            loss.backward()
            adam_step(model.params, state, collect_grads(model.params))
            total += value * len(batch)
            count += len(batch)
        if rec.status == "failed":
            break
        val = evaluate_per_scenario(model, val_split, cfg.eval_batch_size)
        val_auc = val.auc if val.auc is not None else math.nan
        entry = {"epoch": epoch, "train_loss": total / max(count, 1), "val_auc": _jsonable(val_auc),
                 "val_logloss": _jsonable(val.logloss), "lr": state.lr,
                 "wall_time": time.perf_counter() - t0}
        rec.epochs.append(entry)
        if out is not None:
            with open(out / "log.jsonl", "a") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        improved = not history or (not math.isnan(val_auc) and val_auc > max(
            (-math.inf if math.isnan(h) else h) for h in history))
        history.append(val_auc)
        if improved:
            rec.best_epoch, rec.best_val_auc = epoch, _jsonable(val_auc)
            best_state = model.params.state()
            if out is not None:
                save_checkpoint(model.params, out / "model.best.swr")
        log.info("epoch %d loss %.5f val_auc %.5f", epoch, entry["train_loss"], val_auc)
        if cfg.scheduler == "plateau":
            state.lr = lr_schedule_step(sched, val_auc)
        if early_stop_check(history, cfg.early_stop_patience) == "stop":
            rec.status = "early_stopped" if epoch < cfg.max_epochs else "completed"
            break

    model.params.load_state(best_state)
    model.eval()
    if rec.status != "failed" and len(test_split):
        rec.test_report = evaluate_per_scenario(model, test_split, cfg.eval_batch_size).to_dict()
    if out is not None:
        if rec.test_report is not None:
            metrics = {**rec.test_report, "best_epoch": rec.best_epoch, "best_val_auc": rec.best_val_auc,
                       "status": rec.status}
            (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        (out / "status").write_text(rec.status + ("" if rec.failed_batch is None else
                                                  f" epoch={rec.failed_batch['epoch']} batch={rec.failed_batch['batch']}")
                                    + "\n")
    return rec
