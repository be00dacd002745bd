from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .features import FeatureSpace

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Batch:
    sparse: np.ndarray     # int64 n x n_sparse
    dense: np.ndarray      # float n x n_dense
    scenario: np.ndarray   # int64 n
    label: np.ndarray      # float n, values in {0, 1}
    ids: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.scenario.shape[0])

    def take(self, idx) -> "Batch":
        return Batch(self.sparse[idx], self.dense[idx], self.scenario[idx], self.label[idx],
                     None if self.ids is None else self.ids[idx])


@dataclass
class ProcessedDataset:
    name: str
    feature_space: FeatureSpace
    sparse: np.ndarray
    dense: np.ndarray
    scenario: np.ndarray
    label: np.ndarray
    ids: np.ndarray
    split: np.ndarray | None = None
    user: np.ndarray | None = None
    item: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.scenario.shape[0])

    @property
    def n_scenarios(self) -> int:
        return self.feature_space.n_scenarios

    def subset(self, idx, name: str | None = None) -> "ProcessedDataset":
        idx = np.asarray(idx)
        pick = (lambda a: None if a is None else a[idx])
        return ProcessedDataset(name or self.name, self.feature_space, self.sparse[idx],
                                self.dense[idx], self.scenario[idx], self.label[idx],
                                self.ids[idx], pick(self.split), pick(self.user),
                                pick(self.item), dict(self.meta))

    def as_batch(self) -> Batch:
        return Batch(self.sparse, self.dense, self.scenario, self.label, self.ids)

    def parts(self) -> tuple["ProcessedDataset", "ProcessedDataset", "ProcessedDataset"]:
        if self.split is None:
            raise ValueError(f"dataset {self.name!r} has no split assignment")
        return tuple(self.subset(np.flatnonzero(self.split == k), f"{self.name}:{SPLIT_NAMES[k]}")
                     for k in (TRAIN, VAL, TEST))


# ----------------------------------------------------------------- splitting

def _controlled_round(counts: np.ndarray, ratios=(0.8, 0.1, 0.1)) -> np.ndarray:
    """Integer S x 3 allocation with row sums ``counts``, every cell and every
    column total within one example of its exact quota.

    Cells start at their floors; the leftover units are a 0/1 choice per cell,
    solved as a small integer program that prefers large fractional parts. The
    constraint matrix is a bipartite incidence matrix, so a solution always
    exists and the relaxation is already integral.
    """
    counts = np.asarray(counts, dtype=np.int64)
    quota = counts[:, None] * np.asarray(ratios, dtype=float)[None, :]
    alloc = np.floor(quota + 1e-9).astype(np.int64)
    S = counts.size
    row_left = counts - alloc.sum(axis=1)
    col_q = quota.sum(axis=0)
    col_lo = np.floor(col_q + 1e-9) - alloc.sum(axis=0)
    col_hi = np.ceil(col_q - 1e-9) - alloc.sum(axis=0)
    rows = np.kron(np.eye(S), np.ones(3))          # S x 3S
    cols = np.tile(np.eye(3), S)                   # 3 x 3S
    res = milp(-(quota - alloc).ravel(), integrality=np.ones(3 * S), bounds=Bounds(0, 1),
               constraints=[LinearConstraint(rows, row_left, row_left),
                            LinearConstraint(cols, col_lo, col_hi)])
    if not res.success:
        raise RuntimeError(f"controlled rounding failed: {res.message}")
    return alloc + np.rint(res.x).astype(np.int64).reshape(S, 3)


def split_assignment(scenario: np.ndarray, n_scenarios: int, seed: int) -> np.ndarray:
    """Stratified 8:1:1 split labels (0 train, 1 val, 2 test) per example."""
    scenario = np.asarray(scenario)
    if scenario.size == 0:
        raise ValueError("cannot split an empty dataset")
    counts = np.bincount(scenario, minlength=n_scenarios)
    for s, c in enumerate(counts):
        if 0 < c < 10:
            warnings.warn(f"scenario {s} has only {c} examples; 8:1:1 split is best-effort")
    alloc = _controlled_round(counts)
    out = np.empty(scenario.size, dtype=np.int8)
    for s in range(n_scenarios):
        rows = np.flatnonzero(scenario == s)
        rows = rows[np.random.default_rng([seed, s]).permutation(rows.size)]
        a, b = alloc[s, 0], alloc[s, 0] + alloc[s, 1]
        out[rows[:a]] = TRAIN
        out[rows[a:b]] = VAL
        out[rows[b:]] = TEST
    return out


def split_811(dataset: ProcessedDataset, seed: int):
    """Return (train, val, test) of a dataset, stratified by scenario."""
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    labels = split_assignment(dataset.scenario, dataset.n_scenarios, seed)
    return tuple(dataset.subset(np.flatnonzero(labels == k), f"{dataset.name}:{SPLIT_NAMES[k]}")
                 for k in (TRAIN, VAL, TEST))


def make_batches(split: ProcessedDataset | Batch, batch_size: int, shuffle_seed: int | None = None,
                 epoch: int = 0) -> list[Batch]:
    """Batches covering every example once; order depends only on (shuffle_seed, epoch)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    full = split.as_batch() if isinstance(split, ProcessedDataset) else split
    n = len(full)
    order = np.arange(n) if shuffle_seed is None else \
        np.random.default_rng([shuffle_seed, epoch]).permutation(n)
    return [full.take(order[i:i + batch_size]) for i in range(0, n, batch_size)]


# ----------------------------------------------------------------------- I/O

def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def write_processed(ds: ProcessedDataset, out_dir, stats: dict | None = None) -> None:
    """Write train/val/test CSVs (or data.csv without a split) plus stats.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fs = ds.feature_space
    header = fs.sparse_names + fs.dense_names + ["scenario", "label"]
    parts = ds.parts() if ds.split is not None else (ds,)
    names = SPLIT_NAMES if ds.split is not None else ("data",)
    for part, name in zip(parts, names):
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            dense_txt = [[_fmt(v) for v in row] for row in part.dense]
            for i in range(len(part)):
                w.writerow([*part.sparse[i].tolist(), *dense_txt[i], int(part.scenario[i]), int(part.label[i])])
    payload = {"name": ds.name, "feature_space": fs.to_dict(),
               "n_examples": len(ds), "meta": ds.meta}
    if ds.split is not None:
        payload["split_sizes"] = {n: int((ds.split == k).sum()) for k, n in enumerate(SPLIT_NAMES)}
    if stats:
        payload.update(stats)
    (out / "stats.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_csv(path: Path, fs: FeatureSpace):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    expected = fs.sparse_names + fs.dense_names + ["scenario", "label"]
    if header != expected:
        raise ValueError(f"{path}: header {header} does not match feature space {expected}")
    ks, kd = len(fs.sparse), len(fs.dense)
    arr = np.array(rows, dtype=object).reshape(len(rows), len(header))
    sparse = arr[:, :ks].astype(np.int64) if rows else np.zeros((0, ks), np.int64)
    dense = arr[:, ks:ks + kd].astype(np.float64) if rows else np.zeros((0, kd))
    scen = arr[:, ks + kd].astype(np.int64) if rows else np.zeros(0, np.int64)
    label = arr[:, ks + kd + 1].astype(np.float64) if rows else np.zeros(0)
    return sparse, dense, scen, label


def read_processed(in_dir) -> ProcessedDataset:
    """Load a directory written by ``write_processed`` (split column reconstructed)."""
    d = Path(in_dir)
    stats = json.loads((d / "stats.json").read_text())
    fs = FeatureSpace.from_dict(stats["feature_space"])
    files = [d / f"{n}.csv" for n in SPLIT_NAMES]
    if all(f.exists() for f in files):
        parts = [_read_csv(f, fs) for f in files]
        split = np.concatenate([np.full(len(p[2]), k, np.int8) for k, p in enumerate(parts)])
    else:
        parts = [_read_csv(d / "data.csv", fs)]
        split = None
    sparse, dense, scen, label = (np.concatenate([p[i] for p in parts]) for i in range(4))
    # user/item keys come back as their encoded columns (unseen keys share index 0)
    key = (lambda n: sparse[:, fs.index(n)].copy() if n in fs.sparse_names else None)
    return ProcessedDataset(stats["name"], fs, sparse, dense.reshape(len(scen), len(fs.dense)), scen, label,
                            np.arange(len(scen), dtype=np.int64), split,
                            key(fs.user_feature), key(fs.item_feature), stats.get("meta", {}))
