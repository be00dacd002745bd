"""Manifest-driven ingestion of raw interaction logs into encoded examples.

Raw tables are read column-wise as strings. Encoders are fitted on the
training split only: sparse vocabularies (index 0 reserved for values unseen
in training), dense min-max ranges and quantile bucket boundaries.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import TRAIN, ProcessedDataset, split_assignment
from .features import DatasetManifest, FeatureSpace, FeatureSpec, ManifestError

log = logging.getLogger(__name__)


class DataError(Exception):
    pass


class MissingColumnError(DataError):
    pass


@dataclass
class RawTable:
    columns: dict[str, np.ndarray]
    n_rows: int
    skipped: int = 0
    fold: np.ndarray | None = None
    notes: list = field(default_factory=list)


# ------------------------------------------------------------------- readers

def _read_delimited(path: Path, delimiter: str, columns: list[str] | None, header: bool,
                    encoding: str) -> tuple[list[str], list[list[str]], int]:
    text = path.read_text(encoding=encoding)
    lines = text.splitlines()
    if header:
        if not lines:
            return list(columns or []), [], 0
        names = lines[0].split(delimiter)
        lines = lines[1:]
    else:
        names = list(columns)
    width = len(names)
    rows, skipped = [], 0
    for line in lines:
        if not line.strip():
            continue
        parts = line.split(delimiter)
        if len(parts) != width:
            skipped += 1
            continue
        rows.append(parts)
    return names, rows, skipped


def _table(names, rows) -> dict[str, np.ndarray]:
    if not rows:
        return {n: np.array([], dtype=object) for n in names}
    arr = np.array(rows, dtype=object)
    return {n: arr[:, j] for j, n in enumerate(names)}


def read_source(raw_dir: Path, spec: dict) -> RawTable:
    path = raw_dir / spec["file"]
    if not path.exists():
        raise DataError(f"raw file not found: {path}")
    names, rows, skipped = _read_delimited(path, spec.get("delimiter", ","), spec.get("columns"),
                                           spec.get("header", "columns" not in spec),
                                           spec.get("encoding", "utf-8"))
    cols = _table(names, rows)
    for k, v in spec.get("constants", {}).items():
        cols[k] = np.full(len(rows), str(v), dtype=object)
    fold = None
    if "fold" in spec:
        fold = np.full(len(rows), int(spec["fold"]), dtype=np.int8)
    return RawTable(cols, len(rows), skipped, fold)


def _concat(tables: list[RawTable]) -> RawTable:
    names = list(tables[0].columns)
    for t in tables[1:]:
        if list(t.columns) != names:
            raise DataError(f"sources disagree on columns: {names} vs {list(t.columns)}")
    cols = {n: np.concatenate([t.columns[n] for t in tables]) for n in names}
    folds = [t.fold for t in tables]
    fold = np.concatenate(folds) if all(f is not None for f in folds) else None
    return RawTable(cols, sum(t.n_rows for t in tables), sum(t.skipped for t in tables), fold)


def _join(table: RawTable, raw_dir: Path, spec: dict) -> None:
    side = read_source(raw_dir, spec)
    key = spec["on"]
    lookup = {v: i for i, v in enumerate(side.columns[key])}
    pos = np.array([lookup.get(v, -1) for v in table.columns[key]], dtype=np.int64)
    missing = int((pos < 0).sum())
    if missing:
        table.notes.append(f"{missing} rows without a match in {spec['file']}")
    for name, values in side.columns.items():
        if name == key:
            continue
        col = np.full(table.n_rows, "", dtype=object)
        ok = pos >= 0
        col[ok] = values[pos[ok]]
        table.columns[name] = col


def _explode_impressions(table: RawTable, spec: dict) -> RawTable:
    """MIND behaviors: one row per ``newsid-click`` token of the impressions column."""
    col = spec["column"]
    keep = [n for n in table.columns if n != col]
    out = {n: [] for n in keep}
    items, clicks = [], []
    skipped = 0
    for i, cell in enumerate(table.columns[col]):
        for tok in str(cell).split():
            news, _, click = tok.rpartition("-")
            if not news or click not in ("0", "1"):
                skipped += 1
                continue
            items.append(news)
            clicks.append(click)
            for n in keep:
                out[n].append(table.columns[n][i])
    cols = {n: np.array(v, dtype=object) for n, v in out.items()}
    cols[spec.get("item_column", "news_id")] = np.array(items, dtype=object)
    cols[spec.get("label_column", "click")] = np.array(clicks, dtype=object)
    return RawTable(cols, len(items), table.skipped + skipped, None, table.notes)


def read_raw(manifest: DatasetManifest, raw_path) -> RawTable:
    raw_dir = Path(raw_path)
    if not raw_dir.exists():
        raise DataError(f"raw path not found: {raw_dir}")
    if not manifest.sources:
        raise ManifestError(f"manifest {manifest.name!r} declares no sources")
    table = _concat([read_source(raw_dir, s) for s in manifest.sources])
    if manifest.format == "mind":
        table = _explode_impressions(table, {"column": "impressions"})
    for j in manifest.joins:
        _join(table, raw_dir, j)
    return table


# ------------------------------------------------------------------ encoding

def _labels(manifest: DatasetManifest, table: RawTable) -> tuple[np.ndarray, np.ndarray]:
    rule = manifest.label_rule
    values = table.columns[rule["column"]]
    out = np.zeros(table.n_rows, dtype=np.float64)
    ok = np.ones(table.n_rows, dtype=bool)
    for i, v in enumerate(values):
        try:
            x = float(v)
        except (TypeError, ValueError):
            ok[i] = False
            continue
        if rule["type"] == "threshold":
            out[i] = 1.0 if x > float(rule["threshold"]) else 0.0
        else:
            if x not in (0.0, 1.0):
                ok[i] = False
            out[i] = x
    return out, ok


def _raw_values(spec: FeatureSpec, table: RawTable) -> np.ndarray:
    values = table.columns[spec.source]
    if spec.first_of:
        values = np.array([str(v).split(spec.first_of)[0] for v in values], dtype=object)
    return values


def _sort_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def fit_vocab(values: np.ndarray) -> dict:
    uniq = sorted({str(v) for v in values if str(v) != ""}, key=_sort_key)
    return {v: i + 1 for i, v in enumerate(uniq)}


def encode_sparse(values: np.ndarray, vocab: dict) -> np.ndarray:
    return np.fromiter((vocab.get(str(v), 0) for v in values), dtype=np.int64, count=len(values))


def _to_float(values: np.ndarray) -> np.ndarray:
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            out[i] = np.nan
    return out


def normalize_dense(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Min-max scale with training statistics; clipped to [0, 1], NaN -> 0."""
    span = hi - lo
    z = (x - lo) / span if span > 0 else np.zeros_like(x)
    return np.nan_to_num(np.clip(z, 0.0, 1.0), nan=0.0)


def bucketize(x: np.ndarray, boundaries) -> np.ndarray:
    idx = np.searchsorted(np.asarray(boundaries, dtype=float), x, side="right") + 1
    idx[np.isnan(x)] = 0
    return idx.astype(np.int64)


def ingest(manifest: DatasetManifest, raw_path, seed: int = 42) -> ProcessedDataset:
    """Read, label, map scenarios, split, fit encoders on train and encode everything."""
    table = read_raw(manifest, raw_path)
    declared = {f.source for f in manifest.features} | {manifest.label_rule["column"]}
    missing = sorted(c for c in declared if c not in table.columns)
    if missing and table.n_rows == 0 and not table.columns:
        missing = []
    if missing:
        raise MissingColumnError(f"declared columns missing from raw data: {missing}")
    report = {"raw_rows": table.n_rows, "skipped_unparseable": table.skipped, "notes": list(table.notes)}

    scen_spec = manifest.scenario_spec
    scen_raw = _raw_values(scen_spec, table) if table.n_rows else np.array([], dtype=object)
    scen = np.array([manifest.scenario_map.get(str(v), -1) for v in scen_raw], dtype=np.int64)
    label, label_ok = _labels(manifest, table) if table.n_rows else (np.zeros(0), np.zeros(0, bool))
    keep = (scen >= 0) & label_ok
    report["dropped_unmapped_scenario"] = int((scen < 0).sum())
    report["skipped_bad_label"] = int((~label_ok & (scen >= 0)).sum())
    if report["skipped_unparseable"] or report["skipped_bad_label"]:
        log.warning("%s: skipped %d unparseable rows and %d bad labels", manifest.name,
                    report["skipped_unparseable"], report["skipped_bad_label"])
    rows = np.flatnonzero(keep)
    n = rows.size
    S = manifest.n_scenarios
    scen = scen[rows]
    label = label[rows]

    if n == 0:
        warnings.warn(f"{manifest.name}: no examples after ingestion")
        split = np.zeros(0, dtype=np.int8)
    elif manifest.split == "predefined_folds":
        if table.fold is None:
            raise ManifestError("predefined_folds split needs a 'fold' on every source")
        split = table.fold[rows]
    else:
        split = split_assignment(scen, S, seed)
    train = split == TRAIN

    sparse_specs, dense_specs, sparse_cols, dense_cols = [], [], [], []
    encoders: dict = {"vocab_sizes": {}, "dense_range": {}, "buckets": {}}
    for f in manifest.features:
        if f.kind == "scenario":
            continue
        raw = _raw_values(f, table)[rows] if table.n_rows else np.array([], dtype=object)
        if f.kind == "sparse":
            vocab = fit_vocab(raw[train])
            size = len(vocab) + 1
            if f.vocab_size is not None:
                if size > f.vocab_size:
                    raise DataError(f"feature {f.name!r}: {size - 1} training values exceed "
                                    f"declared vocab_size {f.vocab_size}")
                size = f.vocab_size
            sparse_cols.append(encode_sparse(raw, vocab))
            sparse_specs.append(replace(f, vocab_size=size))
            encoders["vocab_sizes"][f.name] = size
        elif f.bucketized:
            x = _to_float(raw)
            if isinstance(f.buckets, int):
                tr = x[train & ~np.isnan(x)]
                qs = np.linspace(0, 1, f.buckets + 1)[1:-1]
                bounds = tuple(np.unique(np.quantile(tr, qs)).tolist()) if tr.size else ()
            else:
                bounds = f.buckets
            sparse_cols.append(bucketize(x, bounds))
            size = len(bounds) + 2
            sparse_specs.append(replace(f, kind="sparse", vocab_size=size, buckets=tuple(bounds)))
            encoders["vocab_sizes"][f.name] = size
            encoders["buckets"][f.name] = list(bounds)
        else:
            x = _to_float(raw)
            tr = x[train & ~np.isnan(x)]
            lo, hi = (float(tr.min()), float(tr.max())) if tr.size else (0.0, 0.0)
            dense_cols.append(normalize_dense(x, lo, hi))
            dense_specs.append(f)
            encoders["dense_range"][f.name] = {"min": lo, "max": hi}

    sparse = np.stack(sparse_cols, axis=1) if sparse_cols else np.zeros((n, 0), np.int64)
    dense = np.stack(dense_cols, axis=1) if dense_cols else np.zeros((n, 0))
    fs = FeatureSpace(sparse_specs, dense_specs, replace(scen_spec, vocab_size=S),
                      manifest.id_features, manifest.user_feature, manifest.item_feature)

    def key_codes(name):
        if name is None:
            return None
        spec = next((f for f in manifest.features if f.name == name), None)
        if spec is None and name not in table.columns:
            return None
        raw = (_raw_values(spec, table) if spec else table.columns[name])[rows]
        _, codes = np.unique(raw.astype(str), return_inverse=True)
        return codes.astype(np.int64)

    report["examples"] = int(n)
    meta = {"manifest": manifest.to_dict(), "encoders": encoders, "ingest_report": report,
            "seed": seed}
    return ProcessedDataset(manifest.name, fs, sparse, dense, scen, label, rows.astype(np.int64),
                            split, key_codes(manifest.user_feature), key_codes(manifest.item_feature), meta)
