"""Synthetic multi-scenario click logs with a known scenario-dependent signal.

Each example's click logit is

    bias[s] + shared * (a[user] + c[item]) + specific * sign[s] * (e[user] + f[item])
            + context[ctx] + dense_weight * (x - 0.5)

where ``sign[s]`` alternates +1/-1 across scenarios. A model that ignores the
scenario id only sees the specific term averaged over scenarios, so it cannot
recover it. ``bias[s]`` is solved per scenario so that the expected click rate
equals the configured base CTR.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .dataset import ProcessedDataset, split_assignment
from .features import FeatureSpace, FeatureSpec


@dataclass
class SyntheticSpec:
    base_ctr: tuple | None = None    # per scenario; evenly spaced in [0.3, 0.5] when None
    weights: tuple | None = None      # relative scenario sizes; equal when None
    n_users: int = 500
    n_items: int = 300
    n_context: int = 8
    shared_scale: float = 0.8
    specific_scale: float = 1.0
    dense_weight: float = 0.5

    def __post_init__(self):
        if self.base_ctr is not None and any(not 0.0 < p < 1.0 for p in self.base_ctr):
            raise ValueError("base CTRs must lie in (0, 1)")


def _calibrate(z: np.ndarray, target: float) -> float:
    return brentq(lambda b: float(expit(b + z).mean()) - target, -30.0, 30.0, xtol=1e-12)


def gen_synthetic(S: int, n_rows: int, spec: SyntheticSpec | None = None, seed: int = 0,
                  split_seed: int | None = None) -> ProcessedDataset:
    if S < 2:
        raise ValueError("need at least two scenarios")
    if n_rows < 1:
        raise ValueError("n_rows must be positive")
    spec = spec or SyntheticSpec()
    base = np.linspace(0.3, 0.5, S).round(4) if spec.base_ctr is None else np.asarray(spec.base_ctr, dtype=float)
    if base.size != S:
        raise ValueError(f"base_ctr has {base.size} entries for {S} scenarios")
    rng = np.random.default_rng([seed, 7919])
    w = np.ones(S) if spec.weights is None else np.asarray(spec.weights, dtype=float)
    if w.size != S or np.any(w <= 0):
        raise ValueError(f"weights must be {S} positive numbers")
    scenario = rng.choice(S, size=n_rows, p=w / w.sum())
    user = rng.integers(0, spec.n_users, n_rows)
    item = rng.integers(0, spec.n_items, n_rows)
    ctx = rng.integers(0, spec.n_context, n_rows)
    x = rng.random(n_rows)

    a, e = rng.normal(size=(2, spec.n_users))
    c, f = rng.normal(size=(2, spec.n_items))
    ctx_eff = rng.normal(scale=0.3, size=spec.n_context)
    sign = np.where(np.arange(S) % 2 == 0, 1.0, -1.0)
    z = (spec.shared_scale * (a[user] + c[item])
         + spec.specific_scale * sign[scenario] * (e[user] + f[item])
         + ctx_eff[ctx] + spec.dense_weight * (x - 0.5))
    bias = np.array([_calibrate(z[scenario == s], base[s]) if np.any(scenario == s) else 0.0
                     for s in range(S)])
    p = expit(bias[scenario] + z)
    label = (rng.random(n_rows) < p).astype(np.float64)

    fs = FeatureSpace(
        sparse=[FeatureSpec("user_id", "sparse", spec.n_users + 1),
                FeatureSpec("item_id", "sparse", spec.n_items + 1),
                FeatureSpec("context", "sparse", spec.n_context + 1)],
        dense=[FeatureSpec("x", "dense")],
        scenario=FeatureSpec("scenario", "scenario", S),
        id_features=("user_id", "item_id"), user_feature="user_id", item_feature="item_id")
    sparse = np.stack([user + 1, item + 1, ctx + 1], axis=1).astype(np.int64)
    split = split_assignment(scenario, S, seed if split_seed is None else split_seed)
    meta = {"generator": {"S": S, "n_rows": n_rows, "seed": seed, "base_ctr": base.tolist(),
                          "weights": w.tolist(), "bias": bias.tolist(),
                          "spec": {k: v for k, v in spec.__dict__.items() if k not in ("base_ctr", "weights")}}}
    return ProcessedDataset(f"synthetic-S{S}", fs, sparse, x[:, None], scenario.astype(np.int64),
                            label, np.arange(n_rows, dtype=np.int64), split, user, item, meta)


def filter_top_scenarios(ds: ProcessedDataset, k: int) -> ProcessedDataset:
    """Keep the k scenarios with most interactions, renumbered 0..k-1 by size (ties by id)."""
    counts = np.bincount(ds.scenario, minlength=ds.n_scenarios)
    if k > ds.n_scenarios:
        raise ValueError(f"requested {k} scenarios but dataset has {ds.n_scenarios}")
    if k < 2:
        raise ValueError("need at least two scenarios")
    ranked = sorted(range(ds.n_scenarios), key=lambda s: (-counts[s], s))[:k]
    remap = np.full(ds.n_scenarios, -1)
    remap[ranked] = np.arange(k)
    rows = np.flatnonzero(remap[ds.scenario] >= 0)
    out = ds.subset(rows, f"{ds.name}:top{k}")
    out.scenario = remap[out.scenario].astype(np.int64)
    out.feature_space = ds.feature_space.with_scenarios(k)
    out.meta = {**ds.meta, "top_k": k, "kept_scenarios": [int(s) for s in ranked]}
    return out
