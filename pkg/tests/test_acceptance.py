"""Acceptance checks, one test per numbered criterion.

The terminal summary prints a PASS/FAIL line for each. Run alone with
``python3 tests/test_acceptance.py`` or ``pytest tests/test_acceptance.py``.

Criteria that need the MovieLens-1M raw files look in $SWR_DATA_DIR/movielens,
$SWR_DATA_DIR/ml-1m and data/ under the repository root. Without them those
criteria fail; they are not skipped.
"""
import json
import math
import time

import numpy as np
import pytest
from conftest import TOY_OPTIONS, movielens_raw, smooth_point, toy_model
from scipy import integrate
from test_core import PRIMITIVES

from msrbench.bench import SweepPlan, run_sweep
from msrbench.cli import main
from msrbench.core import Tensor, ad, grad_check, kink_margin, precision
from msrbench.data import (ProcessedDataset, builtin_manifest, declared_feature_space, gen_synthetic,
                           ingest, scenario_stats, split_assignment)
from msrbench.evaluation import auc, profile, welch_ttest
from msrbench.models import (KINDS, adasparse_factors, build_model, expected_param_count, gate_nu,
                             hamur_adapter, make_config, meta_generate, moe_mix, star_combine)
from msrbench.training import TrainConfig, derive_seed, train

criterion = pytest.mark.criterion


def need_movielens():
    raw = movielens_raw()
    if raw is None:
        pytest.fail("MovieLens-1M raw files not found (ratings.dat/users.dat/movies.dat); "
                    "set SWR_DATA_DIR or place them in data/movielens")
    return raw


def check_split(scenario, split, S):
    """Disjoint and exhaustive by construction of a label array; checks the 8:1:1 counts."""
    assert split.shape == scenario.shape and set(np.unique(split)) <= {0, 1, 2}
    worst = 0.0
    for s in range(S):
        c = np.bincount(split[scenario == s], minlength=3)
        worst = max(worst, float(np.abs(c - np.array([.8, .1, .1]) * c.sum()).max()))
    return worst


# ---------------------------------------------------------------------------- 1

@criterion(1, "MovieLens ingestion reproduces per-scenario interaction/user/item counts")
def test_c01_movielens_ingestion(tmp_path, record_property):
    raw = need_movielens()
    t0 = time.perf_counter()
    assert main(["--quiet", "prepare", "--manifest", "movielens", "--raw", str(raw), "--out", str(tmp_path)]) == 0
    elapsed = time.perf_counter() - t0
    stats = json.loads((tmp_path / "scenario_stats.json").read_text())
    assert stats["interactions"] == [210747, 395556, 393906]
    assert stats["users"] == [1325, 2096, 2619]
    assert stats["items"] == [3429, 3508, 3595]
    assert elapsed < 60, f"prepare took {elapsed:.1f}s"
    record_property("detail", f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------- 2

@criterion(2, "COV from per-scenario counts (sample std)")
def test_c02_cov(record_property):
    cases = {"MovieLens": ([210747, 395556, 393906], 0.3186),
             "Amazon": ([198502, 278677, 346355], 0.2696),
             "KuaiRand": ([2407352, 7760237, 895385, 402366, 183403], 1.3552)}
    got = {}
    for name, (counts, want) in cases.items():
        scen = np.repeat(np.arange(len(counts)), counts)
        st = scenario_stats(scenario=scen, n_scenarios=len(counts))
        assert st.interactions == counts
        got[name] = st.cov
        assert abs(st.cov - want) <= 5e-4, f"{name}: {st.cov:.5f} vs {want}"
    record_property("detail", ", ".join(f"{k} {v:.4f}" for k, v in got.items()))


# ---------------------------------------------------------------------------- 3

@criterion(3, "MovieLens SharedBottom/MMoE/STAR test AUC in [0.790, 0.825], Logloss <= 0.545")
def test_c03_movielens_training(record_property):
    raw = need_movielens()
    ds = ingest(builtin_manifest("movielens"), raw, seed=42)
    splits = ds.parts()
    results = {}
    for kind in ("shared_bottom", "mmoe", "star"):
        for seed in (42, 43, 44):
            model = build_model(make_config(kind), ds.feature_space, ds.n_scenarios, derive_seed(seed, "init"))
            rec = train(model, splits, TrainConfig(seed=seed))
            results.setdefault(kind, []).append((rec.test_report["overall"]["auc"],
                                                 rec.test_report["overall"]["logloss"]))
    for kind, runs in results.items():
        a, ll = np.mean([r[0] for r in runs]), np.mean([r[1] for r in runs])
        assert 0.790 <= a <= 0.825 and ll <= 0.545, f"{kind}: AUC {a:.4f} Logloss {ll:.4f}"
    record_property("detail", ", ".join(f"{k} {np.mean([r[0] for r in v]):.4f}" for k, v in results.items()))


# ---------------------------------------------------------------------------- 4

def _pairwise_auc(y, s):
    pos, neg = s[y == 1], s[y == 0]
    d = pos[:, None] - neg[None, :]
    return ((d > 0).sum() + 0.5 * (d == 0).sum()) / (pos.size * neg.size)


@criterion(4, "rank AUC equals the O(n^2) pairwise oracle")
def test_c04_auc_oracle(record_property):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        y = rng.integers(0, 2, 2000)
        levels = rng.integers(2, 50) if i % 2 == 0 else 10**6   # heavy ties in half the cases
        s = rng.integers(0, levels, 2000) / levels
        worst = max(worst, abs(auc(y, s) - _pairwise_auc(y, s)))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-9 and elapsed < 10
    record_property("detail", f"max |diff| {worst:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------- 5

def _layer_cases(rng):
    T = lambda *s: Tensor(rng.normal(size=s), requires_grad=True)  # noqa: E731
    z, x = T(1, 4), T(5, 6)
    experts = [T(5, 3) for _ in range(3)]
    gate = T(5, 3)
    Ws, bs, Wp, bp = T(6, 3), T(3), T(6, 3), T(3)
    g1, gb1, g2, gb2 = T(6, 4), T(4), T(4, 6), T(6)
    V, c, U, e = T(4, 18), T(18), T(4, 3), T(3)
    u, ub, v, vb = T(10, 6), T(6), T(10, 6), T(6)
    hyper = {"H1": T(4, 5), "b1": T(5), "H2": T(5, 8), "b2": T(8), "U": T(6, 2), "V": T(2, 6),
             "gamma": T(6), "beta": T(6)}
    zx = T(5, 4)

    def meta():
        W, b = meta_generate(z, V, c, U, e, (6, 3))
        return ad.add(ad.matmul(x, ad.reshape(W, (6, 3))), b)
    return {
        "moe_mix": (lambda: moe_mix(experts, gate), experts + [gate]),
        "star_combine": (lambda: ad.dense_layer(x, *star_combine(Ws, bs, Wp, bp)), [x, Ws, bs, Wp, bp]),
        "gate_nu": (lambda: gate_nu(x, g1, gb1, g2, gb2), [x, g1, gb1, g2, gb2]),
        "meta_generate": (meta, [z, x, V, c, U, e]),
        "adasparse_factors": (lambda: adasparse_factors(zx, x, u, ub, v, vb, 1.0, 2.0), [zx, x, u, ub, v, vb]),
        "hamur_adapter": (lambda: hamur_adapter(x, z, hyper, 2), [x, z, *hyper.values()]),
    }


@criterion(5, "finite-difference gradients: primitives, layers and all 13 model kinds")
def test_c05_gradient_suite(toy_ds, record_property):
    t0 = time.perf_counter()
    errors = {}
    with precision("f64"):
        rng = np.random.default_rng(0)
        for name, (fn, shapes) in PRIMITIVES.items():
            ins = [Tensor(rng.normal(size=s), requires_grad=True) for s in shapes]
            w = rng.normal(size=fn(*ins).shape)
            errors[name] = grad_check(lambda: ad.sum(ad.mul(fn(*ins), w)), ins, h=1e-6).max_rel_error
        for name in _layer_cases(rng):
            # redraw until no relu/clamp input is within 10*h of its kink
            for seed in range(100):
                fn, ins = _layer_cases(np.random.default_rng(seed))[name]
                if kink_margin(fn()) > 1e-5:
                    break
            w = rng.normal(size=fn().shape)
            errors[name] = grad_check(lambda: ad.sum(ad.mul(fn(), w)), ins, h=1e-6).max_rel_error
        batch = toy_ds.as_batch().take(np.arange(24))
        for kind in KINDS:
            m = toy_model(kind, toy_ds.feature_space, S=3).eval()
            m.stop_gate_gradient = False   # a stop-gradient is invisible to finite differences
            smooth_point(m, lambda: m.loss(batch), h=1e-5)
            errors[kind] = grad_check(lambda: m.loss(batch), dict(m.params.trainable_items()), h=1e-5).max_rel_error
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-4, f"{worst}: {errors[worst]:.2e}"
    assert elapsed < 120, f"{elapsed:.0f}s"
    record_property("detail", f"{len(errors)} checks, worst {worst} {errors[worst]:.1e}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------- 6

@criterion(6, "initialization identities (gate, STAR, MoE k=1, HAMUR adapter, EPNet stop-gradient)")
def test_c06_identities(toy_ds):
    rng = np.random.default_rng(1)
    with precision("f64"):
        x = Tensor(rng.normal(size=(7, 5)))
        # gate_nu with a zero output layer scales by exactly 1
        f = gate_nu(x, Tensor(rng.normal(size=(5, 4))), Tensor(np.zeros(4)), Tensor(np.zeros((4, 5))),
                    Tensor(np.zeros(5)))
        assert np.all(f.data == 1.0)
        # moe_mix with one expert returns it unchanged
        ex = Tensor(rng.normal(size=(7, 3)))
        assert np.array_equal(moe_mix([ex], Tensor(rng.normal(size=(7, 1)))).data, ex.data)
        # hamur adapter with a zeroed hyper-network is the layer norm of its input
        h = Tensor(rng.normal(size=(7, 6)))
        hyper = {"H1": Tensor(rng.normal(size=(4, 5))), "b1": Tensor(np.zeros(5)),
                 "H2": Tensor(np.zeros((5, 8))), "b2": Tensor(np.zeros(8)),
                 "U": Tensor(rng.normal(size=(6, 2))), "V": Tensor(rng.normal(size=(2, 6))),
                 "gamma": Tensor(np.ones(6)), "beta": Tensor(np.zeros(6))}
        out = hamur_adapter(h, Tensor(rng.normal(size=(1, 4))), hyper, 2)
        assert np.array_equal(out.data, ad.layer_norm(h, hyper["gamma"], hyper["beta"]).data)

    # STAR at init: shared times ones plus zeros is the shared tower, bit for bit
    star = toy_model("star", toy_ds.feature_space)
    b = toy_ds.as_batch().take(np.arange(40))
    xin = star.inputs(b)
    for s in range(3):
        assert np.array_equal(star.run_tower(xin, star.combined(s)).data, star.run_tower(xin, star.shared).data)

    # HAMUR model with zeroed hyper output reproduces the backbone with layer norms
    ham = toy_model("hamur", toy_ds.feature_space)
    ham.zero_hyper()
    hx = ham.inputs(b)
    for W, bb in ham.net[:-1]:
        width = W.shape[1]
        hx = ad.layer_norm(ad.dense_layer(hx, W, bb, "relu"), Tensor(np.ones(width)), Tensor(np.zeros(width)))
    ref = ad.reshape(ad.dense_layer(hx, *ham.net[-1]), (40,))
    assert np.array_equal(ham.forward(b).data, ref.data)

    # EPNet: nothing flows back into the field embeddings through the gate branch
    ep = toy_model("epnet", toy_ds.feature_space)
    with precision("f64"):
        fields = Tensor(rng.normal(size=(40, ep.n_fields * ep.d)), requires_grad=True)
        z = Tensor(rng.normal(size=(40, ep.d)), requires_grad=True)
        ad.sum(gate_nu(ep.gate_input(z, fields), *ep.gate)).backward()
    assert fields.grad is None or not np.any(fields.grad)
    assert np.any(z.grad)


# ---------------------------------------------------------------------------- 7

@criterion(7, "two identical runs give bit-identical logs and checkpoints")
def test_c07_determinism(tmp_path):
    ds = gen_synthetic(3, 4000, seed=3)
    for kind in ("shared_bottom", "adl", "m2m", "epnet"):
        logs, ckpts = [], []
        for rep in range(2):
            d = tmp_path / f"{kind}{rep}"
            m = toy_model(kind, ds.feature_space, seed=derive_seed(7, "init"))
            train(m, ds.parts(), TrainConfig(batch_size=256, max_epochs=3, seed=7), d)
            lines = [json.loads(x) for x in (d / "log.jsonl").read_text().splitlines()]
            logs.append([{k: v for k, v in e.items() if k != "wall_time"} for e in lines])
            ckpts.append((d / "model.best.swr").read_bytes())
        assert logs[0] == logs[1], kind
        assert ckpts[0] == ckpts[1], kind


# ---------------------------------------------------------------------------- 8

@criterion(8, "stratified 8:1:1 split within +-1 per scenario (synthetic and MovieLens)")
def test_c08_split_contract(record_property):
    for S, n, seed in ((3, 100_000, 0), (7, 33_333, 1), (5, 1_234, 2)):
        ds = gen_synthetic(S, n, seed=seed)
        assert check_split(ds.scenario, ds.split, S) <= 1
        again = split_assignment(ds.scenario, S, seed)
        assert np.array_equal(again, ds.split)
    raw = need_movielens()
    ml = ingest(builtin_manifest("movielens"), raw)
    worst = check_split(ml.scenario, ml.split, ml.n_scenarios)
    assert worst <= 1 and len(ml) == 1_000_209
    record_property("detail", f"MovieLens worst cell deviation {worst:.2f}")


# ---------------------------------------------------------------------------- 9

C9_MODELS = {"shared_bottom": dict(bottom_dim=64), "mmoe": dict(expert_dim=64), "star": {}}


@criterion(9, "scenario-aware models beat the scenario-blind tower by >= 0.02 AUC on synthetic data")
def test_c09_scenario_awareness(record_property):
    t0 = time.perf_counter()
    cfg = dict(batch_size=512, max_epochs=5)
    gaps = {k: [] for k in C9_MODELS}
    for seed in range(5):
        ds = gen_synthetic(3, 100_000, seed=derive_seed(seed, "synthetic"))
        splits = ds.parts()
        scores = {}
        for kind, opts in {**C9_MODELS, "single_tower": {}}.items():
            m = build_model(make_config(kind, tower_dims=(64, 32), **opts), ds.feature_space, 3,
                            derive_seed(seed, "init"))
            scores[kind] = train(m, splits, TrainConfig(seed=seed, **cfg)).test_report["overall"]["auc"]
        for k in C9_MODELS:
            gaps[k].append(scores[k] - scores["single_tower"])
    elapsed = time.perf_counter() - t0
    med = {k: float(np.median(v)) for k, v in gaps.items()}
    assert all(v >= 0.02 for v in med.values()), med
    assert elapsed < 600, f"{elapsed:.0f}s"
    record_property("detail", ", ".join(f"{k} +{v:.3f}" for k, v in med.items()) + f", {elapsed:.0f}s")


# --------------------------------------------------------------------------- 10

def _reference_welch(a, b):
    """Welch's test with the Student-t tail integrated numerically."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    pdf = lambda x: math.exp(logc - (df + 1) / 2 * math.log1p(x * x / df))  # noqa: E731
    tail, _ = integrate.quad(pdf, abs(t), math.inf, epsabs=1e-13, epsrel=1e-12)
    return t, min(1.0, 2 * tail)


@criterion(10, "Welch t-test matches an independent reference; degenerate rules exact")
def test_c10_welch(record_property):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(50):
        a = rng.normal(rng.uniform(.7, .8), rng.uniform(.001, .02), rng.integers(2, 15))
        b = rng.normal(rng.uniform(.7, .8), rng.uniform(.001, .02), rng.integers(2, 15))
        t, p = welch_ttest(a, b)
        rt, rp = _reference_welch(a, b)
        assert t == pytest.approx(rt, rel=1e-9)
        worst = max(worst, abs(p - rp))
    assert worst <= 1e-6
    assert welch_ttest([.8, .8, .8], [.8, .8]) == (0.0, 1.0)
    assert welch_ttest([.81, .81], [.8, .8, .8])[1] == 0.0
    with pytest.raises(ValueError):
        welch_ttest([.8], [.8, .81])
    record_property("detail", f"max |dp| {worst:.1e}")


# --------------------------------------------------------------------------- 11

def _random_dataset(fs, S, n, seed=0):
    rng = np.random.default_rng(seed)
    sparse = np.stack([rng.integers(0, f.vocab_size, n) for f in fs.sparse], axis=1)
    scen = rng.integers(0, S, n)
    return ProcessedDataset("random", fs, sparse, rng.random((n, len(fs.dense))), scen,
                            rng.integers(0, 2, n).astype(float), np.arange(n), split_assignment(scen, S, seed))


@criterion(11, "profiler parameter counts equal closed forms; MovieLens SharedBottom in [50K, 2M]")
def test_c11_efficiency(record_property):
    fs = declared_feature_space(builtin_manifest("movielens"))
    ds = _random_dataset(fs, 3, 600)
    tr, _, te = ds.parts()
    counts = {}
    for kind in KINDS:
        m = build_model(make_config(kind), fs, 3)
        rep = profile(m, tr, te, TrainConfig(batch_size=128))
        assert rep.param_count == expected_param_count(m.config, fs, 3), kind
        assert rep.train_seconds_per_epoch > 0 and rep.inference_ms_per_batch > 0
        counts[kind] = rep.param_count
    assert 50_000 <= counts["shared_bottom"] <= 2_000_000
    record_property("detail", f"SharedBottom {counts['shared_bottom'] / 1e3:.2f}K")


# --------------------------------------------------------------------------- 12

@criterion(12, "sweep over k in {3,4,5} on 7-scenario synthetic data, all 13 kinds")
def test_c12_sweep(tmp_path, record_property):
    t0 = time.perf_counter()
    plan = SweepPlan(dataset={"synthetic": {"S": 7, "n_rows": 50_000, "seed": 0, "weights": [7, 6, 5, 4, 3, 2, 1]}},
                     ks=[3, 4, 5], train={"batch_size": 1024, "max_epochs": 3}, out=str(tmp_path))
    res = run_sweep(plan)
    elapsed = time.perf_counter() - t0
    assert res["failed"] == 0
    for k in (3, 4, 5):
        for kind in KINDS:
            rows = [r for r in res["rows"] if r["k"] == k and r["model"] == kind]
            assert [r["scenario"] for r in rows] == list(range(k))
            assert all(r["auc"] is not None and 0.5 < r["auc"] < 1 for r in rows), (k, kind)
    assert res["kept_scenarios"][5] == [0, 1, 2, 3, 4]
    assert (tmp_path / "sweep_tracked.csv").exists()
    assert elapsed < 1800
    record_property("detail", f"{len(res['rows'])} rows, {elapsed:.0f}s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
