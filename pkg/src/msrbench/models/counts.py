"""Closed-form trainable parameter counts from (config, feature space, S).

Written independently of the builders so that the two can be checked
against each other.
"""
from __future__ import annotations

from ..data.features import FeatureSpace
from .config import ModelConfig


def _dense(i: int, o: int) -> int:
    return i * o + o


def _mlp(i: int, dims) -> int:
    total = 0
    for o in dims:
        total += _dense(i, o)
        i = o
    return total


def _tower(i: int, dims) -> int:
    return _mlp(i, dims) + _dense(dims[-1], 1)


def expected_param_count(config: ModelConfig, fs: FeatureSpace, S: int) -> int:
    d, dims, o = config.embed_dim, tuple(config.tower_dims), config.options
    F, m = len(fs.sparse), len(fs.dense)
    emb = sum(f.vocab_size for f in fs.sparse) * d
    if config.kind == "single_tower":
        return emb + _tower(F * d + m, dims)
    emb += S * d
    D = (F + 1) * d + m
    k = config.kind
    if k == "shared_bottom":
        h = o["bottom_dim"]
        return emb + _dense(D, h) + S * _tower(h, dims)
    if k == "mmoe":
        e, h = o["experts"], o["expert_dim"]
        return emb + e * _dense(D, h) + S * _dense(D, e) + S * _tower(h, dims)
    if k == "ple":
        ks, kp, h, L = o["shared_experts"], o["specific_experts"], o["expert_dim"], o["cgc_layers"]
        total, n_in = emb, D
        for lv in range(L):
            total += (ks + S * kp) * _dense(n_in, h) + S * _dense(n_in, ks + kp)
            if lv < L - 1:
                total += _dense(n_in, ks + S * kp)
            n_in = h
        return total + S * _tower(h, dims)
    if k == "star":
        return emb + (1 + S) * _tower(D, dims) + _tower(D, (o["aux_dim"],))
    if k == "sar_net":
        ks, kp, h = o["shared_experts"], o["specific_experts"], o["expert_dim"]
        return (emb + _dense(d, F) + (ks + S * kp) * _dense(D, h)
                + S * _dense(D, ks + kp) + _tower(h, dims))
    if k == "m2m":
        h, e = o["meta_dims"], o["experts"]
        T = F + (1 if m else 0)
        enc = 3 * d * d + 4 * d + _mlp(d, (o["ff_dim"], d))
        meta = d * h * h + h * h + d * h + h
        return (emb + (_dense(m, d) if m else 0) + o["enc_layers"] * enc + e * _dense(T * d, h)
                + meta + h + o["dec_layers"] * meta + _dense(h, 1))
    if k == "adasparse":
        total, n_in = emb + _tower(D, dims), D
        for w in dims:
            total += 2 * _dense(d + n_in, w)
            n_in = w
        return total
    if k == "adl":
        r, K = o["rep_dim"], o["clusters"]
        return emb + _dense(D, r) + (1 + K) * _tower(r, dims)
    if k == "epnet":
        g = o["gate_hidden"]
        return emb + _dense(d + F * d, g) + _dense(g, F * d) + _tower(D, dims)
    if k == "ppnet":
        g = o["gate_hidden"]
        n_ids = len(fs.id_features) or F
        gin = n_ids * d + D
        return (emb + _mlp(D, dims) + sum(_dense(gin, g) + _dense(g, w) for w in dims)
                + S * _dense(dims[-1], 1))
    if k == "hamur":
        hh, mm = o["hyper_hidden"], o["hyper_matrix"]
        per = [_dense(d, hh) + _dense(hh, 2 * mm * mm) + 2 * w * mm + 2 * w for w in dims]
        return emb + _tower(D, dims) + sum(per)
    if k == "m3oe":
        e, h = o["n_experts_m3oe"], o["expert_dim"]
        return (emb + 3 * e * _dense(D, h) + (2 + S) * _dense(D, e) + 2 * S + 2 + _tower(h, dims))
    raise ValueError(f"unknown model kind {k!r}")
