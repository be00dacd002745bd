"""Building blocks shared by several architectures.

All functions operate on autodiff tensors except the ADL centroid helpers,
which work on plain arrays because routing and centroid updates carry no
gradient.
"""
from __future__ import annotations

import warnings

import numpy as np

from ..core import ad
from ..core.autodiff import Tensor


class Routing:
    """Per-example scenario routing inside a mixed batch.

    ``gather(x, s)`` selects the rows of scenario ``s``; ``scatter`` takes one
    tensor per non-empty group (in ``groups`` order) and puts rows back in
    batch order.
    """

    def __init__(self, scenario, n_scenarios: int):
        scenario = np.asarray(scenario, dtype=np.int64)
        if scenario.size and (scenario.min() < 0 or scenario.max() >= n_scenarios):
            bad = scenario[(scenario < 0) | (scenario >= n_scenarios)][0]
            raise ValueError(f"scenario id {int(bad)} out of range for {n_scenarios} scenarios")
        self.scenario = scenario
        self.n = scenario.size
        self.groups = [(s, idx) for s in range(n_scenarios)
                       if (idx := np.flatnonzero(scenario == s)).size]
        order = np.concatenate([idx for _, idx in self.groups]) if self.groups else np.zeros(0, np.int64)
        self.inverse = np.empty_like(order)
        self.inverse[order] = np.arange(order.size)

    def gather(self, x: Tensor, idx: np.ndarray) -> Tensor:
        return x if idx.size == self.n else ad.take_rows(x, idx)

    def scatter(self, parts: list[Tensor]) -> Tensor:
        if len(parts) != len(self.groups):
            raise ValueError(f"expected {len(self.groups)} routed parts, got {len(parts)}")
        if len(parts) == 1:
            return parts[0]
        return ad.take_rows(ad.concat(parts, axis=0), self.inverse)


def moe_mix(experts, gate_logits: Tensor) -> Tensor:
    """Softmax-gated sum of expert outputs; ``experts`` is a list of n x h tensors."""
    k = len(experts)
    if gate_logits.shape[-1] != k:
        raise ValueError(f"gate has {gate_logits.shape[-1]} logits for {k} experts")
    w = ad.softmax(gate_logits)
    n = gate_logits.shape[0]
    stacked = ad.stack(experts, axis=1)                       # n x k x h
    mixed = ad.matmul(ad.reshape(w, (n, 1, k)), stacked)      # n x 1 x h
    return ad.reshape(mixed, (n, stacked.shape[-1]))


def star_combine(W_shared: Tensor, b_shared: Tensor, W_scenario: Tensor, b_scenario: Tensor):
    if W_shared.shape != W_scenario.shape or b_shared.shape != b_scenario.shape:
        raise ValueError(f"star_combine shape mismatch: W {W_shared.shape} vs {W_scenario.shape}, "
                         f"b {b_shared.shape} vs {b_scenario.shape}")
    return ad.mul(W_shared, W_scenario), ad.add(b_shared, b_scenario)


def gate_nu(x: Tensor, W1: Tensor, b1: Tensor, W2: Tensor, b2: Tensor) -> Tensor:
    """Two-layer gate with outputs in (0, 2)."""
    h = ad.dense_layer(x, W1, b1, "relu")
    return ad.mul(ad.dense_layer(h, W2, b2, "sigmoid"), 2.0)


def meta_generate(z: Tensor, V: Tensor, c: Tensor, U: Tensor, e: Tensor, target_shape: tuple):
    """Weights generated from a scenario representation z (r x d).

    Returns W of shape (r, *target_shape) and b of shape (r, len(e)).
    """
    p = int(np.prod(target_shape))
    if V.shape[-1] != p or c.shape[-1] != p:
        raise ValueError(f"meta_generate: generator emits {V.shape[-1]} values, "
                         f"target shape {tuple(target_shape)} needs {p}")
    r = z.shape[0]
    W = ad.reshape(ad.add(ad.matmul(z, V), c), (r, *target_shape))
    b = ad.add(ad.matmul(z, U), e)
    return W, b


def adasparse_factors(z: Tensor, layer_input: Tensor, Wu: Tensor, bu: Tensor, Wv: Tensor, bv: Tensor,
                      alpha: float, beta: float) -> Tensor:
    """Fusion-strategy pruning factors: scaling term times a clamped binarization term."""
    if alpha <= 0 or beta < 1:
        raise ValueError("adasparse needs alpha > 0 and beta >= 1")
    inp = ad.concat([z, layer_input], axis=-1)
    scale = ad.mul(ad.sigmoid(ad.dense_layer(inp, Wu, bu)), 2.0 * alpha)
    return ad.mul(scale, binarize(ad.dense_layer(inp, Wv, bv), beta))


def binarize(v: Tensor, beta: float) -> Tensor:
    return ad.clamp(ad.add(ad.mul(ad.sub(ad.sigmoid(v), 0.5), beta), 0.5), 0.0, 1.0)


def adl_route(reprs: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Cluster id per row by cosine similarity; ties go to the lowest index."""
    norms = np.linalg.norm(reprs, axis=1)
    zero = norms == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-norm representations routed to cluster 0")
    unit = reprs / np.where(zero, 1.0, norms)[:, None]
    sims = unit @ centroids.T
    ids = np.argmax(sims, axis=1)
    ids[zero] = 0
    return ids


def adl_update(centroids: np.ndarray, reprs: np.ndarray, ids: np.ndarray, momentum: float) -> np.ndarray:
    """EMA of each centroid toward the mean of its assigned rows, then back to unit norm."""
    out = centroids.copy()
    for k in np.unique(ids):
        target = reprs[ids == k].mean(axis=0)
        c = (1.0 - momentum) * out[k] + momentum * target
        norm = np.linalg.norm(c)
        if norm > 0:
            out[k] = c / norm
    return out


def hamur_hyper(z: Tensor, H1: Tensor, b1: Tensor, H2: Tensor, b2: Tensor, m: int):
    """Hyper-network: one domain embedding (1 x d) to the two m x m adapter cores."""
    flat = ad.dense_layer(ad.dense_layer(z, H1, b1, "relu"), H2, b2)
    if flat.shape[-1] != 2 * m * m:
        raise ValueError(f"hyper-network emits {flat.shape[-1]} values, adapter needs {2 * m * m}")
    cores = ad.reshape(flat, (2, m, m))
    down = ad.reshape(ad.take_rows(cores, np.array([0])), (m, m))
    up = ad.reshape(ad.take_rows(cores, np.array([1])), (m, m))
    return down, up


def hamur_adapter(h: Tensor, z: Tensor, hyper: dict, m: int) -> Tensor:
    """Domain-conditioned residual adapter followed by layer normalization.

    ``hyper`` holds H1, b1, H2, b2 (the hyper-network), U (w x m), V (m x w)
    and the layer-norm gamma/beta.
    """
    down, up = hamur_hyper(z, hyper["H1"], hyper["b1"], hyper["H2"], hyper["b2"], m)
    mid = ad.relu(ad.matmul(ad.matmul(h, hyper["U"]), down))
    delta = ad.matmul(ad.matmul(mid, up), hyper["V"])
    return ad.layer_norm(ad.add(h, delta), hyper["gamma"], hyper["beta"])
