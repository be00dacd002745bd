from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParameterStore


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParameterStore, state: AdamState, grads: dict[str, np.ndarray]) -> None:
    """One bias-corrected Adam update of every trainable parameter, in place.

    ``grads`` maps each trainable path to its gradient; a missing gradient
    (parameter unused in this step) counts as zero.
    """
    trainable = [p for p, _ in params.trainable_items()]
    extra = set(grads) - set(trainable)
    if extra:
        raise KeyError(f"gradients for unknown or frozen parameters: {sorted(extra)}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for path in trainable:
        theta = params[path]
        g = grads.get(path)
        if g is None:
            g = np.zeros_like(theta.data)
        elif g.shape != theta.data.shape:
            raise ValueError(f"gradient for {path!r} has shape {g.shape}, expected {theta.data.shape}")
        m = state.m.get(path)
        if m is None:
            m = np.zeros_like(theta.data)
            state.v[path] = np.zeros_like(theta.data)
        v = state.v[path]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[path], state.v[path] = m, v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        theta.data = (theta.data - update).astype(theta.data.dtype)


def collect_grads(params: ParameterStore) -> dict[str, np.ndarray]:
    return {p: t.grad for p, t in params.trainable_items() if t.grad is not None}
