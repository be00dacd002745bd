"""Central finite-difference gradient checking (run under float64)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, get_dtype, toposort


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: dict = field(default_factory=dict)
    n_checked: int = 0

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def assert_finite(root: Tensor) -> None:
    """Raise ``NonFiniteError`` naming the first graph node holding NaN/Inf."""
    for node in toposort(root):
        if not np.all(np.isfinite(node.data)):
            raise NonFiniteError(f"non-finite values in node {node.op!r} with shape {node.shape}")
    if not np.all(np.isfinite(root.data)):
        raise NonFiniteError(f"non-finite values in output node {root.op!r}")


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(f: Callable[[], Tensor], inputs: Sequence[Tensor] | dict, h: float = 1e-6,
               max_coords: int | None = None, seed: int = 0) -> GradCheckReport:
    """Compare analytic and central-difference gradients of scalar ``f()``.

    ``f`` is re-evaluated from scratch for every perturbation, so it must be
    pure. ``inputs`` are the leaf tensors to differentiate (a dict keeps their
    names in the report). With ``max_coords`` only a seeded random subset of
    each input's coordinates is perturbed. Relative errors use
    ``max(|analytic|, |numeric|, 1e-6)`` as denominator.
    """
    if get_dtype() != np.float64:
        raise RuntimeError("grad_check requires float64 precision")
    named = dict(inputs) if isinstance(inputs, dict) else {f"input{i}": t for i, t in enumerate(inputs)}
    for t in named.values():
        t.data = np.ascontiguousarray(t.data)
        t.grad = None
        t.requires_grad = True
    out = f()
    assert_finite(out)
    out.backward()
    analytic = {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for k, t in named.items()}
    rng = np.random.default_rng(seed)
    report = GradCheckReport(0.0)
    for name, t in named.items():
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(coords.size)
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + h
            fp = float(f().data)
            flat[c] = orig - h
            fm = float(f().data)
            flat[c] = orig
            numeric[j] = (fp - fm) / (2 * h)
        err = float(rel_error(analytic[name].reshape(-1)[coords], numeric).max()) if coords.size else 0.0
        report.per_input[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
        report.n_checked += coords.size
    for t in named.values():
        t.grad = None
    return report


def kink_margin(root: Tensor) -> float:
    """Smallest distance from a relu or clamp input to its breakpoint in the graph of ``root``.

    Central differences with step ``h`` are only meaningful when this is well above ``h``.
    Inputs sitting exactly on a breakpoint are ignored: with continuous parameters they come
    from structurally constant values (a dead row feeding a product), which no step can move.
    """
    margin = np.inf
    for node in toposort(root):
        if node.op == "relu":
            points = (0.0,)
        elif node.op.startswith("clamp["):
            points = tuple(float(v) for v in node.op[6:-1].split(","))
        else:
            continue
        x = node._parents[0].data if node._parents else None
        if x is None or x.size == 0:
            continue
        for c in points:
            d = np.abs(x - c)
            d = d[d > 0]
            if d.size:
                margin = min(margin, float(d.min()))
    return margin
