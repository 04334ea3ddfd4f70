"""Central finite-difference checks of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numeric_gradient(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn / d param by central differences, perturbing ``param.data`` in place."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Worst elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps entries that are zero up to finite-difference noise from
    dominating; below it the check is effectively absolute. Any non-finite
    entry counts as an infinite error.
    """
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        return float("inf")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


Reference = Callable[[Tensor], Sequence[tuple[float, Callable[[], Tensor]]]]


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                    reference: Reference | None = None) -> float:
    """Largest relative error between tape and finite-difference gradients.

    ``reference`` handles ops that deliberately alter gradients (stopping or
    reversal): for each parameter it returns (coefficient, function) pairs,
    and the oracle is the coefficient-weighted sum of their finite
    differences instead of the finite difference of ``fn`` itself.
    """
    with Tape() as tape:
        loss = fn()
    analytic = tape.gradient(loss, params)
    worst = 0.0
    for p, a in zip(params, analytic):
        terms = [(1.0, fn)] if reference is None else reference(p)
        numeric = sum(c * numeric_gradient(f, p, h) for c, f in terms)
        worst = max(worst, relative_error(a, numeric))
    return worst
