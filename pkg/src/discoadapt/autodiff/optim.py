"""Adam and plain SGD over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import NumericError, Tensor


def _check_finite(name: str, arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite {what} for parameter {name!r}; step aborted")


@dataclass
class OptimState:
    lr: float
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class SGD:
    def __init__(self, lr: float):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.state = OptimState(lr=lr)

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        lr = self.state.lr
        for name, g in grads.items():
            p = params[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
            _check_finite(name, g, "gradient")
        updated = {name: params[name].data - lr * g for name, g in grads.items()}
        for name, new in updated.items():
            _check_finite(name, new, "value after update")
        for name, new in updated.items():
            params[name].data = new
        self.state.step += 1


class Adam:
    """Bias-corrected Adam (Kingma & Ba defaults)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.state = OptimState(lr=lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        st = self.state
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            p = params[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
            _check_finite(name, g, "gradient")
        t = st.step + 1
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        new_m, new_v, new_p = {}, {}, {}
        for name, g in grads.items():
            m = st.m.get(name)
            v = st.v.get(name)
            m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
            v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
            new_m[name], new_v[name] = m, v
            new_p[name] = params[name].data - st.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            _check_finite(name, new_p[name], "value after update")
        for name in grads:
            params[name].data = new_p[name]
        st.m.update(new_m)
        st.v.update(new_v)
        st.step = t

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/step": np.array([self.state.step], dtype=np.float64)}
        for name, m in self.state.m.items():
            out[f"{prefix}/m/{name}"] = m
            out[f"{prefix}/v/{name}"] = self.state.v[name]
        return out

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray], prefix: str) -> None:
        self.state.step = int(arrays[f"{prefix}/step"][0])
        self.state.m, self.state.v = {}, {}
        for key, arr in arrays.items():
            if key.startswith(f"{prefix}/m/"):
                self.state.m[key[len(prefix) + 3:]] = np.array(arr)
            elif key.startswith(f"{prefix}/v/"):
                self.state.v[key[len(prefix) + 3:]] = np.array(arr)
