"""Parameter containers shared by the encoder and the heads."""

from __future__ import annotations

import copy
import hashlib
from contextlib import contextmanager
from typing import Iterator

import numpy as np

from .autodiff import Tensor, ops, parameter


class Module:
    """Owns named leaf tensors; subclasses register them with ``_param``."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def _param(self, name: str, data: np.ndarray) -> Tensor:
        t = parameter(data, name=name)
        self._params[name] = t
        return t

    def params(self) -> dict[str, Tensor]:
        return dict(self._params)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, t in self._params.items():
            arr = np.asarray(arrays[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"{k}: stored shape {arr.shape} != {t.shape}")
            t.data = arr.copy()

    def copy(self) -> "Module":
        return copy.deepcopy(self)

    def digest(self) -> str:
        """sha256 over parameter names and raw bytes."""
        h = hashlib.sha256()
        for k in sorted(self._params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self._params[k].data).tobytes())
        return h.hexdigest()

    @contextmanager
    def frozen(self) -> Iterator["Module"]:
        """Treat every parameter as a constant for the duration."""
        saved = {k: t.requires_grad for k, t in self._params.items()}
        for t in self._params.values():
            t.requires_grad = False
        try:
            yield self
        finally:
            for k, t in self._params.items():
                t.requires_grad = saved[k]


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    """Affine map registered on a parent module under ``prefix``."""

    def __init__(self, owner: Module, prefix: str, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.n_in, self.n_out = n_in, n_out
        self.W = owner._param(f"{prefix}.W", uniform_init(rng, (n_in, n_out), bound))
        self.b = owner._param(f"{prefix}.b", uniform_init(rng, (n_out,), bound))
        self.prefix = prefix

    def __call__(self, x: Tensor, weight: Tensor | None = None) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"{self.prefix}: expected width {self.n_in}, got {x.shape[-1]}")
        return ops.add(ops.matmul(x, self.W if weight is None else weight), self.b)
