"""Relation classifier, spectrally normalized domain discriminator and the
reconstruction mapping that sit on top of pair representations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .nn import Linear, Module

SIGMA_FLOOR = 1e-12


def smoothed_target_distribution(y: int, eps: float, K: int) -> np.ndarray:
    """(1 - eps) * onehot(y) + eps / K."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"smoothing coefficient must lie in [0, 1), got {eps}")
    if not 0 <= y < K:
        raise ValueError(f"label {y} out of range for {K} classes")
    q = np.full(K, eps / K)
    q[y] += 1.0 - eps
    return q


def smoothed_targets(labels: np.ndarray, eps: float, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"label index out of range for {K} classes: {labels.min()}..{labels.max()}")
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"smoothing coefficient must lie in [0, 1), got {eps}")
    q = np.full((labels.size, K), eps / K)
    q[np.arange(labels.size), labels] += 1.0 - eps
    return q


def _l2normalize(x: np.ndarray) -> np.ndarray:
    return x / (np.linalg.norm(x) + 1e-12)


@dataclass
class SpectralState:
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def init(cls, shape: tuple[int, int], rng: np.random.Generator) -> "SpectralState":
        return cls(_l2normalize(rng.normal(size=shape[0])), _l2normalize(rng.normal(size=shape[1])))


def power_iterate(W: np.ndarray, state: SpectralState, iters: int = 1) -> float:
    """Advance the persistent singular-vector estimates; return sigma-hat."""
    if iters < 1:
        raise ValueError("need at least one power iteration")
    u, v = state.u, state.v
    for _ in range(iters):
        v = _l2normalize(W.T @ u)
        u = _l2normalize(W @ v)
    state.u, state.v = u, v
    return float(u @ W @ v)


def spectral_normalize(W: Tensor, state: SpectralState, iters: int = 1, update: bool = True) -> tuple[Tensor, float]:
    """W / sigma-hat, with sigma-hat = u^T W v differentiable in W (u, v held fixed).

    ``update=False`` reuses the stored vectors without iterating.
    """
    if update:
        power_iterate(W.data, state, iters)
    u, v = state.u, state.v
    sigma = ops.sum(ops.mul(u, ops.matmul(W, v)))
    if abs(sigma.item()) < SIGMA_FLOOR:
        return ops.scale(W, 1.0 / SIGMA_FLOOR), SIGMA_FLOOR
    return ops.div(W, sigma), sigma.item()


class Classifier(Module):
    """One affine map to K logits, softmax on top."""

    def __init__(self, n_in: int = 200, n_classes: int = 4, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_classes = n_classes
        self.fc = Linear(self, "fc", n_in, n_classes, rng)

    def logits(self, rep: Tensor) -> Tensor:
        return self.fc(rep)

    def log_probs(self, rep: Tensor) -> Tensor:
        return ops.log_softmax(self.logits(rep), axis=-1)

    def probs(self, rep: Tensor) -> Tensor:
        return ops.softmax(self.logits(rep), axis=-1)

    __call__ = probs


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """argmax with ties going to the lowest class index."""
    return np.argmax(np.asarray(probs), axis=-1)


class Discriminator(Module):
    """Two leaky-ReLU hidden layers and a two-way softmax; column 0 is 'source'."""

    def __init__(self, n_in: int = 200, hidden: tuple[int, ...] = (200, 200), spectral_norm: bool = True,
                 rng: np.random.Generator | None = None, slope: float = 0.01, power_iterations: int = 1):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        widths = (n_in, *hidden, 2)
        self.layers = [Linear(self, f"layer{i}", a, b, rng) for i, (a, b) in enumerate(zip(widths, widths[1:]))]
        self.spectral_norm = spectral_norm
        self.power_iterations = power_iterations
        self.slope = slope
        self.sn_state = [SpectralState.init(layer.W.shape, rng) for layer in self.layers]

    def weights(self, update: bool) -> list[Tensor]:
        if not self.spectral_norm:
            return [layer.W for layer in self.layers]
        return [spectral_normalize(layer.W, st, self.power_iterations, update)[0]
                for layer, st in zip(self.layers, self.sn_state)]

    def logits(self, rep: Tensor, update: bool = False) -> Tensor:
        x = rep
        ws = self.weights(update)
        last = len(self.layers) - 1
        for i, (layer, w) in enumerate(zip(self.layers, ws)):
            x = layer(x, weight=w)
            if i < last:
                x = ops.leaky_relu(x, self.slope)
        return x

    def log_probs(self, rep: Tensor, update: bool = False) -> Tensor:
        """(N, 2) log-probabilities: log D(x) and log(1 - D(x))."""
        return ops.log_softmax(self.logits(rep, update), axis=-1)

    def prob_source(self, rep: Tensor, update: bool = False) -> Tensor:
        return ops.softmax(self.logits(rep, update), axis=-1)[:, 0]

    __call__ = prob_source

    def sn_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, st in enumerate(self.sn_state):
            out[f"sn{i}.u"], out[f"sn{i}.v"] = st.u.copy(), st.v.copy()
        return out

    def load_sn_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i, st in enumerate(self.sn_state):
            st.u, st.v = np.array(arrays[f"sn{i}.u"]), np.array(arrays[f"sn{i}.v"])


class Reconstructor(Module):
    """M_r: 200 -> 120 -> 15 -> 120 -> 200 with a linear output layer."""

    def __init__(self, n_in: int = 200, hidden: tuple[int, ...] = (120, 15, 120),
                 rng: np.random.Generator | None = None, slope: float = 0.01):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        widths = (n_in, *hidden, n_in)
        self.layers = [Linear(self, f"layer{i}", a, b, rng) for i, (a, b) in enumerate(zip(widths, widths[1:]))]
        self.slope = slope

    def __call__(self, rep: Tensor) -> Tensor:
        x = rep
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                x = ops.leaky_relu(x, self.slope)
        return x
