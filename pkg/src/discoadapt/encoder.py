"""Inner-attention BiLSTM argument encoder shared by both arguments of a pair."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor, ops, parameter
from .data import Batch
from .nn import Linear, Module, uniform_init

PAD, OOV = 0, 1


class EmbeddingTable:
    """Token rows; row 0 is all-zero padding, row 1 the shared OOV vector."""

    def __init__(self, tokens: Sequence[str], matrix: np.ndarray, trainable: bool = False):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[0] != len(tokens) + 2:
            raise ValueError("matrix needs one row per token plus padding and OOV rows")
        if np.any(matrix[PAD] != 0):
            raise ValueError("padding row must be zero")
        self.tokens = list(tokens)
        self.index = {tok: i + 2 for i, tok in enumerate(self.tokens)}
        self.weight = Tensor(matrix, requires_grad=trainable, name="embeddings")

    @classmethod
    def from_rows(cls, tokens: Sequence[str], rows: np.ndarray, rng: np.random.Generator,
                  oov_scale: float = 0.1, trainable: bool = False) -> "EmbeddingTable":
        rows = np.asarray(rows, dtype=np.float64)
        dim = rows.shape[1] if rows.ndim == 2 and rows.shape[0] else 0
        pad = np.zeros((1, dim))
        oov = rng.normal(scale=oov_scale, size=(1, dim))
        return cls(tokens, np.concatenate([pad, oov, rows.reshape(len(tokens), dim)]), trainable)

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def __len__(self) -> int:
        return self.weight.shape[0]

    def lookup(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, OOV) for t in tokens]


@dataclass
class EncoderConfig:
    hidden_size: int = 50
    z_dim: int = 100
    attn_dim: int = 100
    max_len: int = 80
    forget_bias: float = 1.0


class LSTMCell:
    """Four-gate cell; gate blocks ordered input, forget, output, candidate."""

    def __init__(self, owner: Module, prefix: str, n_in: int, hidden: int,
                 rng: np.random.Generator, forget_bias: float = 1.0):
        bound = 1.0 / np.sqrt(hidden)
        self.hidden = hidden
        self.W_ih = owner._param(f"{prefix}.W_ih", uniform_init(rng, (n_in, 4 * hidden), bound))
        self.W_hh = owner._param(f"{prefix}.W_hh", uniform_init(rng, (hidden, 4 * hidden), bound))
        b = uniform_init(rng, (4 * hidden,), bound)
        b[hidden:2 * hidden] += forget_bias
        self.b = owner._param(f"{prefix}.b", b)

    def step(self, x_proj: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        H = self.hidden
        z = ops.add(x_proj, ops.matmul(h, self.W_hh))
        s = ops.sigmoid(z[:, :3 * H])
        g = ops.tanh(z[:, 3 * H:])
        i, f, o = s[:, :H], s[:, H:2 * H], s[:, 2 * H:]
        c = ops.add(ops.mul(f, c), ops.mul(i, g))
        h = ops.mul(o, ops.tanh(c))
        return h, c

    def run(self, embeddings: Tensor, ids: np.ndarray) -> list[Tensor]:
        """Unroll over right-padded ``ids`` (N, T); returns T states of shape (N, H)."""
        n, T = ids.shape
        # project each distinct token once, then look rows up per step
        uniq, inv = np.unique(ids, return_inverse=True)
        inv = inv.reshape(ids.shape)
        proj = ops.add(ops.matmul(ops.gather(embeddings, uniq), self.W_ih), self.b)
        h = Tensor._wrap(np.zeros((n, self.hidden)))
        c = Tensor._wrap(np.zeros((n, self.hidden)))
        out = []
        for t in range(T):
            h, c = self.step(ops.gather(proj, inv[:, t]), h, c)
            out.append(h)
        return out


def reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """Per-row permutation reversing the first ``len`` positions, fixing pads."""
    t = np.arange(T)[None, :]
    lens = np.asarray(lengths)[:, None]
    return np.where(t < lens, lens - 1 - t, t)


class Encoder(Module):
    """M_s / M_t: embed, BiLSTM, attention pooling per argument, concatenate.

    The embedding table is shared by reference between copies.
    """

    def __init__(self, embeddings: EmbeddingTable, cfg: EncoderConfig | None = None,
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.cfg = cfg = cfg or EncoderConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.embeddings = embeddings
        H = cfg.hidden_size
        self.fwd = LSTMCell(self, "lstm_fwd", embeddings.dim, H, rng, cfg.forget_bias)
        self.bwd = LSTMCell(self, "lstm_bwd", embeddings.dim, H, rng, cfg.forget_bias)
        self.proj = Linear(self, "attn.W_c", 2 * H, cfg.z_dim, rng)
        self.score = Linear(self, "attn.W_w", 2 * H, cfg.attn_dim, rng)
        self.u_w = self._param("attn.u_w", uniform_init(rng, (cfg.attn_dim,), 1.0 / np.sqrt(cfg.attn_dim)))
        if embeddings.weight.requires_grad:
            self._params["embeddings"] = embeddings.weight

    @property
    def out_dim(self) -> int:
        return 2 * self.cfg.z_dim

    def copy(self) -> "Encoder":
        memo = {id(self.embeddings): self.embeddings}
        if "embeddings" in self._params:
            return copy.deepcopy(self)
        return copy.deepcopy(self, memo)

    def fix_grads(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Keep the padding row fixed when embeddings are trainable."""
        if "embeddings" in grads:
            grads["embeddings"] = grads["embeddings"].copy()
            grads["embeddings"][PAD] = 0.0
        return grads

    def hidden_states(self, ids: np.ndarray, lengths: np.ndarray) -> Tensor:
        """BiLSTM states h_i = [forward_i, backward_i], shape (N, T, 2H)."""
        ids = np.asarray(ids, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[1] == 0 or np.any(lengths < 1):
            raise ValueError("every sequence must contain at least one token")
        T = ids.shape[1]
        emb = self.embeddings.weight
        fwd = ops.stack(self.fwd.run(emb, ids), axis=1)
        rev = reverse_index(lengths, T)
        rev_ids = np.take_along_axis(ids, rev, axis=1)
        bwd_rev = ops.stack(self.bwd.run(emb, rev_ids), axis=1)
        bwd = ops.take_along(bwd_rev, rev[:, :, None], axis=1)
        return ops.concat([fwd, bwd], axis=-1)

    def attend(self, hidden: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """Attention pooling over real positions; returns (Arg, alpha)."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=1).all():
            raise ValueError("attention over a fully masked sequence")
        z = self.proj(hidden)
        u = ops.tanh(self.score(hidden))
        scores = ops.masked_fill(ops.matmul(u, self.u_w), ~mask, -1e30)
        alpha = ops.softmax(scores, axis=1)
        n, T = mask.shape
        arg = ops.sum(ops.mul(ops.reshape(alpha, (n, T, 1)), z), axis=1)
        return arg, alpha

    def encode(self, ids: np.ndarray, lengths: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)[:, :self.cfg.max_len]
        lengths = np.minimum(np.asarray(lengths, dtype=np.int64), self.cfg.max_len)
        mask = np.arange(ids.shape[1])[None, :] < lengths[:, None]
        arg, _ = self.attend(self.hidden_states(ids, lengths), mask)
        return arg

    def encode_pair(self, batch: Batch) -> Tensor:
        """Both arguments run through the same network in one stacked pass."""
        n = len(batch)
        T = max(batch.ids1.shape[1], batch.ids2.shape[1])
        ids = np.zeros((2 * n, T), dtype=np.int64)
        ids[:n, :batch.ids1.shape[1]] = batch.ids1
        ids[n:, :batch.ids2.shape[1]] = batch.ids2
        lengths = np.concatenate([batch.len1, batch.len2])
        args = self.encode(ids, lengths)
        return ops.concat([args[:n], args[n:]], axis=-1)

    __call__ = encode_pair


def token_batch(table: EmbeddingTable, pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
                max_len: int = 80) -> Batch:
    """Convenience: build a Batch straight from token lists."""
    from .data import _pad

    for n, (a1, a2) in enumerate(pairs):
        if not a1 or not a2:
            raise ValueError(f"instance {n}: empty argument")
    ids1, len1 = _pad([np.array(table.lookup(a[:max_len]), dtype=np.int64) for a, _ in pairs])
    ids2, len2 = _pad([np.array(table.lookup(b[:max_len]), dtype=np.int64) for _, b in pairs])
    return Batch(ids1, len1, ids2, len2, np.full(len(pairs), -1, dtype=np.int64))
