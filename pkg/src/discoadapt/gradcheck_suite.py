"""Finite-difference checks for every primitive and every composed training
loss, on tiny random configurations."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, check_gradients, ops, parameter
from .data import Batch
from .encoder import EmbeddingTable, Encoder, EncoderConfig
from .heads import Classifier, Discriminator, Reconstructor, SpectralState, power_iterate, spectral_normalize
from .training import cross_entropy, loss_adv_d, loss_adv_m, loss_cls, loss_recon, loss_sup

TOLERANCE = 1e-4
STEP = 1e-5

Case = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    n_params: int
    seconds: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _p(rng, *shape, lo=None, name="x"):
    data = rng.normal(size=shape)
    if lo is not None:
        # keep clear of kinks and of the log singularity
        data = np.sign(data) * (np.abs(data) + lo)
    return parameter(data, name)


def _scalar(t: Tensor) -> Tensor:
    """Reduce with a fixed random projection so every output entry matters."""
    w = np.random.default_rng(99).normal(size=t.shape)
    return ops.sum(ops.mul(t, w))


def _unary(op, lo=None, positive=False):
    def case(rng):
        x = _p(rng, 3, 4, lo=lo)
        if positive:
            x.data = np.abs(x.data) + 0.5
        return (lambda: _scalar(op(x))), [x]
    return case


def _binary(op, shape_b=(3, 4), nonzero=False):
    def case(rng):
        a, b = _p(rng, 3, 4, name="a"), _p(rng, *shape_b, lo=0.5 if nonzero else None, name="b")
        return (lambda: _scalar(op(a, b))), [a, b]
    return case


def _matmul(rng):
    a, b = _p(rng, 3, 4, name="a"), _p(rng, 4, 2, name="b")
    return (lambda: _scalar(ops.matmul(a, b))), [a, b]


def _reshape(rng):
    x = _p(rng, 3, 4)
    return (lambda: _scalar(ops.reshape(x, (2, 6)))), [x]


def _reduce(op, axis):
    def case(rng):
        x = _p(rng, 3, 4)
        return (lambda: _scalar(ops.reshape(op(x, axis=axis), (-1,)))), [x]
    return case


def _squared_distance(rng):
    a, b = _p(rng, 3, 4, name="a"), _p(rng, 3, 4, name="b")
    return (lambda: _scalar(ops.squared_distance(a, b))), [a, b]


def _concat(rng):
    a, b = _p(rng, 3, 2, name="a"), _p(rng, 3, 4, name="b")
    return (lambda: _scalar(ops.concat([a, b], axis=1))), [a, b]


def _stack(rng):
    a, b = _p(rng, 3, 4, name="a"), _p(rng, 3, 4, name="b")
    return (lambda: _scalar(ops.stack([a, b], axis=1))), [a, b]


def _getitem(rng):
    x = _p(rng, 4, 5)
    idx = np.array([0, 2, 2, 3])
    return (lambda: ops.add(_scalar(x[1:3, ::2]), _scalar(ops.getitem(x, (idx, 1))))), [x]


def _gather(rng):
    table = _p(rng, 6, 3)
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    return (lambda: _scalar(ops.gather(table, ids))), [table]


def _take_along(rng):
    x = _p(rng, 2, 4, 3)
    idx = np.array([[3, 2, 1, 0], [1, 0, 2, 3]])[:, :, None].repeat(3, axis=2)
    return (lambda: _scalar(ops.take_along(x, idx, axis=1))), [x]


def _masked_fill(rng):
    x = _p(rng, 3, 4)
    mask = rng.random((3, 4)) < 0.4
    return (lambda: _scalar(ops.softmax(ops.masked_fill(x, mask, -1e30), axis=-1))), [x]


def _stop_gradient(rng):
    x = _p(rng, 3, 4)
    fn = lambda: _scalar(ops.add(ops.tanh(x), ops.stop_gradient(ops.mul(x, x))))  # noqa: E731
    # oracle: only the unstopped branch varies
    return fn, [x], lambda p: [(1.0, lambda: _scalar(ops.tanh(x)))]


def _grad_reverse(rng):
    x = _p(rng, 3, 4)
    return (lambda: _scalar(ops.grad_reverse(x, 0.25))), [x], lambda p: [(-0.25, lambda: _scalar(x))]


PRIMITIVES: dict[str, Case] = {
    "add": _binary(ops.add),
    "add (broadcast)": _binary(ops.add, (4,)),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "mul (broadcast)": _binary(ops.mul, (1, 4)),
    "div": _binary(ops.div, nonzero=True),
    "neg": _unary(ops.neg),
    "scale": _unary(lambda x: ops.scale(x, -1.7)),
    "matmul": _matmul,
    "transpose": _unary(ops.transpose),
    "reshape": _reshape,
    "tanh": _unary(ops.tanh),
    "sigmoid": _unary(ops.sigmoid),
    "relu": _unary(ops.relu, lo=1e-2),
    "leaky_relu": _unary(lambda x: ops.leaky_relu(x, 0.01), lo=1e-2),
    "exp": _unary(ops.exp),
    "log": _unary(ops.log, positive=True),
    "softmax": _unary(ops.softmax),
    "log_softmax": _unary(ops.log_softmax),
    "sum (axis 0)": _reduce(ops.sum, 0),
    "sum (all)": _reduce(ops.sum, None),
    "mean (axis 1)": _reduce(ops.mean, 1),
    "squared_distance": _squared_distance,
    "concat": _concat,
    "stack": _stack,
    "getitem": _getitem,
    "gather": _gather,
    "take_along": _take_along,
    "masked_fill + softmax": _masked_fill,
    "stop_gradient": _stop_gradient,
    "grad_reverse (lambda=0.25)": _grad_reverse,
}


# -- composed losses ---------------------------------------------------------------

def _tiny(rng, trainable: bool = True):
    vocab, dim = 9, 4
    table = EmbeddingTable.from_rows([f"t{i}" for i in range(vocab)], rng.normal(size=(vocab, dim)) * 0.5,
                                     rng, oov_scale=0.5, trainable=trainable)
    cfg = EncoderConfig(hidden_size=3, z_dim=6, attn_dim=5)
    enc = Encoder(table, cfg, rng)
    lens1, lens2 = np.array([3, 1, 2]), np.array([2, 3, 1])

    def ids(lens):
        out = np.zeros((len(lens), int(lens.max())), dtype=np.int64)
        for i, n in enumerate(lens):
            out[i, :n] = rng.integers(1, vocab + 2, size=n)
        return out

    batch = Batch(ids(lens1), lens1, ids(lens2), lens2, np.array([0, 3, 1]))
    return enc, batch


def _params(*modules):
    return [t for m in modules for t in m.params().values()]


def _loss_encoder_cls(rng):
    enc, batch = _tiny(rng)
    clf = Classifier(enc.out_dim, 4, rng)
    return (lambda: loss_cls(batch, enc, clf, 0.0)), _params(enc, clf)


def _loss_smoothed(rng):
    enc, batch = _tiny(rng, trainable=False)
    clf = Classifier(enc.out_dim, 4, rng)
    return (lambda: loss_cls(batch, enc, clf, 0.1)), _params(enc, clf)


def _disc_setup(rng):
    src_enc, batch = _tiny(rng, trainable=False)
    tgt_enc = src_enc.copy()
    for t in tgt_enc.params().values():
        t.data = t.data + rng.normal(size=t.shape) * 0.05
    disc = Discriminator(src_enc.out_dim, (5, 4), True, rng)
    # warm the power-iteration state so sigma is a sensible estimate
    for st, layer in zip(disc.sn_state, disc.layers):
        power_iterate(layer.W.data, st, 10)
    return src_enc, tgt_enc, disc, batch


def _loss_adv_d(rng):
    src_enc, tgt_enc, disc, batch = _disc_setup(rng)
    return (lambda: loss_adv_d(batch, batch, src_enc, tgt_enc, disc, update=False)), _params(disc)


def _loss_adv_m(rng):
    _, tgt_enc, disc, batch = _disc_setup(rng)
    return (lambda: loss_adv_m(batch, tgt_enc, disc)), _params(tgt_enc)


def _loss_recon(rng):
    src_enc, batch = _tiny(rng, trainable=False)
    tgt_enc = src_enc.copy()
    for t in tgt_enc.params().values():
        t.data = t.data + rng.normal(size=t.shape) * 0.05
    recon = Reconstructor(src_enc.out_dim, (5, 2, 5), rng)
    return (lambda: loss_recon(batch, tgt_enc, recon, src_enc)), _params(tgt_enc, recon)


def _loss_sup(rng):
    enc, batch = _tiny(rng, trainable=False)
    clf = Classifier(enc.out_dim, 4, rng)
    return (lambda: loss_sup(batch, enc, clf)), _params(enc, clf)


def _loss_dann(rng):
    from .dann import dann_loss

    lam = 0.25
    enc, batch = _tiny(rng, trainable=False)
    clf = Classifier(enc.out_dim, 4, rng)
    disc = Discriminator(enc.out_dim, (5, 4), False, rng)
    disc_ids = {id(t) for t in disc.params().values()}

    def cls_path():
        return dann_loss(batch, batch, enc, clf, disc, lam, 0.1)[1]

    def dom_path():
        return dann_loss(batch, batch, enc, clf, disc, lam, 0.1)[2]

    def reference(p):
        # D sees the domain loss directly; encoder and classifier see the
        # classification path plus the domain path scaled by -lambda
        if id(p) in disc_ids:
            return [(1.0, dom_path)]
        return [(1.0, cls_path), (-lam, dom_path)]

    return (lambda: dann_loss(batch, batch, enc, clf, disc, lam, 0.1)[0]), _params(enc, clf, disc), reference


def _spectral_sigma(rng):
    W = _p(rng, 4, 3, name="W")
    st = SpectralState.init((4, 3), rng)
    return (lambda: _scalar(spectral_normalize(W, st, 1, update=False)[0])), [W]


def _smoothed_ce(rng):
    logits = _p(rng, 5, 4)
    labels = np.array([0, 3, 1, 2, 2])
    return (lambda: cross_entropy(ops.log_softmax(logits), labels, 0.1)), [logits]


COMPOSED: dict[str, Case] = {
    "spectral normalization (fixed u, v)": _spectral_sigma,
    "smoothed cross-entropy": _smoothed_ce,
    "encoder + classifier loss": _loss_encoder_cls,
    "encoder + smoothed classifier loss": _loss_smoothed,
    "discriminator loss": _loss_adv_d,
    "target encoder adversarial loss": _loss_adv_m,
    "reconstruction loss": _loss_recon,
    "labeled target loss": _loss_sup,
    "gradient reversal joint loss": _loss_dann,
}


def run_suite(seed: int = 0, h: float = STEP) -> list[CheckResult]:
    out = []
    for name, case in {**PRIMITIVES, **COMPOSED}.items():
        rng = np.random.default_rng([seed, len(out)])
        t0 = time.perf_counter()
        fn, params, *reference = case(rng)
        err = check_gradients(fn, params, h, *reference)
        out.append(CheckResult(name, err, sum(p.data.size for p in params), time.perf_counter() - t0))
    return out


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results) + 2
    lines = [f"{'check'.ljust(width)}{'params':>8}{'max rel err':>14}  status"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}{r.n_params:>8}{r.max_rel_error:>14.3e}  {'ok' if r.ok else 'FAIL'}")
    return "\n".join(lines)
