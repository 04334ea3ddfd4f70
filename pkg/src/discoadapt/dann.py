"""Domain-adversarial training with a gradient reversal layer: one shared
encoder, classifier and discriminator trained jointly."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Adam, Tensor, ops
from .data import IndexedSplit
from .encoder import EmbeddingTable, Encoder
from .heads import Classifier, Discriminator
from .training import (
    PRETRAIN,
    TrainConfig,
    build_classifier,
    build_discriminator,
    build_encoder,
    cross_entropy,
    dev_macro_f1,
    epoch_rng,
    train_step,
)

log = logging.getLogger(__name__)

# shuffling stream for target batches; source batches reuse the pre-training
# stream so a zero-lambda run replays source-only training exactly
DANN_TARGET = 4


@dataclass
class DannConfig:
    lam: float = 0.25
    lr: float = 2e-4
    epochs: int = 50
    spectral_norm: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        # lam = 0 is kept legal: it is the reduction-to-source-only check
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and nonnegative, got {self.lam}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def desk(cls, base: TrainConfig, **overrides) -> "DannConfig":
        """Desk-scale run sharing the base config's seed, sizes and epochs;
        the learning rate follows the pre-training rate."""
        kw = dict(lr=base.lr_pretrain, epochs=base.pretrain_epochs, train=base)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DannResult:
    encoder: Encoder
    clf: Classifier
    disc: Discriminator
    best_epoch: int
    best_dev_f1: float
    history: list[dict] = field(default_factory=list)


def gradient_reversal(x, lam: float) -> Tensor:
    """Identity forward, gradient times -lam backward."""
    return ops.grad_reverse(x, lam)


def dann_loss(src, tgt, encoder: Encoder, clf: Classifier, disc: Discriminator, lam: float, eps: float
              ) -> tuple[Tensor, Tensor, Tensor]:
    """(total, classification, domain) for one source and one target batch.

    Source and target are encoded separately, so the classification path is
    computed exactly as in source-only training.
    """
    fs = encoder(src)
    cls_loss = cross_entropy(clf.log_probs(fs), src.labels, eps)
    ft = encoder(tgt)
    n = len(src)
    lp = disc.log_probs(ops.concat([gradient_reversal(fs, lam), gradient_reversal(ft, lam)], axis=0),
                        update=True)
    dom_loss = ops.neg(ops.add(ops.mean(lp[:n, 0]), ops.mean(lp[n:, 1])))
    return ops.add(cls_loss, dom_loss), cls_loss, dom_loss


def train_dann(src: IndexedSplit, tgt: IndexedSplit, tgt_dev: IndexedSplit, table: EmbeddingTable,
               n_classes: int, dcfg: DannConfig, on_epoch=None) -> DannResult:
    """Joint loop over source batches, each paired with a target batch; early
    stopping on target dev macro F1 restores the best epoch."""
    cfg = dcfg.train
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("cannot train on an empty corpus")
    tgt = tgt.without_labels()
    encoder = build_encoder(table, cfg)
    clf = build_classifier(encoder.out_dim, n_classes, cfg)
    disc = build_discriminator(encoder.out_dim, cfg, spectral_norm=dcfg.spectral_norm)
    modules = {"encoder": encoder, "clf": clf, "disc": disc}
    opt = Adam(dcfg.lr)
    bs = cfg.batch_size
    best = (-1.0, 0, {k: m.state_dict() for k, m in modules.items()})
    bad = 0
    history = []
    for epoch in range(1, dcfg.epochs + 1):
        src_rng = epoch_rng(cfg.seed, epoch, PRETRAIN)
        tgt_rng = epoch_rng(cfg.seed, epoch, DANN_TARGET)
        n_src = -(-len(src) // bs)
        reps = -(-n_src * bs // len(tgt))
        tgt_order = np.concatenate([tgt_rng.permutation(len(tgt)) for _ in range(reps)])
        parts = {"cls": [], "dom": []}
        for i, sb in enumerate(src.batches(bs, src_rng)):
            tb = tgt.batch(tgt_order[i * bs:i * bs + len(sb)])

            def loss():
                total, c, d = dann_loss(sb, tb, encoder, clf, disc, dcfg.lam, cfg.eps)
                parts["cls"].append(c.item())
                parts["dom"].append(d.item())
                return total

            train_step(loss, modules, opt)
        f1 = dev_macro_f1(tgt_dev, encoder, clf)
        record = {"epoch": epoch, "cls": float(np.mean(parts["cls"])), "dom": float(np.mean(parts["dom"])),
                  "dev_macro_f1": f1}
        history.append(record)
        log.info("dann epoch %d cls %.4f dom %.4f dev macro F1 %.4f", epoch, record["cls"], record["dom"], f1)
        if on_epoch is not None:
            on_epoch(epoch, encoder, clf)
        if f1 > best[0]:
            best, bad = (f1, epoch, {k: m.state_dict() for k, m in modules.items()}), 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    for k, m in modules.items():
        m.load_state_dict(best[2][k])
    return DannResult(encoder, clf, disc, best[1], best[0], history)


def source_only_config(dcfg: DannConfig) -> TrainConfig:
    """The pre-training config whose trajectory a zero-lambda run reproduces."""
    return replace(dcfg.train, lr_pretrain=dcfg.lr, pretrain_epochs=dcfg.epochs)
