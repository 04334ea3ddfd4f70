"""Losses and the staged training procedure: source pre-training, adversarial
adaptation of a separate target encoder (with reconstruction and optional
target supervision), and prediction with the frozen source classifier."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import checkpoint as ckpt
from .autodiff import SGD, Adam, Tape, Tensor, no_tape, ops
from .data import Batch, IndexedSplit
from .encoder import EmbeddingTable, Encoder, EncoderConfig
from .evaluation import macro_f1_from_labels
from .heads import Classifier, Discriminator, Reconstructor, predict_labels, smoothed_targets
from .nn import Module

log = logging.getLogger(__name__)

# stream tags for per-epoch shuffling seeds
PRETRAIN, ADVERSARIAL, RECONSTRUCT, SUPERVISED = 0, 1, 2, 3


@dataclass
class TrainConfig:
    lr_pretrain: float = 1e-4
    lr_adversarial: float = 1e-6
    lr_reconstruction: float = 1e-2
    lr_supervised: float | None = None
    lr_discriminator: float | None = None
    smoothing: float = 0.1
    max_len: int = 80
    batch_size: int = 32
    pretrain_epochs: int = 50
    adapt_epochs: int = 30
    patience: int = 5
    seed: int = 0
    spectral_norm: bool = True
    label_smoothing: bool = True
    reconstruction: bool = True
    supervised_component: bool = False
    w_adv_d: float = 1.0
    w_adv_m: float = 1.0
    w_recon: float = 1.0
    w_sup: float = 1.0
    hidden_size: int = 50
    disc_hidden: tuple[int, ...] = (200, 200)
    recon_hidden: tuple[int, ...] = (120, 15, 120)
    power_iterations: int = 1

    def __post_init__(self):
        for name in ("lr_pretrain", "lr_adversarial", "lr_reconstruction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lr_supervised", "lr_discriminator"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must lie in [0, 1)")
        if self.batch_size < 1 or self.patience < 1:
            raise ValueError("batch_size and patience must be positive")
        self.disc_hidden = tuple(self.disc_hidden)
        self.recon_hidden = tuple(self.recon_hidden)

    @property
    def eps(self) -> float:
        return self.smoothing if self.label_smoothing else 0.0

    @property
    def sup_lr(self) -> float:
        return self.lr_supervised if self.lr_supervised is not None else self.lr_pretrain

    @property
    def disc_lr(self) -> float:
        return self.lr_discriminator if self.lr_discriminator is not None else self.lr_adversarial

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return ckpt.config_hash(self.to_dict())


def epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, stream])


# -- losses -----------------------------------------------------------------------

def _nonempty(batch: Batch, what: str) -> None:
    if len(batch) == 0:
        raise ValueError(f"{what}: empty batch")


def cross_entropy(log_probs: Tensor, labels: np.ndarray, eps: float = 0.0) -> Tensor:
    """Mean of -sum_k q'(k) log p(k) against smoothed one-hot targets."""
    q = smoothed_targets(labels, eps, log_probs.shape[-1])
    return ops.neg(ops.mean(ops.sum(ops.mul(q, log_probs), axis=-1)))


def loss_cls(batch: Batch, encoder: Encoder, clf: Classifier, eps: float = 0.0) -> Tensor:
    _nonempty(batch, "loss_cls")
    if np.any(batch.labels < 0):
        raise ValueError("loss_cls: batch contains unlabeled instances")
    return cross_entropy(clf.log_probs(encoder(batch)), batch.labels, eps)


def loss_sup(batch: Batch, target: Encoder, clf: Classifier) -> Tensor:
    """Unsmoothed cross-entropy of C(M_t(x)) on labeled target instances."""
    return loss_cls(batch, target, clf, 0.0)


def features(encoder: Encoder, batch: Batch) -> Tensor:
    """Encoder output with no gradient path (a fixed input)."""
    with no_tape():
        return encoder(batch)


def loss_adv_d(src: Batch, tgt: Batch, source: Encoder, target: Encoder, disc: Discriminator,
               update: bool = True) -> Tensor:
    """-E log D(M_s(x_s)) - E log(1 - D(M_t(x_t))), encoders held fixed."""
    _nonempty(src, "loss_adv_D")
    _nonempty(tgt, "loss_adv_D")
    fs, ft = features(source, src), features(target, tgt)
    n = len(src)
    # one forward over both halves keeps it to one power iteration per step
    lp = disc.log_probs(ops.concat([fs, ft], axis=0), update=update)
    return ops.neg(ops.add(ops.mean(lp[:n, 0]), ops.mean(lp[n:, 1])))


def loss_adv_m(tgt: Batch, target: Encoder, disc: Discriminator) -> Tensor:
    """-E log D(M_t(x_t)): inverted labels, discriminator held fixed."""
    _nonempty(tgt, "loss_adv_M")
    with disc.frozen():
        lp = disc.log_probs(target(tgt), update=False)
        return ops.neg(ops.mean(lp[:, 0]))


def loss_recon(tgt: Batch, target: Encoder, recon: Reconstructor, source: Encoder) -> Tensor:
    """E || M_r(M_t(x_t)) - M_s(x_t) ||^2 with M_s(x_t) a fixed target."""
    _nonempty(tgt, "loss_recon")
    goal = features(source, tgt)
    return ops.mean(ops.squared_distance(recon(target(tgt)), goal))


# -- bookkeeping ------------------------------------------------------------------

def named_params(modules: Mapping[str, Module]) -> dict[str, Tensor]:
    return {f"{m}/{k}": t for m, mod in modules.items() for k, t in mod.params().items()}


def train_step(loss_fn: Callable[[], Tensor], modules: Mapping[str, Module], optimizer,
               weight: float = 1.0) -> float:
    """Differentiate ``weight * loss_fn()`` w.r.t. ``modules`` and apply one update."""
    params = named_params(modules)
    with Tape() as tape:
        loss = loss_fn()
        scaled = loss if weight == 1.0 else ops.scale(loss, weight)
    grads = dict(zip(params, tape.gradient(scaled, params.values())))
    for m, mod in modules.items():
        if isinstance(mod, Encoder) and "embeddings" in mod.params():
            key = f"{m}/embeddings"
            grads[key] = mod.fix_grads({"embeddings": grads[key]})["embeddings"]
    optimizer.step(params, grads)
    return loss.item()


class StageAudit:
    """Records which parameter bundles each step changed and checks it against
    the step's designated set."""

    def __init__(self, modules: Mapping[str, Module]):
        self.modules = dict(modules)
        self.log: list[tuple[str, frozenset[str]]] = []

    def snapshot(self) -> dict[str, str]:
        return {k: m.digest() for k, m in self.modules.items()}

    def check(self, stage: str, before: dict[str, str], allowed: set[str]) -> None:
        after = self.snapshot()
        changed = frozenset(k for k in before if before[k] != after[k])
        self.log.append((stage, changed))
        if not changed <= allowed:
            raise AssertionError(f"{stage} step modified {sorted(changed - allowed)}")


def predict(split: IndexedSplit | Batch, encoder: Encoder, clf: Classifier, batch_size: int = 256) -> np.ndarray:
    """argmax C(M(x)) per instance, evaluated without recording gradients."""
    if isinstance(split, Batch):
        with no_tape():
            return predict_labels(clf.probs(encoder(split)).data)
    out = []
    with no_tape():
        for start in range(0, len(split), batch_size):
            b = split.batch(np.arange(start, min(start + batch_size, len(split))))
            out.append(predict_labels(clf.probs(encoder(b)).data))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def encode_split(split: IndexedSplit, encoder: Encoder, batch_size: int = 256) -> np.ndarray:
    out = []
    with no_tape():
        for start in range(0, len(split), batch_size):
            b = split.batch(np.arange(start, min(start + batch_size, len(split))))
            out.append(encoder(b).data)
    return np.concatenate(out)


def dev_macro_f1(split: IndexedSplit, encoder: Encoder, clf: Classifier) -> float:
    if np.any(split.labels < 0):
        raise ValueError("development split must be labeled")
    return macro_f1_from_labels(split.labels, predict(split, encoder, clf), clf.n_classes)


def domain_accuracy(disc: Discriminator, src_feats: np.ndarray, tgt_feats: np.ndarray) -> float:
    """Held-out accuracy of D: source should score P(source) > 0.5, target < 0.5."""
    with no_tape():
        ps = disc.prob_source(Tensor._wrap(src_feats)).data
        pt = disc.prob_source(Tensor._wrap(tgt_feats)).data
    return float(((ps > 0.5).sum() + (pt < 0.5).sum()) / (len(ps) + len(pt)))


def domain_probe(src_train: np.ndarray, tgt_train: np.ndarray, src_held: np.ndarray, tgt_held: np.ndarray,
                 cfg: TrainConfig, epochs: int = 20, lr: float = 1e-3) -> float:
    """Fit a fresh discriminator (same architecture as D) on frozen features
    and return its accuracy on held-out features.

    This separates "are the domains still distinguishable" from the state of
    the adversary that happened to be trained alongside the encoder.
    """
    disc = build_discriminator(src_train.shape[1], cfg)
    opt = Adam(lr)
    rng = np.random.default_rng([cfg.seed, 105])
    n = min(len(src_train), len(tgt_train))
    bs = cfg.batch_size
    for _ in range(epochs):
        ps, pt = rng.permutation(len(src_train))[:n], rng.permutation(len(tgt_train))[:n]
        for lo in range(0, n, bs):
            fs = Tensor._wrap(src_train[ps[lo:lo + bs]])
            ft = Tensor._wrap(tgt_train[pt[lo:lo + bs]])
            m = len(fs.data)

            def loss():
                lp = disc.log_probs(ops.concat([fs, ft], axis=0), update=True)
                return ops.neg(ops.add(ops.mean(lp[:m, 0]), ops.mean(lp[m:, 1])))

            train_step(loss, {"disc": disc}, opt)
    return domain_accuracy(disc, src_held, tgt_held)


# -- models -------------------------------------------------------------------------

def build_encoder(table: EmbeddingTable, cfg: TrainConfig, seed: int | None = None) -> Encoder:
    seed = cfg.seed if seed is None else seed
    return Encoder(table, EncoderConfig(hidden_size=cfg.hidden_size, max_len=cfg.max_len),
                   np.random.default_rng([seed, 101]))


def build_classifier(n_in: int, n_classes: int, cfg: TrainConfig, seed: int | None = None) -> Classifier:
    seed = cfg.seed if seed is None else seed
    return Classifier(n_in, n_classes, np.random.default_rng([seed, 102]))


def build_discriminator(n_in: int, cfg: TrainConfig, spectral_norm: bool | None = None) -> Discriminator:
    sn = cfg.spectral_norm if spectral_norm is None else spectral_norm
    return Discriminator(n_in, cfg.disc_hidden, sn, np.random.default_rng([cfg.seed, 103]),
                         power_iterations=cfg.power_iterations)


def build_reconstructor(n_in: int, cfg: TrainConfig) -> Reconstructor:
    return Reconstructor(n_in, cfg.recon_hidden, np.random.default_rng([cfg.seed, 104]))


# -- stage 1: supervised fitting ---------------------------------------------------------

@dataclass
class FitResult:
    encoder: Encoder
    clf: Classifier
    best_epoch: int
    best_dev_f1: float
    history: list[dict] = field(default_factory=list)


def fit_classifier(train: IndexedSplit, dev: IndexedSplit, encoder: Encoder, clf: Classifier,
                   cfg: TrainConfig, eps: float, lr: float, epochs: int, stream: int = PRETRAIN,
                   on_epoch: Callable[[int, Encoder, Classifier], None] | None = None) -> FitResult:
    """Adam on encoder + classifier with dev macro-F1 early stopping; the best
    epoch's parameters are restored before returning."""
    if len(train) == 0:
        raise ValueError("cannot train on an empty corpus")
    opt = Adam(lr)
    modules = {"encoder": encoder, "clf": clf}
    best_f1, best_epoch, bad = -1.0, 0, 0
    best_state = (encoder.state_dict(), clf.state_dict())
    history = []
    for epoch in range(1, epochs + 1):
        rng = epoch_rng(cfg.seed, epoch, stream)
        losses = [train_step(lambda: loss_cls(b, encoder, clf, eps), modules, opt)
                  for b in train.batches(cfg.batch_size, rng)]
        f1 = dev_macro_f1(dev, encoder, clf)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "dev_macro_f1": f1})
        log.info("fit epoch %d loss %.4f dev macro F1 %.4f", epoch, history[-1]["loss"], f1)
        if on_epoch is not None:
            on_epoch(epoch, encoder, clf)
        if f1 > best_f1:
            best_f1, best_epoch, bad = f1, epoch, 0
            best_state = (encoder.state_dict(), clf.state_dict())
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    encoder.load_state_dict(best_state[0])
    clf.load_state_dict(best_state[1])
    return FitResult(encoder, clf, best_epoch, best_f1, history)


def pretrain(train: IndexedSplit, dev: IndexedSplit, table: EmbeddingTable, n_classes: int,
             cfg: TrainConfig, **kw) -> FitResult:
    """Train M_s and C on labeled source data (smoothed cross-entropy)."""
    encoder = build_encoder(table, cfg)
    clf = build_classifier(encoder.out_dim, n_classes, cfg)
    return fit_classifier(train, dev, encoder, clf, cfg, cfg.eps, cfg.lr_pretrain, cfg.pretrain_epochs, **kw)


def train_supervised(labeled: IndexedSplit, dev: IndexedSplit, table: EmbeddingTable, n_classes: int,
                     cfg: TrainConfig) -> FitResult:
    """Target-only baseline: fresh encoder + classifier on the labeled subset."""
    encoder = build_encoder(table, cfg)
    clf = build_classifier(encoder.out_dim, n_classes, cfg)
    return fit_classifier(labeled, dev, encoder, clf, cfg, 0.0, cfg.sup_lr, cfg.pretrain_epochs, SUPERVISED)


def finetune(labeled: IndexedSplit, dev: IndexedSplit, source: Encoder, clf: Classifier,
             cfg: TrainConfig) -> FitResult:
    """Pre-training baseline: copies of (M_s, C) fine-tuned on labeled target data."""
    return fit_classifier(labeled, dev, source.copy(), clf.copy(), cfg, 0.0, cfg.sup_lr,
                          cfg.adapt_epochs, SUPERVISED)


# -- stage 2: adversarial adaptation ------------------------------------------------------

@dataclass
class AdaptState:
    """Everything needed to resume adaptation bitwise."""

    source: Encoder
    clf: Classifier
    target: Encoder
    disc: Discriminator
    recon: Reconstructor
    opt_d: Adam
    opt_m: Adam
    opt_r: SGD
    opt_sup: Adam
    epoch: int = 0
    best_epoch: int = 0
    best_f1: float = -1.0
    bad: int = 0
    best: dict[str, np.ndarray] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)

    def modules(self) -> dict[str, Module]:
        return {"source": self.source, "clf": self.clf, "target": self.target,
                "disc": self.disc, "recon": self.recon}

    def snapshot_best(self) -> None:
        self.best = {**ckpt.prefixed("target", self.target.state_dict()),
                     **ckpt.prefixed("clf", self.clf.state_dict()),
                     **ckpt.prefixed("disc", self.disc.state_dict()),
                     **ckpt.prefixed("disc_sn", self.disc.sn_arrays()),
                     **ckpt.prefixed("recon", self.recon.state_dict())}

    def restore_best(self) -> None:
        self.target.load_state_dict(ckpt.unprefixed("target", self.best))
        self.clf.load_state_dict(ckpt.unprefixed("clf", self.best))
        self.disc.load_state_dict(ckpt.unprefixed("disc", self.best))
        self.disc.load_sn_arrays(ckpt.unprefixed("disc_sn", self.best))
        self.recon.load_state_dict(ckpt.unprefixed("recon", self.best))

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for name, mod in self.modules().items():
            arrays.update(ckpt.prefixed(name, mod.state_dict()))
        arrays.update(ckpt.prefixed("disc_sn", self.disc.sn_arrays()))
        arrays.update(self.opt_d.state_arrays("opt_d"))
        arrays.update(self.opt_m.state_arrays("opt_m"))
        arrays.update(self.opt_sup.state_arrays("opt_sup"))
        arrays.update(ckpt.prefixed("best", self.best))
        return arrays

    def load_arrays(self, arrays: Mapping[str, np.ndarray], meta: Mapping) -> None:
        for name, mod in self.modules().items():
            mod.load_state_dict(ckpt.unprefixed(name, arrays))
        self.disc.load_sn_arrays(ckpt.unprefixed("disc_sn", arrays))
        self.opt_d.load_state_arrays(arrays, "opt_d")
        self.opt_m.load_state_arrays(arrays, "opt_m")
        self.opt_sup.load_state_arrays(arrays, "opt_sup")
        self.opt_r.state.step = int(meta["opt_r_step"])
        self.best = ckpt.unprefixed("best", arrays)
        self.epoch = int(meta["epoch"])
        self.best_epoch = int(meta["best_epoch"])
        self.best_f1 = float(meta["best_f1"])
        self.bad = int(meta["bad"])
        self.history = list(meta["history"])


def save_adapt_checkpoint(state: AdaptState, cfg: TrainConfig, path: str | Path) -> None:
    meta = {"stage": "adapt", "config": cfg.to_dict(), "config_hash": cfg.hash(), "seed": cfg.seed,
            "epoch": state.epoch, "best_epoch": state.best_epoch, "best_f1": state.best_f1,
            "bad": state.bad, "history": state.history, "opt_r_step": state.opt_r.state.step,
            "n_classes": state.clf.n_classes}
    ckpt.save(path, state.to_arrays(), meta)


def init_adapt_state(source: Encoder, clf: Classifier, cfg: TrainConfig) -> AdaptState:
    target = source.copy()
    st = AdaptState(
        source=source, clf=clf, target=target,
        disc=build_discriminator(source.out_dim, cfg),
        recon=build_reconstructor(source.out_dim, cfg),
        opt_d=Adam(cfg.disc_lr), opt_m=Adam(cfg.lr_adversarial),
        opt_r=SGD(cfg.lr_reconstruction), opt_sup=Adam(cfg.sup_lr),
    )
    return st


@dataclass
class AdaptResult:
    target: Encoder
    clf: Classifier
    disc: Discriminator
    recon: Reconstructor
    best_epoch: int
    best_dev_f1: float
    history: list[dict]
    audit: list[tuple[str, frozenset[str]]] = field(default_factory=list)
    state: AdaptState | None = None


def _cycle(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` indices from repeated fresh permutations of range(n)."""
    reps = -(-count // n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:count]


def adapt_epoch(state: AdaptState, src: IndexedSplit, tgt: IndexedSplit, cfg: TrainConfig,
                labeled: IndexedSplit | None = None, audit: StageAudit | None = None) -> dict:
    """One iteration of the repeat loop.

    Pass 1 alternates a discriminator update and a target-encoder update per
    batch; pass 2 runs the reconstruction update over the target data; pass 3
    (supervised component only) runs the labeled-target update of M_t and C.
    """
    epoch = state.epoch + 1
    bs = cfg.batch_size
    terms: dict[str, list[float]] = {"adv_D": [], "adv_M": []}

    def guarded(stage: str, allowed: set[str], fn: Callable[[], float]) -> float:
        if audit is None:
            return fn()
        before = audit.snapshot()
        value = fn()
        audit.check(stage, before, allowed)
        return value

    rng = epoch_rng(cfg.seed, epoch, ADVERSARIAL)
    n_batches = -(-len(tgt) // bs)
    tgt_order = rng.permutation(len(tgt))
    src_order = _cycle(len(src), n_batches * bs, rng)
    for i in range(n_batches):
        tb = tgt.batch(tgt_order[i * bs:(i + 1) * bs])
        sb = src.batch(src_order[i * bs:i * bs + len(tb)])
        terms["adv_D"].append(guarded("adv_D", {"disc"}, lambda: train_step(
            lambda: loss_adv_d(sb, tb, state.source, state.target, state.disc),
            {"disc": state.disc}, state.opt_d, cfg.w_adv_d)))
        terms["adv_M"].append(guarded("adv_M", {"target"}, lambda: train_step(
            lambda: loss_adv_m(tb, state.target, state.disc),
            {"target": state.target}, state.opt_m, cfg.w_adv_m)))

    if cfg.reconstruction:
        terms["recon"] = []
        rng = epoch_rng(cfg.seed, epoch, RECONSTRUCT)
        for tb in tgt.batches(bs, rng):
            terms["recon"].append(guarded("recon", {"target", "recon"}, lambda: train_step(
                lambda: loss_recon(tb, state.target, state.recon, state.source),
                {"target": state.target, "recon": state.recon}, state.opt_r, cfg.w_recon)))

    if cfg.supervised_component and labeled is not None and len(labeled):
        terms["sup"] = []
        rng = epoch_rng(cfg.seed, epoch, SUPERVISED)
        for lb in labeled.batches(bs, rng):
            terms["sup"].append(guarded("sup", {"target", "clf"}, lambda: train_step(
                lambda: loss_sup(lb, state.target, state.clf),
                {"target": state.target, "clf": state.clf}, state.opt_sup, cfg.w_sup)))

    state.epoch = epoch
    record = {"epoch": epoch, **{k: float(np.mean(v)) for k, v in terms.items()}}
    record["total"] = math.fsum(record[k] for k in terms)
    record["schedule"] = [k for k in ("adv_D+adv_M", "recon", "sup")
                          if k == "adv_D+adv_M" or k in terms]
    return record


def adapt(src: IndexedSplit, tgt: IndexedSplit, tgt_dev: IndexedSplit, source: Encoder | None,
          clf: Classifier | None, cfg: TrainConfig, labeled: IndexedSplit | None = None,
          checkpoint_path: str | Path | None = None, resume: str | Path | None = None,
          audit: bool = False, epochs: int | None = None) -> AdaptResult:
    """Adversarially adapt a target encoder initialized from ``source``.

    Target-train labels are never read; the target dev split is the only
    labeled target data used (model selection), unless ``labeled`` is given
    with the supervised component enabled.
    """
    if source is None or clf is None:
        raise ValueError("adaptation needs a pretrained source encoder and classifier")
    if cfg.supervised_component and (labeled is None or len(labeled) == 0):
        raise ValueError("supervised component enabled without a labeled target subset")
    tgt = tgt.without_labels()
    epochs = cfg.adapt_epochs if epochs is None else epochs
    state = init_adapt_state(source, clf, cfg)
    if resume is not None:
        arrays, meta = ckpt.load(resume)
        state.load_arrays(arrays, meta)
    else:
        # the unadapted encoder is a legitimate candidate for model selection
        state.best_f1 = dev_macro_f1(tgt_dev, state.target, state.clf)
        state.snapshot_best()
    auditor = StageAudit(state.modules()) if audit else None
    while state.epoch < epochs and state.bad < cfg.patience:
        record = adapt_epoch(state, src, tgt, cfg, labeled if cfg.supervised_component else None, auditor)
        f1 = dev_macro_f1(tgt_dev, state.target, state.clf)
        record["dev_macro_f1"] = f1
        state.history.append(record)
        log.info("adapt epoch %d %s", state.epoch,
                 " ".join(f"{k}={v:.4f}" for k, v in record.items() if isinstance(v, float)))
        if f1 > state.best_f1:
            state.best_f1, state.best_epoch, state.bad = f1, state.epoch, 0
            state.snapshot_best()
        else:
            state.bad += 1
        if checkpoint_path is not None:
            save_adapt_checkpoint(state, cfg, checkpoint_path)
    state.restore_best()
    return AdaptResult(state.target, state.clf, state.disc, state.recon, state.best_epoch, state.best_f1,
                       state.history, auditor.log if auditor else [], state)


def objective_terms(src: Batch, tgt: Batch, source: Encoder, clf: Classifier, target: Encoder,
                    disc: Discriminator, recon: Reconstructor | None, cfg: TrainConfig,
                    labeled: Batch | None = None) -> dict[str, float]:
    """Value of every enabled term of the full objective on fixed batches, and their sum."""
    with no_tape():
        terms = {
            "cls": loss_cls(src, source, clf, cfg.eps).item(),
            "adv_D": loss_adv_d(src, tgt, source, target, disc, update=False).item(),
            "adv_M": loss_adv_m(tgt, target, disc).item(),
        }
        if cfg.reconstruction and recon is not None:
            terms["recon"] = loss_recon(tgt, target, recon, source).item()
        if cfg.supervised_component and labeled is not None:
            terms["sup"] = loss_sup(labeled, target, clf).item()
    terms["total"] = math.fsum(terms.values())
    return terms


# -- predictor checkpoints ------------------------------------------------------------

ENCODER_PREFIX = {"pretrain": "source", "adapt": "target", "dann": "encoder", "supervised": "encoder"}


def save_model_checkpoint(path: str | Path, encoder: Encoder, clf: Classifier, cfg: TrainConfig,
                          extra: Mapping | None = None, stage: str = "pretrain") -> None:
    """Encoder + classifier for prediction; the stage names the encoder prefix."""
    prefix = ENCODER_PREFIX[stage]
    arrays = {**ckpt.prefixed(prefix, encoder.state_dict()), **ckpt.prefixed("clf", clf.state_dict())}
    meta = {"stage": stage, "encoder_prefix": prefix, "config": cfg.to_dict(), "config_hash": cfg.hash(),
            "seed": cfg.seed, "n_classes": clf.n_classes, **(extra or {})}
    ckpt.save(path, arrays, meta)


def load_model_checkpoint(path: str | Path, table: EmbeddingTable, prefix: str | None = None
                          ) -> tuple[Encoder, Classifier, dict]:
    arrays, meta = ckpt.load(path)
    if "config" not in meta or "n_classes" not in meta:
        raise ckpt.CheckpointError(f"{path}: not a predictor checkpoint")
    prefix = prefix or meta.get("encoder_prefix", "source")
    cfg = TrainConfig(**meta["config"])
    encoder = build_encoder(table, cfg)
    clf = build_classifier(encoder.out_dim, int(meta["n_classes"]), cfg)
    enc_arrays = ckpt.unprefixed(prefix, arrays)
    if "embeddings" in enc_arrays and "embeddings" not in encoder.params():
        enc_arrays.pop("embeddings")
    encoder.load_state_dict(enc_arrays)
    clf.load_state_dict(ckpt.unprefixed("clf", arrays))
    return encoder, clf, meta
