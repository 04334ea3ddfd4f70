"""End-to-end runs on a corpus: the ablation grid of systems, the DANN
comparison and the labeled-subset sweep."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Corpus, IndexedSplit, SweepPlan, SynthConfig, sample_labeled_subset, synth_generate
from .encoder import EmbeddingTable
from .evaluation import EvalReport, SweepResult
from .training import (
    TrainConfig,
    adapt,
    domain_accuracy,
    domain_probe,
    encode_split,
    finetune,
    predict,
    pretrain,
    train_supervised,
)

log = logging.getLogger(__name__)

# desk-scale defaults for synthetic corpora; the published learning rates are
# tuned for a 300-d, ~17k-instance corpus and barely move these small runs
DESK = dict(lr_pretrain=1e-3, lr_adversarial=1e-5, lr_reconstruction=1e-4, lr_supervised=1e-3,
            pretrain_epochs=30, adapt_epochs=10, patience=10)

# ablation rows: name -> (adaptation on, spectral norm, label smoothing, reconstruction)
ABLATIONS = {
    "Explicit->Implicit": (False, False, False, False),
    "+Domain Adaptation": (True, False, False, False),
    "+Spectral Normalization": (True, True, False, False),
    "+Label Smoothing": (True, True, True, False),
    "+Reconstruction": (True, True, True, True),
}


@dataclass
class Workspace:
    corpus: Corpus
    table: EmbeddingTable
    splits: dict[str, IndexedSplit]

    @classmethod
    def build(cls, corpus: Corpus, table: EmbeddingTable, max_len: int = 80) -> "Workspace":
        splits = {name: IndexedSplit.build(insts, table.lookup, corpus.labels, max_len)
                  for name, insts in corpus.splits.items()}
        return cls(corpus, table, splits)

    @classmethod
    def synthetic(cls, cfg: SynthConfig, max_len: int = 80) -> "Workspace":
        corpus, tokens, rows = synth_generate(cfg)
        table = EmbeddingTable.from_rows(tokens, rows, np.random.default_rng([cfg.seed, 7]))
        return cls.build(corpus, table, max_len)

    @property
    def n_classes(self) -> int:
        return len(self.corpus.labels)

    def report(self, split: str, encoder, clf, cfg: TrainConfig) -> EvalReport:
        gold = self.splits[split].labels
        return EvalReport.from_predictions(gold, predict(self.splits[split], encoder, clf),
                                           self.corpus.labels, cfg.hash(), cfg.seed)


def desk_config(seed: int = 0, **overrides) -> TrainConfig:
    return TrainConfig(**{**DESK, "seed": seed, **overrides})


@dataclass
class SeedRun:
    """Results of one seed of the grid.

    ``disc_accuracy`` is the held-out accuracy of each row's own adversary,
    paired with the target encoder it was selected with. ``probe_before`` and
    ``probe_after`` are fresh discriminators fit on frozen features of the
    unadapted and adapted encoders.
    """

    seed: int
    reports: dict[str, EvalReport] = field(default_factory=dict)
    disc_accuracy: dict[str, float] = field(default_factory=dict)
    probe_before: dict[str, float] = field(default_factory=dict)
    probe_after: dict[str, float] = field(default_factory=dict)
    histories: dict[str, list] = field(default_factory=dict)
    models: dict[str, tuple] = field(default_factory=dict)
    row_seconds: dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0


def run_grid(ws: Workspace, base: TrainConfig, rows: Sequence[str] = tuple(ABLATIONS),
             dann: bool = False, test_split: str = "target-test", probe: bool = False) -> SeedRun:
    """Run the requested ablation rows (plus optionally DANN) for one seed.

    ``row_seconds`` counts the shared pre-training toward every row that uses it.
    """
    t0 = time.time()
    out = SeedRun(base.seed)
    pretrained: dict[bool, tuple] = {}
    src, sdev = ws.splits["source-train"], ws.splits["source-dev"]
    tgt, tdev = ws.splits["target-train"], ws.splits["target-dev"]
    test = ws.splits[test_split]
    for row in rows:
        adapt_on, sn, ls, rec = ABLATIONS[row]
        cfg = replace(base, spectral_norm=sn, label_smoothing=ls, reconstruction=rec)
        if ls not in pretrained:
            t = time.time()
            fit = pretrain(src, sdev, ws.table, ws.n_classes, cfg)
            pretrained[ls] = (fit.encoder, fit.clf, time.time() - t)
            out.histories[f"pretrain(ls={ls})"] = fit.history
            out.models[f"pretrain(ls={ls})"] = (fit.encoder, fit.clf)
        enc, clf, pre_seconds = pretrained[ls]
        t = time.time()
        if not adapt_on:
            out.reports[row] = ws.report(test_split, enc, clf, cfg)
            out.models[row] = (enc, clf)
            out.row_seconds[row] = pre_seconds
            continue
        res = adapt(src, tgt, tdev, enc, clf, cfg)
        out.row_seconds[row] = pre_seconds + time.time() - t
        out.reports[row] = ws.report(test_split, res.target, res.clf, cfg)
        out.histories[row] = res.history
        out.models[row] = (res.target, res.clf)
        src_held = encode_split(sdev, enc)
        out.disc_accuracy[row] = domain_accuracy(res.disc, src_held, encode_split(test, res.target))
        if probe:
            src_train = encode_split(src, enc)
            out.probe_before[row] = domain_probe(src_train, encode_split(tgt, enc), src_held,
                                                 encode_split(test, enc), cfg)
            out.probe_after[row] = domain_probe(src_train, encode_split(tgt, res.target), src_held,
                                                encode_split(test, res.target), cfg)
    if dann:
        from .dann import DannConfig, train_dann

        t = time.time()
        dcfg = DannConfig.desk(base)
        res = train_dann(src, tgt, tdev, ws.table, ws.n_classes, dcfg)
        out.reports["DANN"] = ws.report(test_split, res.encoder, res.clf, dcfg.train)
        out.histories["DANN"] = res.history
        out.models["DANN"] = (res.encoder, res.clf)
        out.row_seconds["DANN"] = time.time() - t
    out.seconds = time.time() - t0
    return out


SWEEP_SYSTEMS = ("supervised baseline", "pre-training baseline", "full system")


def run_sweep(ws: Workspace, base: TrainConfig, plan: SweepPlan,
              systems: Sequence[str] = SWEEP_SYSTEMS) -> SweepResult:
    """Labeled-subset sweep: every size x repetition x system, macro F1 in percent.

    Repetition r uses training seed ``plan.seed + r``; one pre-training per
    repetition is shared by the pre-training baseline and the full system.
    """
    result = SweepResult(list(plan.sizes), {s: [[] for _ in plan.sizes] for s in systems})
    target_train = ws.corpus["target-train"]
    src, sdev = ws.splits["source-train"], ws.splits["source-dev"]
    tgt, tdev = ws.splits["target-train"], ws.splits["target-dev"]
    test = ws.splits["target-test"]
    for r in range(plan.repeats):
        seed = plan.seed + r
        cfg = replace(base, seed=seed)
        fit = None
        if {"pre-training baseline", "full system"} & set(systems):
            fit = pretrain(src, sdev, ws.table, ws.n_classes, cfg)
        for i, size in enumerate(plan.sizes):
            picked = sample_labeled_subset(target_train, size, seed=1000 * seed + size)
            labeled = IndexedSplit.build(picked, ws.table.lookup, ws.corpus.labels, cfg.max_len)
            for system in systems:
                if system == "supervised baseline":
                    res = train_supervised(labeled, tdev, ws.table, ws.n_classes, cfg)
                    enc, clf = res.encoder, res.clf
                elif system == "pre-training baseline":
                    res = finetune(labeled, tdev, fit.encoder, fit.clf, cfg)
                    enc, clf = res.encoder, res.clf
                elif system == "full system":
                    scfg = replace(cfg, supervised_component=True)
                    res = adapt(src, tgt, tdev, fit.encoder, fit.clf.copy(), scfg, labeled=labeled)
                    enc, clf = res.target, res.clf
                else:
                    raise ValueError(f"unknown sweep system {system!r}")
                f1 = 100 * ws.report("target-test", enc, clf, cfg).macro_f1
                result.scores[system][i].append(f1)
                log.info("sweep rep %d size %d %s: %.2f", r, size, system, f1)
    return result
