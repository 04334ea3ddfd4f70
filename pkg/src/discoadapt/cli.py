"""Command-line entry point: ``discoadapt <command> [options]``.

Every run resolves its configuration from defaults, an optional JSON file
(``--config``) and command-line overrides (``--set key=value`` plus the
dedicated flags), rejects unknown keys, and writes the resolved result to
``config.json`` beside its outputs. Output directories default to
``$DISCOADAPT_OUTPUT_ROOT/<command>`` (``runs/<command>`` when unset).

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Sequence

from . import checkpoint as ckpt
from .autodiff import NumericError
from .data import (
    Corpus,
    DataError,
    IndexedSplit,
    SweepPlan,
    SynthConfig,
    load_corpus,
    load_embeddings,
    read_split,
    sample_labeled_subset,
    training_vocabulary,
    write_synthetic,
)
from .evaluation import EvalReport, emit_report, emit_sweep, text_table
from .training import (
    TrainConfig,
    adapt,
    load_model_checkpoint,
    predict,
    pretrain,
    save_model_checkpoint,
)

log = logging.getLogger("discoadapt")

OUTPUT_ROOT_ENV = "DISCOADAPT_OUTPUT_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PRESETS = ("published", "desk")


class UsageError(Exception):
    pass


# -- configuration -------------------------------------------------------------------

def _field_names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


TRAIN_KEYS = _field_names(TrainConfig)
SECTIONS = {
    "synth": {"synth": _field_names(SynthConfig)},
    "pretrain": {"train": TRAIN_KEYS, "data": {"corpus", "embeddings"}},
    "adapt": {"train": TRAIN_KEYS, "data": {"corpus", "embeddings", "checkpoint", "labeled_subset", "resume"}},
    "dann": {"train": TRAIN_KEYS, "dann": {"lam", "lr", "epochs", "spectral_norm"},
             "data": {"corpus", "embeddings"}},
    "eval": {"data": {"corpus", "embeddings", "checkpoint", "split"}},
    "sweep": {"train": TRAIN_KEYS, "sweep": {"fractions", "repeats", "seed", "systems"},
              "data": {"corpus", "embeddings"}},
    "gradcheck": {"gradcheck": {"seed", "step"}},
}


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def resolve_config(command: str, file_cfg: dict, flag_cfg: dict, set_args: Sequence[str]) -> dict:
    """Merge file < --set < dedicated flags, section by section.

    Keys may be given flat (``"seed"``) when they belong to exactly one
    section, or qualified (``"train.seed"``). A dedicated flag and a ``--set``
    that disagree on the same key are a usage error.
    """
    sections = SECTIONS[command]
    out: dict[str, dict] = {name: {} for name in sections}

    def place(key: str, value: Any, origin: str) -> tuple[str, str]:
        if "." in key:
            sec, name = key.split(".", 1)
            if sec not in sections or name not in sections[sec]:
                raise UsageError(f"{origin}: unknown key {key!r} for {command}")
            return sec, name
        owners = [sec for sec, names in sections.items() if key in names]
        if not owners:
            raise UsageError(f"{origin}: unknown key {key!r} for {command}")
        if len(owners) > 1:
            raise UsageError(f"{origin}: key {key!r} is ambiguous; qualify it as one of "
                             + ", ".join(f"{o}.{key}" for o in owners))
        return owners[0], key

    if not isinstance(file_cfg, dict):
        raise UsageError("config file must hold a JSON object")
    for key, value in file_cfg.items():
        if key in sections and isinstance(value, dict):
            for k, v in value.items():
                sec, name = place(f"{key}.{k}", v, "config file")
                out[sec][name] = v
        else:
            sec, name = place(key, value, "config file")
            out[sec][name] = value
    from_set: dict[tuple[str, str], Any] = {}
    for item in set_args:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        sec, name = place(key.strip(), raw, "--set")
        from_set[sec, name] = out[sec][name] = _parse_value(raw)
    for key, value in flag_cfg.items():
        sec, name = place(key, value, "flag")
        if (sec, name) in from_set and from_set[sec, name] != value:
            raise UsageError(f"conflicting values for {sec}.{name}: --set gives {from_set[sec, name]!r}, "
                             f"flag gives {value!r}")
        out[sec][name] = value
    return out


def train_config(section: dict, preset: str) -> TrainConfig:
    from .experiments import DESK

    base = dict(DESK) if preset == "desk" else {}
    try:
        return TrainConfig(**{**base, **section})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from None


def output_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / command


def write_resolved(out: Path, command: str, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    blob = {"command": command, **resolved}
    (out / "config.json").write_text(json.dumps(blob, indent=2, sort_keys=True, default=list) + "\n")


# -- data helpers --------------------------------------------------------------------

def _corpus_and_table(data: dict, max_len: int = 80):
    if "corpus" not in data:
        raise UsageError("missing --corpus")
    corpus_path = Path(data["corpus"])
    if not corpus_path.exists():
        raise DataError(f"corpus not found: {corpus_path}")
    corpus = load_corpus(corpus_path)
    emb = Path(data.get("embeddings") or (corpus_path / "embeddings.txt"))
    if not emb.exists():
        raise DataError(f"embedding file not found: {emb}")
    # vocabulary from the training splits only; dev/test-only tokens go to OOV
    vocab = training_vocabulary(corpus)
    table = load_embeddings(emb, vocab, dim=None)
    return corpus, table


def _split(corpus: Corpus, table, name: str, max_len: int) -> IndexedSplit:
    if name not in corpus.splits:
        raise DataError(f"corpus has no {name!r} split (found {sorted(corpus.splits)})")
    if not corpus.splits[name]:
        raise DataError(f"split {name!r} is empty")
    return IndexedSplit.build(corpus.splits[name], table.lookup, corpus.labels, max_len)


def _report(corpus, table, split: str, encoder, clf, cfg: TrainConfig) -> EvalReport:
    s = _split(corpus, table, split, cfg.max_len)
    return EvalReport.from_predictions(s.labels, predict(s, encoder, clf), corpus.labels, cfg.hash(), cfg.seed)


def _save_history(out: Path, history) -> None:
    (out / "history.json").write_text(json.dumps(history, indent=2) + "\n")


# -- commands ------------------------------------------------------------------------

def cmd_synth(args, resolved) -> int:
    try:
        cfg = SynthConfig(**resolved["synth"])
        cfg.validate()
    except (TypeError, DataError) as exc:
        raise UsageError(f"invalid synth config: {exc}") from None
    out = output_dir(args, "synth")
    write_resolved(out, "synth", {"synth": asdict(cfg)})
    write_synthetic(cfg, out)
    print(f"wrote synthetic corpus to {out}")
    return EXIT_OK


def cmd_pretrain(args, resolved) -> int:
    cfg = train_config(resolved["train"], args.preset)
    out = output_dir(args, "pretrain")
    write_resolved(out, "pretrain", {**resolved, "train": cfg.to_dict()})
    corpus, table = _corpus_and_table(resolved["data"], cfg.max_len)
    fit = pretrain(_split(corpus, table, "source-train", cfg.max_len),
                   _split(corpus, table, "source-dev", cfg.max_len), table, len(corpus.labels), cfg)
    save_model_checkpoint(out / "model.ckpt", fit.encoder, fit.clf, cfg,
                          {"best_epoch": fit.best_epoch, "labels": list(corpus.labels)})
    _save_history(out, fit.history)
    reports = {"source-dev": _report(corpus, table, "source-dev", fit.encoder, fit.clf, cfg)}
    if "target-test" in corpus.splits:
        reports["target-test (no adaptation)"] = _report(corpus, table, "target-test", fit.encoder, fit.clf, cfg)
    emit_report(reports, out)
    print(text_table(reports), end="")
    return EXIT_OK


def _labeled_subset(value, corpus: Corpus, table, cfg: TrainConfig) -> IndexedSplit:
    text = str(value)
    path = Path(text)
    if path.exists():
        insts = read_split(path, corpus.labels)
        if any(i.label is None for i in insts):
            raise DataError(f"{path}: labeled subset contains unlabeled instances")
    else:
        try:
            size = int(text)
        except ValueError:
            raise UsageError(f"--labeled-subset: {text!r} is neither a file nor a size") from None
        insts = sample_labeled_subset(corpus.splits.get("target-train", []), size, seed=cfg.seed)
    return IndexedSplit.build(insts, table.lookup, corpus.labels, cfg.max_len)


def cmd_adapt(args, resolved) -> int:
    data = resolved["data"]
    if "checkpoint" not in data:
        raise UsageError("adapt needs --checkpoint (a pretrain model.ckpt)")
    tsec = dict(resolved["train"])
    if data.get("labeled_subset") is not None:
        if tsec.get("supervised_component") is False:
            raise UsageError("--labeled-subset conflicts with supervised_component=false")
        tsec["supervised_component"] = True
    cfg = train_config(tsec, args.preset)
    out = output_dir(args, "adapt")
    write_resolved(out, "adapt", {**resolved, "train": cfg.to_dict()})
    corpus, table = _corpus_and_table(data, cfg.max_len)
    ck = Path(data["checkpoint"])
    if not ck.exists():
        raise DataError(f"checkpoint not found: {ck}")
    source, clf, meta = load_model_checkpoint(ck, table)
    if meta.get("stage") != "pretrain":
        raise UsageError(f"{ck}: adaptation starts from a pretrain checkpoint, got stage {meta.get('stage')!r}")
    labeled = None
    if cfg.supervised_component:
        if data.get("labeled_subset") is None:
            raise UsageError("supervised_component needs --labeled-subset")
        labeled = _labeled_subset(data["labeled_subset"], corpus, table, cfg)
    res = adapt(_split(corpus, table, "source-train", cfg.max_len),
                _split(corpus, table, "target-train", cfg.max_len),
                _split(corpus, table, "target-dev", cfg.max_len), source, clf, cfg, labeled=labeled,
                checkpoint_path=out / "adapt_state.ckpt", resume=data.get("resume"))
    save_model_checkpoint(out / "model.ckpt", res.target, res.clf, cfg,
                          {"best_epoch": res.best_epoch, "labels": list(corpus.labels)}, stage="adapt")
    _save_history(out, res.history)
    reports = {"target-test": _report(corpus, table, "target-test", res.target, res.clf, cfg)}
    emit_report(reports, out)
    print(text_table(reports), end="")
    return EXIT_OK


def cmd_dann(args, resolved) -> int:
    from .dann import DannConfig, train_dann

    cfg = train_config(resolved["train"], args.preset)
    try:
        dcfg = (DannConfig.desk(cfg, **resolved["dann"]) if args.preset == "desk"
                else DannConfig(train=cfg, **resolved["dann"]))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid DANN config: {exc}") from None
    out = output_dir(args, "dann")
    write_resolved(out, "dann", {**resolved, "train": cfg.to_dict(),
                                 "dann": {k: v for k, v in dcfg.to_dict().items() if k != "train"}})
    corpus, table = _corpus_and_table(resolved["data"], cfg.max_len)
    res = train_dann(_split(corpus, table, "source-train", cfg.max_len),
                     _split(corpus, table, "target-train", cfg.max_len),
                     _split(corpus, table, "target-dev", cfg.max_len), table, len(corpus.labels), dcfg)
    save_model_checkpoint(out / "model.ckpt", res.encoder, res.clf, cfg,
                          {"best_epoch": res.best_epoch, "labels": list(corpus.labels)}, stage="dann")
    _save_history(out, res.history)
    reports = {"target-test": _report(corpus, table, "target-test", res.encoder, res.clf, cfg)}
    emit_report(reports, out)
    print(text_table(reports), end="")
    return EXIT_OK


def cmd_eval(args, resolved) -> int:
    data = resolved["data"]
    if "checkpoint" not in data:
        raise UsageError("eval needs --checkpoint")
    split = data.get("split", "target-test")
    out = output_dir(args, "eval")
    write_resolved(out, "eval", resolved)
    corpus, table = _corpus_and_table(data)
    ck = Path(data["checkpoint"])
    if not ck.exists():
        raise DataError(f"checkpoint not found: {ck}")
    encoder, clf, meta = load_model_checkpoint(ck, table)
    cfg = TrainConfig(**meta["config"])
    reports = {f"{meta['stage']} on {split}": _report(corpus, table, split, encoder, clf, cfg)}
    emit_report(reports, out)
    print(text_table(reports), end="")
    return EXIT_OK


def parse_fractions(text) -> list[float]:
    """``0.1..1.0`` (step 0.1), ``0.2..1.0:0.2`` or ``0.1,0.5,1.0``."""
    from .data import fraction_grid

    if isinstance(text, list):
        return [float(x) for x in text]
    text = str(text)
    try:
        if ".." in text:
            lo, rest = text.split("..", 1)
            hi, _, step = rest.partition(":")
            return fraction_grid(float(lo), float(hi), float(step) if step else 0.1)
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse fractions {text!r}") from None


def cmd_sweep(args, resolved) -> int:
    from .experiments import SWEEP_SYSTEMS, Workspace, run_sweep

    cfg = train_config(resolved["train"], args.preset)
    sw = resolved["sweep"]
    fractions = parse_fractions(sw.get("fractions", "0.1..1.0"))
    if not fractions or min(fractions) <= 0 or max(fractions) > 1:
        raise UsageError("fractions must lie in (0, 1]")
    systems = tuple(sw.get("systems", SWEEP_SYSTEMS))
    unknown = set(systems) - set(SWEEP_SYSTEMS)
    if unknown:
        raise UsageError(f"unknown sweep systems {sorted(unknown)}")
    out = output_dir(args, "sweep")
    corpus, table = _corpus_and_table(resolved["data"], cfg.max_len)
    n_total = len(corpus.splits.get("target-train", []))
    if n_total == 0:
        raise DataError("sweep needs a nonempty target-train split")
    plan = SweepPlan.from_fractions(fractions, n_total, int(sw.get("repeats", 3)), int(sw.get("seed", cfg.seed)))
    write_resolved(out, "sweep", {**resolved, "train": cfg.to_dict(),
                                  "sweep": {"fractions": fractions, "sizes": plan.sizes, "repeats": plan.repeats,
                                            "seed": plan.seed, "systems": list(systems)}})
    ws = Workspace.build(corpus, table, cfg.max_len)
    t0 = time.time()
    result = run_sweep(ws, cfg, plan, systems)
    for p in emit_sweep(result, out):
        print(f"wrote {p}")
    log.info("sweep finished in %.1f s", time.time() - t0)
    return EXIT_OK


def cmd_gradcheck(args, resolved) -> int:
    from .gradcheck_suite import format_table, run_suite

    g = resolved["gradcheck"]
    t0 = time.time()
    results = run_suite(int(g.get("seed", 0)), float(g.get("step", 1e-5)))
    print(format_table(results))
    worst = max(r.max_rel_error for r in results)
    print(f"worst relative error {worst:.3e} over {len(results)} checks in {time.time() - t0:.1f} s")
    return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERIC


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "adapt": cmd_adapt,
    "dann": cmd_dann,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="discoadapt", description="Adversarial domain adaptation for sentence-pair relation "
                                                "classification.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, data=True, train=True):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (JSON value); repeatable")
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<command>)")
        if data:
            sp.add_argument("--corpus", help="corpus directory of <split>.jsonl files")
            sp.add_argument("--embeddings", help="embedding text file (default <corpus>/embeddings.txt)")
        if train:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--preset", choices=PRESETS, default="published",
                            help="base hyperparameters: published values or small-corpus values")

    sp = sub.add_parser("synth", help="write a synthetic two-domain corpus")
    common(sp, data=False, train=False)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("pretrain", help="train the source encoder and classifier")
    common(sp)
    sp.add_argument("--epochs", type=int)

    sp = sub.add_parser("adapt", help="adversarially adapt a target encoder")
    common(sp)
    sp.add_argument("--checkpoint", help="pretrain model.ckpt")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--no-spectral-norm", action="store_true")
    sp.add_argument("--no-label-smoothing", action="store_true")
    sp.add_argument("--no-reconstruction", action="store_true")
    sp.add_argument("--labeled-subset", metavar="PATH|SIZE",
                    help="labeled target instances (file) or a sample size; enables the supervised term")
    sp.add_argument("--resume", help="adaptation state checkpoint to resume from")

    sp = sub.add_parser("dann", help="train the gradient-reversal baseline")
    common(sp)
    sp.add_argument("--lam", type=float)
    sp.add_argument("--epochs", type=int)

    sp = sub.add_parser("eval", help="score a model checkpoint on a split")
    common(sp, train=False)
    sp.add_argument("--checkpoint")
    sp.add_argument("--split")

    sp = sub.add_parser("sweep", help="labeled-subset sweep over fractions of target-train")
    common(sp)
    sp.add_argument("--fractions", help="e.g. 0.1..1.0, 0.2..1.0:0.2 or 0.1,0.5,1.0")
    sp.add_argument("--repeats", type=int)

    sp = sub.add_parser("gradcheck", help="finite-difference checks of every gradient")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--config")
    return p


def _flag_config(args) -> dict:
    """Dedicated flags as config keys; only flags actually given."""
    cmd = args.command
    got = lambda name: getattr(args, name, None)  # noqa: E731
    flags: dict[str, Any] = {}
    if got("seed") is not None:
        flags[{"synth": "synth.seed", "gradcheck": "gradcheck.seed"}.get(cmd, "train.seed")] = args.seed
    for name in ("corpus", "embeddings", "checkpoint", "resume", "split"):
        if got(name) is not None:
            flags[f"data.{name}"] = got(name)
    if got("labeled_subset") is not None:
        flags["data.labeled_subset"] = args.labeled_subset
    if got("epochs") is not None:
        key = {"pretrain": "train.pretrain_epochs", "adapt": "train.adapt_epochs", "dann": "dann.epochs"}[cmd]
        flags[key] = args.epochs
    if got("lam") is not None:
        flags["dann.lam"] = args.lam
    for flag, key in (("no_spectral_norm", "spectral_norm"), ("no_label_smoothing", "label_smoothing"),
                      ("no_reconstruction", "reconstruction")):
        if got(flag):
            flags[f"train.{key}"] = False
    if got("fractions") is not None:
        flags["sweep.fractions"] = args.fractions
    if got("repeats") is not None:
        flags["sweep.repeats"] = args.repeats
    return flags


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing command; one of " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        file_cfg = {}
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text())
            except FileNotFoundError:
                raise UsageError(f"config file not found: {args.config}") from None
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.config}: invalid JSON ({exc.msg})") from None
        resolved = resolve_config(args.command, file_cfg, _flag_config(args), args.set)
        return COMMANDS[args.command](args, resolved)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ckpt.CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
