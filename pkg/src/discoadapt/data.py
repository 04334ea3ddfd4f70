"""Corpus records, embedding files, the synthetic two-domain generator and
the labeled-subset sampler used by the supervision sweep."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

RELATIONS = ("Temporal", "Contingency", "Comparison", "Expansion")
SPLITS = ("source-train", "source-dev", "target-train", "target-dev", "target-test")
DOMAINS = ("source", "target")

# documented PDTB 2.0 top-level counts; fixtures only
PDTB_COUNTS = {
    "explicit-train": dict(zip(RELATIONS, (2904, 2792, 4674, 5342))),
    "explicit-dev": dict(zip(RELATIONS, (288, 181, 366, 450))),
    "implicit-train": dict(zip(RELATIONS, (704, 3622, 2104, 7394))),
    "implicit-dev": dict(zip(RELATIONS, (68, 276, 146, 556))),
    "implicit-test": dict(zip(RELATIONS, (54, 287, 191, 651))),
}


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Instance:
    arg1: tuple[str, ...]
    arg2: tuple[str, ...]
    label: str | None
    domain: str
    id: str

    def __post_init__(self):
        if not self.arg1 or not self.arg2:
            raise DataError(f"instance {self.id!r}: both arguments must be nonempty")
        if self.domain not in DOMAINS:
            raise DataError(f"instance {self.id!r}: domain must be source|target, got {self.domain!r}")

    def unlabeled(self) -> "Instance":
        return Instance(self.arg1, self.arg2, None, self.domain, self.id)

    def to_record(self) -> dict:
        rec = {"arg1": " ".join(self.arg1), "arg2": " ".join(self.arg2)}
        if self.label is not None:
            rec["label"] = self.label
        rec["domain"] = self.domain
        rec["id"] = self.id
        return rec


@dataclass
class Corpus:
    splits: dict[str, list[Instance]]
    labels: tuple[str, ...] = RELATIONS

    def __getitem__(self, split: str) -> list[Instance]:
        return self.splits[split]

    def label_index(self, label: str) -> int:
        return self.labels.index(label)

    def unlabeled(self, split: str) -> list[Instance]:
        return [inst.unlabeled() for inst in self.splits[split]]


# -- corpus files ------------------------------------------------------------

def parse_record(line: str, lineno: int, labels: Sequence[str], source: str = "<corpus>") -> Instance:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"{source}:{lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise DataError(f"{source}:{lineno}: expected a JSON object")
    missing = {"arg1", "arg2", "domain", "id"} - rec.keys()
    if missing:
        raise DataError(f"{source}:{lineno}: missing keys {sorted(missing)}")
    label = rec.get("label")
    if label is not None and label not in labels:
        raise DataError(f"{source}:{lineno}: unknown label {label!r}")
    arg1, arg2 = str(rec["arg1"]).split(), str(rec["arg2"]).split()
    try:
        return Instance(tuple(arg1), tuple(arg2), label, rec["domain"], str(rec["id"]))
    except DataError as exc:
        raise DataError(f"{source}:{lineno}: {exc}") from None


def read_split(path: str | Path, labels: Sequence[str] = RELATIONS) -> list[Instance]:
    path = Path(path)
    out: list[Instance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            inst = parse_record(line, lineno, labels, str(path))
            if inst.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {inst.id!r}")
            seen.add(inst.id)
            out.append(inst)
    if not out:
        log.warning("%s: no instances", path)
    return out


def write_split(instances: Iterable[Instance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


def load_corpus(path: str | Path, labels: Sequence[str] | None = None) -> Corpus:
    """Load a corpus directory (``<split>.jsonl`` files) or a single split file.

    A ``labels.json`` beside the splits overrides the default relation set.
    """
    path = Path(path)
    if path.is_dir():
        if labels is None and (path / "labels.json").exists():
            labels = json.loads((path / "labels.json").read_text())
        labels = tuple(labels or RELATIONS)
        splits = {}
        for f in sorted(path.glob("*.jsonl")):
            splits[f.stem] = read_split(f, labels)
        if not splits:
            raise DataError(f"{path}: no .jsonl splits found")
    else:
        labels = tuple(labels or RELATIONS)
        splits = {path.stem: read_split(path, labels)}
    ids: set[str] = set()
    for name, insts in splits.items():
        for inst in insts:
            if inst.id in ids:
                raise DataError(f"duplicate id {inst.id!r} across splits (in {name})")
            ids.add(inst.id)
    return Corpus(splits, labels)


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, insts in corpus.splits.items():
        write_split(insts, path / f"{name}.jsonl")
    (path / "labels.json").write_text(json.dumps(list(corpus.labels)) + "\n")


# -- embeddings ----------------------------------------------------------------

def read_embedding_file(path: str | Path, vocab: Iterable[str] | None = None,
                        dim: int | None = 300) -> tuple[list[str], np.ndarray]:
    """Rows of a whitespace text embedding file, optionally filtered to ``vocab``."""
    keep = None if vocab is None else set(vocab)
    tokens: list[str] = []
    rows: list[list[float]] = []
    width = dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if width is None:
                width = len(values)
            if len(values) != width:
                raise DataError(f"{path}:{lineno}: token {token!r} has {len(values)} values, expected {width}")
            if keep is not None and token not in keep:
                continue
            try:
                row = [float(v) for v in values]
            except ValueError:
                raise DataError(f"{path}:{lineno}: token {token!r} has a non-numeric value") from None
            if not all(math.isfinite(v) for v in row):
                raise DataError(f"{path}:{lineno}: token {token!r} has a non-finite value")
            tokens.append(token)
            rows.append(row)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    return tokens, matrix


def load_embeddings(path: str | Path, vocab: Iterable[str] | None = None, dim: int | None = 300,
                    seed: int = 0, oov_scale: float = 0.1):
    from .encoder import EmbeddingTable

    vocab = None if vocab is None else list(vocab)
    tokens, matrix = read_embedding_file(path, vocab, dim)
    table = EmbeddingTable.from_rows(tokens, matrix, np.random.default_rng(seed), oov_scale)
    if vocab:
        covered = sum(1 for t in vocab if t in table.index)
        log.info("embeddings: %d/%d vocabulary tokens covered (OOV rate %.2f%%)",
                 covered, len(vocab), 100.0 * (1 - covered / len(vocab)))
    return table


def write_embedding_file(tokens: Sequence[str], matrix: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok, row in zip(tokens, matrix):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in row) + "\n")


def training_vocabulary(corpus: Corpus, splits: Sequence[str] = ("source-train", "target-train")) -> list[str]:
    seen: dict[str, None] = {}
    for name in splits:
        for inst in corpus.splits.get(name, []):
            for tok in inst.arg1 + inst.arg2:
                seen.setdefault(tok, None)
    return list(seen)


# -- synthetic two-domain corpora ------------------------------------------------

@dataclass
class SynthConfig:
    n_classes: int = 4
    class_ratios: tuple[float, ...] | None = None
    content_per_class: int = 12
    n_filler: int = 60
    markers_per_class: int = 2
    connective_strength: float = 0.5
    content_rate: float = 0.3
    content_purity: float = 0.6
    min_len: int = 4
    max_len: int = 9
    n_source_train: int = 2000
    n_source_dev: int = 300
    n_target_train: int = 2000
    n_target_dev: int = 300
    n_target_test: int = 500
    embed_dim: int = 300
    prototype_scale: float = 0.0
    noise_scale: float = 1.0
    domain_shift: float = 1.0
    variant_noise: float = 0.1
    # class words that exist only in the target domain; labels are the only way to learn them
    target_cue_per_class: int = 0
    target_cue_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_classes < 2:
            raise DataError("synthetic corpus needs at least 2 classes")
        if self.class_ratios is not None:
            if len(self.class_ratios) != self.n_classes or min(self.class_ratios) <= 0:
                raise DataError("class_ratios must give one positive weight per class")
        for name in ("connective_strength", "content_rate", "content_purity", "target_cue_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DataError(f"{name} must lie in [0, 1]")
        if not 1 <= self.min_len <= self.max_len:
            raise DataError("need 1 <= min_len <= max_len")
        if min(self.content_per_class, self.n_filler, self.markers_per_class) < 1:
            raise DataError("token pools must be nonempty")
        if self.target_cue_rate > 0 and self.target_cue_per_class < 1:
            raise DataError("target_cue_rate needs target_cue_per_class >= 1")
        if min(self.noise_scale, self.domain_shift, self.variant_noise, self.prototype_scale) < 0:
            raise DataError("embedding scales must be nonnegative")


def synth_labels(n_classes: int) -> tuple[str, ...]:
    return RELATIONS if n_classes == 4 else tuple(f"class{k}" for k in range(n_classes))


def marker_tokens(cfg: SynthConfig) -> list[list[str]]:
    return [[f"conn{k}_{j}" for j in range(cfg.markers_per_class)] for k in range(cfg.n_classes)]


def target_form(token: str) -> str:
    """Surface form a source-domain word takes in the target domain."""
    return "t" + token


def synth_generate(cfg: SynthConfig) -> tuple[Corpus, list[str], np.ndarray]:
    """Build a labeled source domain and an unmarked target domain.

    Both domains draw class content words with the same distribution. Source
    second arguments open with a connective that names the class with
    probability ``connective_strength`` (a random one otherwise). Target
    instances carry no connective and use their own word forms, whose vectors
    are the source vectors plus one shared offset of norm ``domain_shift``.

    With ``target_cue_rate`` > 0, each target token is, with that probability,
    a cue word of the true class that has no source counterpart and an
    unrelated vector.

    Returns the corpus plus an embedding vocabulary and matrix.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    K = cfg.n_classes
    labels = synth_labels(K)
    content = [[f"w{k}_{j}" for j in range(cfg.content_per_class)] for k in range(K)]
    filler = [f"f{j}" for j in range(cfg.n_filler)]
    markers = marker_tokens(cfg)
    cues = [[f"cue{k}_{j}" for j in range(cfg.target_cue_per_class)] for k in range(K)]
    ratios = np.ones(K) if cfg.class_ratios is None else np.asarray(cfg.class_ratios, dtype=float)
    ratios = ratios / ratios.sum()

    def argument(k: int, with_cues: bool = False) -> list[str]:
        n = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        toks = []
        for _ in range(n):
            if with_cues and rng.random() < cfg.target_cue_rate:
                pool = cues[k]
            elif rng.random() < cfg.content_rate:
                owner = k
                if rng.random() >= cfg.content_purity:
                    # a confusable word from some other class
                    owner = int(rng.integers(K - 1))
                    owner += owner >= k
                pool = content[owner]
            else:
                pool = filler
            toks.append(pool[int(rng.integers(len(pool)))])
        return toks

    def make(split: str, n: int, domain: str) -> list[Instance]:
        ys = rng.choice(K, size=n, p=ratios)
        out = []
        for i, k in enumerate(ys):
            k = int(k)
            with_cues = domain == "target" and cfg.target_cue_rate > 0
            a1, a2 = argument(k, with_cues), argument(k, with_cues)
            if domain == "source":
                mk = k if rng.random() < cfg.connective_strength else int(rng.integers(K))
                pool = markers[mk]
                a2 = [pool[int(rng.integers(len(pool)))]] + a2
            else:
                a1, a2 = [target_form(t) for t in a1], [target_form(t) for t in a2]
            out.append(Instance(tuple(a1), tuple(a2), labels[k], domain, f"{split}-{i:05d}"))
        return out

    splits = {
        "source-train": make("source-train", cfg.n_source_train, "source"),
        "source-dev": make("source-dev", cfg.n_source_dev, "source"),
        "target-train": make("target-train", cfg.n_target_train, "target"),
        "target-dev": make("target-dev", cfg.n_target_dev, "target"),
        "target-test": make("target-test", cfg.n_target_test, "target"),
    }

    d = cfg.embed_dim
    protos = rng.normal(size=(K, d)) * cfg.prototype_scale / math.sqrt(d)
    noise = cfg.noise_scale / math.sqrt(d)
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    for k in range(K):
        for tok in content[k]:
            tokens.append(tok)
            rows.append(protos[k] + rng.normal(size=d) * noise)
    for tok in filler:
        tokens.append(tok)
        rows.append(rng.normal(size=d) * noise)
    for k in range(K):
        for tok in markers[k]:
            tokens.append(tok)
            rows.append(protos[k] + rng.normal(size=d) * noise)
    offset = rng.normal(size=d)
    offset *= cfg.domain_shift / np.linalg.norm(offset)
    n_words = K * cfg.content_per_class + cfg.n_filler
    for tok, row in zip(tokens[:n_words], rows[:n_words]):
        tokens.append(target_form(tok))
        rows.append(row + offset + rng.normal(size=d) * cfg.variant_noise / math.sqrt(d))
    if cfg.target_cue_rate > 0:
        for tok in (t for pool in cues for t in pool):
            tokens.append(target_form(tok))
            rows.append(rng.normal(size=d) * noise)
    return Corpus(splits, labels), tokens, np.array(rows)


def write_synthetic(cfg: SynthConfig, out: str | Path) -> Path:
    out = Path(out)
    corpus, tokens, matrix = synth_generate(cfg)
    write_corpus(corpus, out)
    write_embedding_file(tokens, matrix, out / "embeddings.txt")
    (out / "synth_config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return out


# -- supervision sweep sampling ---------------------------------------------------

@dataclass
class SweepPlan:
    sizes: list[int]
    repeats: int = 3
    seed: int = 0

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise DataError(f"sweep sizes must be strictly increasing: {self.sizes}")
        if not self.sizes or self.sizes[0] < 1:
            raise DataError("sweep sizes must be positive")

    @classmethod
    def from_fractions(cls, fractions: Sequence[float], n_total: int, repeats: int = 3,
                       seed: int = 0) -> "SweepPlan":
        sizes = [max(1, int(round(f * n_total))) for f in fractions]
        if sizes[-1] > n_total:
            raise DataError(f"fraction grid exceeds the {n_total} available instances")
        return cls(sizes, repeats, seed)


def fraction_grid(start: float = 0.1, stop: float = 1.0, step: float = 0.1) -> list[float]:
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def sample_labeled_subset(instances: Sequence[Instance], size: int, seed: int) -> list[Instance]:
    """Uniform sample without replacement, reproducible per seed."""
    if size <= 0:
        raise DataError("labeled subset size must be positive")
    if size > len(instances):
        raise DataError(f"labeled subset size {size} exceeds {len(instances)} available instances")
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(instances), size=size, replace=False))
    return [instances[int(i)] for i in picked]


# -- batching ----------------------------------------------------------------------

@dataclass
class Batch:
    """Right-padded token ids for both arguments, plus labels (-1 = unknown)."""

    ids1: np.ndarray
    len1: np.ndarray
    ids2: np.ndarray
    len2: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def _pad(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.zeros((len(seqs), int(lens.max()) if len(seqs) else 0), dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out, lens


@dataclass
class IndexedSplit:
    """A split converted to embedding-row ids once, batched on demand."""

    ids1: list[np.ndarray]
    ids2: list[np.ndarray]
    labels: np.ndarray
    instances: list[Instance] = field(repr=False, default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def build(cls, instances: Sequence[Instance], lookup, labels: Sequence[str], max_len: int = 80) -> "IndexedSplit":
        for n, inst in enumerate(instances):
            if not inst.arg1 or not inst.arg2:
                raise DataError(f"instance {n} ({inst.id}): empty argument")
        ids1 = [np.asarray(lookup(inst.arg1[:max_len]), dtype=np.int64) for inst in instances]
        ids2 = [np.asarray(lookup(inst.arg2[:max_len]), dtype=np.int64) for inst in instances]
        ys = np.array([-1 if inst.label is None else labels.index(inst.label) for inst in instances],
                      dtype=np.int64)
        return cls(ids1, ids2, ys, list(instances))

    def batch(self, index: Sequence[int] | np.ndarray) -> Batch:
        index = np.asarray(index, dtype=np.int64)
        ids1, len1 = _pad([self.ids1[i] for i in index])
        ids2, len2 = _pad([self.ids2[i] for i in index])
        return Batch(ids1, len1, ids2, len2, self.labels[index])

    def subset(self, index: Sequence[int]) -> "IndexedSplit":
        return IndexedSplit([self.ids1[i] for i in index], [self.ids2[i] for i in index],
                            self.labels[np.asarray(index, dtype=np.int64)],
                            [self.instances[i] for i in index] if self.instances else [])

    def without_labels(self) -> "IndexedSplit":
        return IndexedSplit(self.ids1, self.ids2, np.full_like(self.labels, -1), self.instances)

    def batches(self, batch_size: int, rng: np.random.Generator | None = None) -> Iterable[Batch]:
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start:start + batch_size])
