"""Per-class / macro F1, confusion matrices, and report files (CSV, text, SVG)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def confusion_matrix(gold: Sequence[int], pred: Sequence[int], K: int) -> np.ndarray:
    """Counts with rows = gold class, columns = predicted class."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ValueError(f"gold and predicted label lists differ in length: {gold.size} vs {pred.size}")
    for name, arr in (("gold", gold), ("predicted", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            raise ValueError(f"{name} label index out of range for {K} classes")
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (gold, pred), 1)
    return cm


def normalize_rows(cm: np.ndarray) -> np.ndarray:
    """Divide each row by its gold count; rows of absent classes stay zero."""
    cm = np.asarray(cm, dtype=np.float64)
    totals = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, totals, out=np.zeros_like(cm), where=totals > 0)


def precision_recall_f1(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    pred_tot = cm.sum(axis=0)
    gold_tot = cm.sum(axis=1)
    p = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    r = np.divide(tp, gold_tot, out=np.zeros_like(tp), where=gold_tot > 0)
    denom = p + r
    f1 = np.divide(2 * p * r, denom, out=np.zeros_like(tp), where=denom > 0)
    return p, r, f1


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    """F1 = 2PR/(P+R) per class, 0 when P + R = 0."""
    return precision_recall_f1(cm)[2]


def macro_f1(scores: Sequence[float]) -> float:
    scores = list(scores)
    if not scores:
        raise ValueError("macro F1 of an empty score list")
    return math.fsum(scores) / len(scores)


def macro_f1_from_labels(gold: Sequence[int], pred: Sequence[int], K: int) -> float:
    return macro_f1(per_class_f1(confusion_matrix(gold, pred, K)))


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard error (ddof=1); SE is 0 for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class EvalReport:
    labels: tuple[str, ...]
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    n: int
    config_hash: str = ""
    seed: int | None = None

    @classmethod
    def from_predictions(cls, gold, pred, labels: Sequence[str], config_hash: str = "",
                         seed: int | None = None) -> "EvalReport":
        K = len(labels)
        cm = confusion_matrix(gold, pred, K)
        p, r, f1 = precision_recall_f1(cm)
        return cls(tuple(labels), cm, p, r, f1, macro_f1(f1), int(cm.sum()), config_hash, seed)

    @property
    def normalized(self) -> np.ndarray:
        return normalize_rows(self.confusion)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "n": self.n,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }


# -- emission -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.4f}"


def write_f1_table(rows: Mapping[str, EvalReport], path: str | Path) -> None:
    """One row per system: per-class F1 then macro F1 (percent)."""
    rows = dict(rows)
    labels = next(iter(rows.values())).labels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system", *labels, "macro_f1", "config_hash", "seed"])
        for name, rep in rows.items():
            w.writerow([name, *(_fmt(100 * f) for f in rep.f1), _fmt(100 * rep.macro_f1),
                        rep.config_hash, "" if rep.seed is None else rep.seed])


def write_confusion(report: EvalReport, path: str | Path, normalized: bool = True) -> None:
    cm = report.normalized if normalized else report.confusion
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gold\\pred", *report.labels])
        for lab, row in zip(report.labels, cm):
            w.writerow([lab, *(_fmt(float(x)) for x in row)])


def read_csv_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def text_table(rows: Mapping[str, EvalReport]) -> str:
    """Fixed-width per-class / macro F1 table (percent)."""
    rows = dict(rows)
    labels = next(iter(rows.values())).labels
    width = max(len(n) for n in rows) + 2
    head = "".ljust(width) + "".join(l[:11].rjust(12) for l in labels) + "Macro F1".rjust(12)
    lines = [head, "-" * len(head)]
    for name, rep in rows.items():
        lines.append(name.ljust(width) + "".join(f"{100 * f:12.2f}" for f in rep.f1)
                     + f"{100 * rep.macro_f1:12.2f}")
    return "\n".join(lines) + "\n"


@dataclass
class SweepResult:
    """Macro F1 (percent) per system, per subset size, per repetition."""

    sizes: list[int]
    scores: dict[str, list[list[float]]] = field(default_factory=dict)

    def summary(self) -> dict[str, list[tuple[float, float]]]:
        return {name: [mean_and_stderr(v) for v in per_size] for name, per_size in self.scores.items()}

    def to_json(self) -> str:
        return json.dumps({"sizes": self.sizes, "scores": self.scores}, indent=2, sort_keys=True)


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system", "size", "mean_macro_f1", "stderr", "n_runs"])
        for name, stats in result.summary().items():
            for size, (m, se), runs in zip(result.sizes, stats, result.scores[name]):
                w.writerow([name, size, _fmt(m), _fmt(se), len(runs)])


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def sweep_svg(result: SweepResult, title: str = "macro F1 vs labeled target instances") -> str:
    """Static line chart with standard-error bars, one polyline per system."""
    W, H, L, R, T, B = 640, 420, 70, 170, 40, 60
    stats = result.summary()
    xs = result.sizes
    lo = min(m - se for s in stats.values() for m, se in s)
    hi = max(m + se for s in stats.values() for m, se in s)
    if hi - lo < 1e-9:
        lo, hi = lo - 1, hi + 1
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    x0, x1 = min(xs), max(xs)
    span = (x1 - x0) or 1

    def px(x):
        return L + (x - x0) / span * (W - L - R)

    def py(y):
        return T + (hi - y) / (hi - lo) * (H - T - B)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
           f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    for x in xs:
        out.append(f'<text x="{px(x):.1f}" y="{H - B + 16}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{x}</text>')
    for i in range(6):
        y = lo + i * (hi - lo) / 5
        out.append(f'<text x="{L - 6}" y="{py(y) + 3:.1f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{y:.1f}</text>')
    out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 15}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">labeled target instances</text>')
    out.append(f'<text x="16" y="{(T + H - B) / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12" transform="rotate(-90 16 {(T + H - B) / 2:.1f})">macro F1 (%)</text>')
    for i, (name, s) in enumerate(stats.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(x):.1f},{py(m):.1f}" for x, (m, _) in zip(xs, s))
        out.append(f'<polyline class="series" data-system="{name}" fill="none" stroke="{color}" '
                   f'stroke-width="2" points="{pts}"/>')
        for x, (m, se) in zip(xs, s):
            out.append(f'<line x1="{px(x):.1f}" y1="{py(m - se):.1f}" x2="{px(x):.1f}" y2="{py(m + se):.1f}" '
                       f'stroke="{color}"/>')
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(m):.1f}" r="3" fill="{color}"/>')
        ly = T + 10 + 18 * i
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - R + 35}" y="{ly + 4}" font-family="sans-serif" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(reports: Mapping[str, EvalReport], out: str | Path) -> list[Path]:
    """F1 CSV, one normalized and one raw confusion CSV per system, text summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "f1.csv", out / "summary.txt"]
    write_f1_table(reports, written[0])
    written[1].write_text(text_table(reports))
    for name, rep in reports.items():
        slug = "".join(c if c.isalnum() else "_" for c in name).strip("_").lower()
        for normalized, tag in ((True, "normalized"), (False, "counts")):
            p = out / f"confusion_{slug}_{tag}.csv"
            write_confusion(rep, p, normalized)
            written.append(p)
    (out / "reports.json").write_text(json.dumps({k: v.to_dict() for k, v in reports.items()}, indent=2) + "\n")
    written.append(out / "reports.json")
    return written


def emit_sweep(result: SweepResult, out: str | Path) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "sweep.csv", out / "sweep.svg", out / "sweep.json"]
    write_sweep_csv(result, paths[0])
    paths[1].write_text(sweep_svg(result))
    paths[2].write_text(result.to_json() + "\n")
    return paths
