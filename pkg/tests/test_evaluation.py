import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discoadapt.evaluation import (
    EvalReport,
    SweepResult,
    confusion_matrix,
    emit_report,
    emit_sweep,
    macro_f1,
    macro_f1_from_labels,
    mean_and_stderr,
    normalize_rows,
    per_class_f1,
    read_csv_table,
)

# per-class F1 rows (Temporal, Contingency, Comparison, Expansion) with their published macro averages
REFERENCE_ROWS = [
    ((31.25, 48.04, 25.15, 59.15), 40.90),
    ((26.19, 34.20, 25.74, 54.70), 35.21),
    ((19.26, 41.39, 25.74, 68.08), 38.62),
    ((22.22, 22.35, 23.06, 57.86), 31.37),
    ((25.53, 41.02, 30.35, 65.38), 40.57),
]


@pytest.mark.parametrize("row, expected", REFERENCE_ROWS)
def test_macro_f1_reference_rows(row, expected):
    assert abs(macro_f1(row) - expected) <= 0.005


def test_perfect_and_hopeless_predictions():
    gold = [0, 1, 2, 3, 0, 1]
    assert macro_f1_from_labels(gold, gold, 4) == 1.0
    assert macro_f1_from_labels(gold, [1, 2, 3, 0, 1, 2], 4) == 0.0


def test_absent_class_scores_zero():
    # class 3 never occurs and is never predicted: P + R = 0, so F1 = 0
    f1 = per_class_f1(confusion_matrix([0, 1, 2], [0, 1, 2], 4))
    assert list(f1) == [1.0, 1.0, 1.0, 0.0]


def test_label_range_and_length_checks():
    with pytest.raises(ValueError, match="out of range"):
        confusion_matrix([0, 4], [0, 1], 4)
    with pytest.raises(ValueError, match="length"):
        confusion_matrix([0, 1], [0], 4)
    with pytest.raises(ValueError):
        macro_f1([])


def brute_force_f1(gold, pred, K):
    out = []
    for k in range(K):
        tp = sum(g == k and p == k for g, p in zip(gold, pred))
        np_ = sum(p == k for p in pred)
        ng = sum(g == k for g in gold)
        prec = tp / np_ if np_ else 0.0
        rec = tp / ng if ng else 0.0
        out.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6).flatmap(lambda K: st.tuples(
    st.just(K), st.lists(st.tuples(st.integers(0, K - 1), st.integers(0, K - 1)), min_size=1, max_size=60))))
def test_f1_matches_brute_force_and_bounds(case):
    K, pairs = case
    gold, pred = [g for g, _ in pairs], [p for _, p in pairs]
    cm = confusion_matrix(gold, pred, K)
    assert cm.sum() == len(pairs)
    np.testing.assert_allclose(per_class_f1(cm), brute_force_f1(gold, pred, K), atol=1e-12)
    m = macro_f1_from_labels(gold, pred, K)
    assert 0.0 <= m <= 1.0
    rows = normalize_rows(cm)
    for k in range(K):
        total = rows[k].sum()
        assert total == 0.0 if cm[k].sum() == 0 else abs(total - 1.0) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=8))
def test_macro_is_the_plain_mean(scores):
    assert macro_f1(scores) == pytest.approx(sum(scores) / len(scores), abs=1e-9)


def test_mean_and_stderr():
    assert mean_and_stderr([3.0]) == (3.0, 0.0)
    m, se = mean_and_stderr([1.0, 2.0, 3.0])
    assert m == 2.0 and se == pytest.approx(1.0 / math.sqrt(3))


def test_report_files(tmp_path):
    labels = ("Temporal", "Contingency", "Comparison", "Expansion")
    rep = EvalReport.from_predictions([0, 1, 2, 3, 3], [0, 1, 3, 3, 3], labels, "abc", 0)
    paths = emit_report({"full system": rep}, tmp_path)
    head, rows = read_csv_table(tmp_path / "f1.csv")
    assert head[:5] == ["system", *labels] and rows[0][0] == "full system"
    assert float(rows[0][5]) == pytest.approx(100 * rep.macro_f1, abs=1e-4)
    _, cm_rows = read_csv_table(tmp_path / "confusion_full_system_normalized.csv")
    assert [float(x) for x in cm_rows[2][1:]] == [0.0, 0.0, 0.0, 1.0]
    assert all(p.exists() for p in paths)
    assert "Macro F1" in (tmp_path / "summary.txt").read_text()


def test_sweep_outputs(tmp_path):
    sizes = [10, 20, 30]
    result = SweepResult(sizes, {
        "supervised baseline": [[30.0, 32.0], [35.0, 36.0], [40.0, 41.0]],
        "full system": [[50.0, 52.0], [55.0, 56.0], [60.0, 61.0]],
    })
    paths = emit_sweep(result, tmp_path)
    head, rows = read_csv_table(paths[0])
    assert head == ["system", "size", "mean_macro_f1", "stderr", "n_runs"]
    assert len(rows) == 6 and rows[0][:3] == ["supervised baseline", "10", "31.0000"]
    svg = ET.fromstring(paths[1].read_text())
    lines = svg.findall("{http://www.w3.org/2000/svg}polyline")
    assert [line.get("data-system") for line in lines] == ["supervised baseline", "full system"]
    assert all(len(line.get("points").split()) == 3 for line in lines)
