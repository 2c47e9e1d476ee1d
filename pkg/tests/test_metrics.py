import numpy as np
import pytest

from evidence_select.metrics import accuracy, confusion_matrix, dice, jaccard, macro_f1, median, smoothed


def test_confusion_matrix_rows_are_truth():
    cm = confusion_matrix([0, 0, 1], [0, 1, 1], 2)
    assert cm.tolist() == [[1, 1], [0, 1]]


def test_macro_f1_perfect_and_known_value():
    assert macro_f1([0, 1, 2], [0, 1, 2], 3) == 1.0
    # class 0: tp 1, fp 0, fn 1 -> 2/3; class 1: tp 1, fp 1, fn 0 -> 2/3
    assert macro_f1([0, 0, 1], [0, 1, 1], 2) == pytest.approx(2 / 3)


def test_macro_f1_counts_absent_classes_as_zero():
    assert macro_f1([0, 0], [0, 0], 2) == pytest.approx(0.5)


def test_empty_inputs():
    assert macro_f1([], [], 3) == 0.0
    assert accuracy([], []) == 0.0


def test_accuracy():
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75


def test_jaccard_and_dice():
    assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)
    assert jaccard([], []) == 1.0
    assert dice({1, 2}, {2, 3}) == 0.5
    assert dice([], []) == 1.0
    assert dice([1], []) == 0.0


def test_smoothed_trailing_window():
    out = smoothed([1.0, 2.0, 3.0, 4.0], window=2)
    assert out.tolist() == [1.0, 1.5, 2.5, 3.5]
    assert smoothed([], 3).size == 0


def test_median():
    assert median([3.0, 1.0, 2.0]) == 2.0
    assert np.isnan(median([]))


def reference_macro_f1(y_true, y_pred, num_classes):
    scores = []
    for c in range(num_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return sum(scores) / num_classes


def test_macro_f1_matches_per_class_counting():
    gen = np.random.default_rng(2024)
    for _ in range(200):
        num_classes = int(gen.integers(2, 6))
        n = int(gen.integers(1, 40))
        y_true = gen.integers(0, num_classes, n).tolist()
        y_pred = gen.integers(0, num_classes, n).tolist()
        assert macro_f1(y_true, y_pred, num_classes) == pytest.approx(
            reference_macro_f1(y_true, y_pred, num_classes), abs=1e-12
        )
        cm = confusion_matrix(y_true, y_pred, num_classes)
        assert cm.sum() == n
        assert np.trace(cm) == sum(t == p for t, p in zip(y_true, y_pred))
