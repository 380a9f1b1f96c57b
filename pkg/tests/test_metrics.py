from __future__ import annotations

import json

import numpy as np
import pytest

from colearn.errors import ConfigError
from colearn.metrics import evaluate, h_score


class TestHScore:
    def test_hand_value(self):
        assert abs(h_score(0.8, 0.6) - 0.6857142857142857) < 1e-15

    def test_zero_side_collapses(self):
        assert h_score(0.0, 0.9) == 0.0
        assert h_score(0.9, 0.0) == 0.0

    def test_symmetric(self):
        assert h_score(0.3, 0.7) == h_score(0.7, 0.3)

    def test_equal_inputs_fixed_point(self):
        assert abs(h_score(0.6, 0.6) - 0.6) < 1e-15

    def test_below_arithmetic_mean(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.uniform(0.05, 1.0, size=2)
            assert h_score(a, b) <= (a + b) / 2 + 1e-12


class TestEvaluate:
    def test_micro_macro_disagree_on_imbalance(self):
        truth = np.array([0] * 99 + [1])
        preds = np.zeros(100, dtype=int)
        rep = evaluate(preds, truth)
        assert abs(rep.micro_acc - 0.99) < 1e-12
        assert abs(rep.macro_acc - 0.5) < 1e-12
        assert rep.per_class_acc.tolist() == [1.0, 0.0]

    def test_perfect_prediction(self):
        truth = np.array([0, 1, 2, 1])
        rep = evaluate(truth, truth)
        assert rep.micro_acc == 1.0
        assert rep.macro_acc == 1.0
        assert np.trace(rep.confusion) == 4

    def test_confusion_layout(self):
        truth = np.array([0, 0, 1])
        preds = np.array([0, 1, 1])
        rep = evaluate(preds, truth)
        # rows index truth, columns index prediction
        assert rep.confusion.tolist() == [[1, 1], [0, 1]]
        assert rep.confusion.sum() == truth.size

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        truth = rng.integers(0, 4, size=60)
        preds = rng.integers(0, 4, size=60)
        base = evaluate(preds, truth)
        perm = rng.permutation(60)
        shuffled = evaluate(preds[perm], truth[perm])
        assert base.micro_acc == shuffled.micro_acc
        assert base.macro_acc == shuffled.macro_acc
        assert np.array_equal(base.confusion, shuffled.confusion)

    def test_explicit_class_count_pads_matrix(self):
        rep = evaluate(np.array([0, 1]), np.array([0, 1]), n_classes=5)
        assert rep.confusion.shape == (5, 5)
        # absent classes stay out of the macro average
        assert rep.macro_acc == 1.0

    def test_explicit_class_count_bounds_labels(self):
        with pytest.raises(ConfigError):
            evaluate(np.array([0, 4]), np.array([0, 1]), n_classes=3)

    def test_negative_labels_rejected(self):
        with pytest.raises(ConfigError):
            evaluate(np.array([0, -1]), np.array([0, 1]))
        with pytest.raises(ConfigError):
            evaluate(np.array([0, 1]), np.array([0, -1]))

    def test_empty_and_mismatched_rejected(self):
        with pytest.raises(ConfigError):
            evaluate(np.array([], dtype=int), np.array([], dtype=int))
        with pytest.raises(ConfigError):
            evaluate(np.array([0, 1]), np.array([0]))

    def test_macro_equals_mean_of_present_class_accs(self):
        rng = np.random.default_rng(3)
        truth = rng.integers(0, 5, size=200)
        preds = rng.integers(0, 5, size=200)
        rep = evaluate(preds, truth)
        manual = np.mean(
            [np.mean(preds[truth == c] == c) for c in np.unique(truth)]
        )
        assert abs(rep.macro_acc - manual) < 1e-12


class TestKnownMask:
    def test_h_score_from_mask(self):
        truth = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
        preds = np.array([0, 0, 0, 0, 1, 1, 1, 1, 0, 0])
        known = np.array([True] * 5 + [False] * 5)
        rep = evaluate(preds, truth, known_mask=known)
        assert abs(rep.h_score - h_score(0.8, 0.6)) < 1e-12

    def test_empty_unknown_side_scores_zero(self):
        truth = np.array([0, 1])
        rep = evaluate(truth, truth, known_mask=np.array([True, True]))
        assert rep.h_score == 0.0

    def test_mask_length_checked(self):
        with pytest.raises(ConfigError):
            evaluate(np.array([0, 1]), np.array([0, 1]), known_mask=np.array([True]))

    def test_no_mask_means_no_h_score(self):
        rep = evaluate(np.array([0]), np.array([0]))
        assert rep.h_score is None


class TestSerialization:
    def test_json_round_trip_values(self):
        truth = np.array([0, 1, 1, 0])
        preds = np.array([0, 1, 0, 0])
        rep = evaluate(preds, truth, known_mask=np.array([True, True, False, False]))
        d = json.loads(rep.to_json())
        assert d["micro_acc"] == rep.micro_acc
        assert d["confusion"] == [[2, 0], [1, 1]]
        assert "h_score" in d

    def test_json_sorted_and_newline_terminated(self):
        rep = evaluate(np.array([0]), np.array([0]))
        text = rep.to_json()
        assert text.endswith("\n")
        keys = list(json.loads(text))
        assert keys == sorted(keys)
