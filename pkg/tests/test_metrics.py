from fractions import Fraction

import numpy as np
import pytest

from plastinet import metrics as M


def pairwise_auc(labels, scores):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def table3_predictions():
    """120 cases engineered to TN=44, FP=16, FN=2, TP=58."""
    labels = [0] * 60 + [1] * 60
    probs = [0.2] * 44 + [0.7] * 16 + [0.4] * 2 + [0.9] * 58
    return np.array(labels), np.array(probs)


class TestConfusion:
    def test_perfect(self):
        cm = M.confusion([1, 0, 1], [1.0, 0.0, 1.0])
        assert cm.fp == 0 and cm.fn == 0 and cm.tp == 2 and cm.tn == 1

    def test_tie_goes_positive(self):
        cm = M.confusion([0, 1, 0, 1], [0.5] * 4)
        assert cm.tp == 2 and cm.fp == 2 and cm.tn == 0 and cm.fn == 0

    def test_table3(self):
        assert M.confusion(*table3_predictions()) == M.ConfusionMatrix(tp=58, tn=44, fp=16, fn=2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            M.confusion([0, 1], [0.1])


class TestDerive:
    def test_table2_values(self):
        r = M.derive(M.ConfusionMatrix(tp=58, tn=44, fp=16, fn=2)).rounded(4)
        assert r["accuracy"] == 0.8500
        assert r["sensitivity"] == 0.9667
        assert r["specificity"] == 0.7333
        assert r["ppv"] == 0.7838
        assert r["npv"] == 0.9565
        assert r["f1"] == 0.8657

    def test_exact_fractions(self):
        r = M.derive(M.ConfusionMatrix(tp=58, tn=44, fp=16, fn=2))
        assert r.exact["sensitivity"] == Fraction(58, 60)
        assert r.exact["ppv"] == Fraction(58, 74)
        assert r.exact["npv"] == Fraction(44, 46)
        # complements hold exactly before rounding
        assert r.exact["sensitivity"] + Fraction(2, 60) == 1
        assert r.exact["specificity"] + Fraction(16, 60) == 1

    def test_perfect(self):
        r = M.derive(M.ConfusionMatrix(tp=1, tn=1, fp=0, fn=0))
        assert all(getattr(r, k) == 1.0 for k in M.EvalReport.RATIO_FIELDS)

    def test_anti(self):
        r = M.derive(M.ConfusionMatrix(tp=0, tn=0, fp=1, fn=1))
        assert r.accuracy == 0.0 and r.f1 == 0.0

    def test_undefined_not_zero(self):
        r = M.derive(M.ConfusionMatrix(tp=0, tn=5, fp=0, fn=0))
        assert r.sensitivity is None and r.ppv is None
        assert r.specificity == 1.0


class TestAUC:
    def test_separated(self):
        assert M.auc_roc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_all_tied(self):
        assert M.auc_roc([0, 1, 0, 1], [0.3] * 4) == 0.5

    def test_single_class(self):
        with pytest.raises(M.UndefinedMetricError):
            M.auc_roc([1, 1], [0.2, 0.3])

    def test_random_against_pairwise(self, rng):
        labels = rng.integers(0, 2, size=200)
        scores = rng.random(200)
        assert M.auc_roc(labels, scores) == pytest.approx(pairwise_auc(labels, scores), abs=1e-12)

    def test_with_ties_against_pairwise(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 300))
            labels = rng.integers(0, 2, size=n)
            labels[:2] = [0, 1]
            scores = rng.integers(0, 10, size=n) / 10
            assert M.auc_roc(labels, scores) == pytest.approx(pairwise_auc(labels, scores), abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        labels = rng.integers(0, 2, size=150)
        labels[:2] = [0, 1]
        scores = rng.normal(size=150)
        base = M.auc_roc(labels, scores)
        assert M.auc_roc(labels, np.exp(scores)) == base
        assert M.auc_roc(labels, 3.0 * scores + 7.0) == base


class TestROC:
    def test_two_points(self):
        assert M.roc_points([1, 0], [0.9, 0.1]) == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]

    def test_area_matches_rank_auc(self, rng):
        for _ in range(20):
            labels = rng.integers(0, 2, size=120)
            labels[:2] = [0, 1]
            scores = np.round(rng.random(120), 2)
            pts = M.roc_points(labels, scores)
            assert M.trapezoid_area(pts) == pytest.approx(M.auc_roc(labels, scores), abs=1e-12)

    def test_staircase_monotone(self, rng):
        labels = rng.integers(0, 2, size=80)
        labels[:2] = [0, 1]
        pts = np.array(M.roc_points(labels, rng.random(80)))
        assert tuple(pts[0]) == (0.0, 0.0) and tuple(pts[-1]) == (1.0, 1.0)
        assert np.all(np.diff(pts[:, 0]) >= 0) and np.all(np.diff(pts[:, 1]) >= 0)

    def test_reversed_scores_zero_area(self):
        labels = [0, 0, 1, 1]
        assert M.trapezoid_area(M.roc_points(labels, [0.9, 0.8, 0.2, 0.1])) == 0.0


class TestEmitters:
    def test_report_round_trip(self, tmp_path):
        labels, probs = table3_predictions()
        rep = M.evaluate(labels, probs)
        M.write_report(tmp_path / "r.txt", rep)
        M.write_confusion_csv(tmp_path / "cm.csv", rep.cm)
        kv = M.read_report(tmp_path / "r.txt")
        cm = M.read_confusion_csv(tmp_path / "cm.csv")
        assert cm == rep.cm
        again = M.derive(cm)
        for k in M.EvalReport.RATIO_FIELDS:
            assert kv[k] == f"{getattr(again, k):.6f}"

    def test_undefined_written(self, tmp_path):
        rep = M.derive(M.ConfusionMatrix(tp=0, tn=3, fp=0, fn=0))
        M.write_report(tmp_path / "r.txt", rep)
        assert M.read_report(tmp_path / "r.txt")["sensitivity"] == "undefined"

    def test_svg(self):
        svg = M.roc_svg([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)], 1.0)
        assert 'viewBox="0 0 640 480"' in svg and "<polyline" in svg
