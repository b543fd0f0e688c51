"""Calibration metrics, ranking, logit histograms, agreement and entropy dynamics."""

import math
from pathlib import Path

import numpy as np
import pytest

from sslcal.cli.analyze import read_scores_csv
from sslcal.lib.calibration import (
    AgreementTracker,
    adaptive_ece,
    agreement_ratio,
    calibration_report,
    classwise_ece,
    ece,
    friedman_rank,
    logit_stats,
    reliability,
    simplex_dynamics,
)
from sslcal.lib.errors import ConfigError, NumericError, ShapeError
from sslcal.lib.pseudo_label import PseudoLabelDecision, DecisionBatch

DATA = Path(__file__).parent / "data"

CONF = np.array([0.2, 0.4, 0.5, 0.6, 0.8, 0.9])
HIT = np.array([1, 0, 1, 1, 0, 1], dtype=bool)


# ── Brute-force oracles ──

def _oracle_ece(conf, hit, n_bins):
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    total = 0.0
    for b in range(n_bins):
        lo, hi = edges[b], edges[b + 1]
        members = [i for i, c in enumerate(conf) if lo < c <= hi or (b == 0 and c == 0.0)]
        if members:
            total += abs(sum(hit[i] for i in members) - sum(conf[i] for i in members))
    return total / len(conf)


def _oracle_aece(conf, hit, n_bins):
    n = len(conf)
    ordered = sorted(conf)
    bounds = [ordered[math.ceil(j * n / n_bins) - 1] for j in range(1, n_bins)]
    groups = {}
    for c, h in zip(conf, hit):
        b = sum(1 for x in bounds if x < c)
        s = groups.setdefault(b, [0.0, 0.0])
        s[0] += h
        s[1] += c
    return sum(abs(h - c) for h, c in groups.values()) / n


def _oracle_cece(probs, labels, n_bins):
    k = probs.shape[1]
    return sum(_oracle_ece(list(probs[:, j]), list(labels == j), n_bins) for j in range(k)) / k


class TestEce:

    def test_overconfident(self):
        assert ece(np.ones(10), np.arange(10) % 2 == 0) == pytest.approx(0.5)

    def test_matched_bins(self):
        conf = np.array([0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75])
        hit = np.array([1, 0, 0, 0, 1, 1, 1, 0], dtype=bool)
        assert ece(conf, hit, 2) == pytest.approx(0.0, abs=1e-15)

    def test_hand_fixture(self):
        assert ece(CONF, HIT, 2) == pytest.approx(0.2, abs=1e-12)
        assert ece(CONF, HIT, 3) == pytest.approx(1 / 3, abs=1e-12)

    def test_zero_confidence_in_first_bin(self):
        bins = reliability([0.0, 1.0], [False, True], 4)
        np.testing.assert_array_equal(bins.count, [1, 0, 0, 1])

    def test_perfect_one_hot_predictor(self):
        assert ece(np.ones(20), np.ones(20, dtype=bool)) == 0.0

    def test_permutation_invariant(self):
        rng = np.random.default_rng(42)
        conf = rng.uniform(size=300)
        hit = rng.uniform(size=300) < conf
        perm = rng.permutation(300)
        assert ece(conf[perm], hit[perm]) == pytest.approx(ece(conf, hit), abs=1e-12)

    def test_invalid(self):
        with pytest.raises(NumericError):
            ece([], [])
        with pytest.raises(ConfigError):
            ece([0.5], [True], 0)
        with pytest.raises(ShapeError):
            ece([0.5, 0.6], [True])
        with pytest.raises(NumericError):
            ece([1.5], [True])


class TestAdaptiveEce:

    def test_constant_confidence(self):
        conf = np.full(10, 0.7)
        hit = np.arange(10) < 5
        assert adaptive_ece(conf, hit) == pytest.approx(0.2, abs=1e-12)

    def test_hand_fixture(self):
        assert adaptive_ece(CONF, HIT, 3) == pytest.approx(1 / 3, abs=1e-12)
        assert adaptive_ece(CONF, HIT, 2) == pytest.approx(0.2, abs=1e-12)

    def test_calibrated_predictor(self):
        rng = np.random.default_rng(42)
        conf = rng.uniform(0.3, 1.0, size=200_000)
        hit = rng.uniform(size=conf.size) < conf
        assert adaptive_ece(conf, hit) < 0.01


class TestClasswiseEce:

    def test_hand_fixture(self):
        probs = np.array([[0.8, 0.2], [0.6, 0.4], [0.3, 0.7]])
        assert classwise_ece(probs, [0, 1, 1], 2) == pytest.approx(0.7 / 3, abs=1e-12)

    def test_one_hot_correct(self):
        labels = np.array([0, 2, 1, 2])
        assert classwise_ece(np.eye(3)[labels], labels) == 0.0

    def test_calibrated_two_class(self):
        rng = np.random.default_rng(42)
        p1 = rng.uniform(size=200_000)
        labels = (rng.uniform(size=p1.size) < p1).astype(int)
        probs = np.column_stack([1.0 - p1, p1])
        assert classwise_ece(probs, labels) < 0.01

    def test_misaligned(self):
        with pytest.raises(ShapeError):
            classwise_ece(np.eye(2), [0])


class TestOracle:

    def test_random_fixtures(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 51))
            k = int(rng.integers(2, 5))
            n_bins = int(rng.integers(1, 16))
            probs = rng.dirichlet(np.full(k, 0.7), size=n)
            probs = np.round(probs, 2)
            probs[:, -1] = 1.0 - probs[:, :-1].sum(axis=1)
            probs = np.clip(probs, 0.0, 1.0)
            probs /= probs.sum(axis=1, keepdims=True)
            labels = rng.integers(0, k, size=n)
            pred = probs.argmax(axis=1)
            conf = probs[np.arange(n), pred]
            hit = pred == labels

            report = calibration_report(probs, labels, n_bins)
            assert report.ece == pytest.approx(_oracle_ece(list(conf), list(hit), n_bins),
                                               abs=1e-12)
            assert report.aece == pytest.approx(_oracle_aece(list(conf), list(hit), n_bins),
                                                abs=1e-12)
            assert report.cece == pytest.approx(_oracle_cece(probs, labels, n_bins), abs=1e-12)
            for value in (report.ece, report.aece, report.cece):
                assert 0.0 <= value <= 1.0


class TestReliability:

    def test_bins_partition(self):
        rng = np.random.default_rng(0)
        conf = rng.uniform(size=500)
        bins = reliability(conf, rng.uniform(size=500) < conf, 10)
        assert bins.count.sum() == 500
        assert bins.n_bins == 10
        np.testing.assert_allclose(bins.lower[1:], bins.upper[:-1])
        assert bins.lower[0] == 0.0 and bins.upper[-1] == 1.0
        assert np.all((bins.accuracy >= 0) & (bins.accuracy <= 1))

    def test_hand_fixture(self):
        bins = reliability(CONF, HIT, 2)
        np.testing.assert_array_equal(bins.count, [3, 3])
        np.testing.assert_allclose(bins.confidence, [1.1 / 3, 2.3 / 3])
        np.testing.assert_allclose(bins.accuracy, [2 / 3, 2 / 3])

    def test_empty_bins_are_zero(self):
        bins = reliability([0.95, 0.97], [True, False], 5)
        np.testing.assert_array_equal(bins.count, [0, 0, 0, 0, 2])
        np.testing.assert_array_equal(bins.confidence[:4], 0.0)
        np.testing.assert_array_equal(bins.accuracy[:4], 0.0)
        assert len(bins.rows()) == 5


class TestReport:

    def test_perfect_predictor(self):
        labels = np.array([0, 1, 2, 1])
        report = calibration_report(np.eye(3)[labels], labels)
        assert report.ece == report.cece == report.error_rate == 0.0
        assert report.n_samples == 4

    def test_error_rate(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
        report = calibration_report(probs, [0, 1, 1, 0], 5)
        assert report.error_rate == 0.5
        assert set(report.to_dict()) >= {"ece", "aece", "cece", "error_rate", "bins"}

    def test_empty(self):
        with pytest.raises(NumericError):
            calibration_report(np.zeros((0, 3)), [])


class TestFriedmanRank:

    def test_mean_rank(self):
        np.testing.assert_allclose(friedman_rank([[0.1, 0.5], [0.2, 0.3]]), [1.5, 1.5])

    def test_ties_get_average(self):
        np.testing.assert_allclose(friedman_rank([[1.0], [1.0], [2.0]]), [1.5, 1.5, 3.0])

    def test_higher_is_better(self):
        ranks = friedman_rank([[90.0, 0.1], [80.0, 0.2]], [False, True])
        np.testing.assert_allclose(ranks, [1.0, 2.0])

    def test_shift_invariant(self):
        rng = np.random.default_rng(42)
        scores = rng.uniform(size=(6, 4))
        shifted = scores + rng.uniform(-5, 5, size=(1, 4))
        np.testing.assert_array_equal(friedman_rank(scores), friedman_rank(shifted))

    def test_invalid(self):
        with pytest.raises(NumericError):
            friedman_rank(np.zeros((0, 3)))
        with pytest.raises(NumericError):
            friedman_rank([[1.0, np.nan], [2.0, 3.0]])
        with pytest.raises(ShapeError):
            friedman_rank([[1.0, 2.0]], [True])

    def test_published_scores(self):
        methods, settings, scores = read_scores_csv(DATA / "method_scores.csv")
        assert len(methods) == 10 and len(settings) == 12
        ranks = friedman_rank(scores)
        order = [methods[i] for i in np.argsort(ranks, kind="stable")]
        assert order[:2] == ["FreeMatch+Ours", "FlexMatch+Ours"]
        assert order[-1] == "DeFixMatch"
        assert ranks[methods.index("FreeMatch+Ours")] == pytest.approx(25 / 12)
        for plain in ("FixMatch", "FlexMatch", "FreeMatch"):
            assert ranks[methods.index(plain + "+Ours")] < ranks[methods.index(plain)]


class TestLogitStats:

    def test_all_zero(self):
        stats = logit_stats(np.zeros((3, 2)), [0, 1, 1])
        assert stats.logit_range == 0.0
        np.testing.assert_array_equal(stats.edges, [0.0, 0.5])
        np.testing.assert_array_equal(stats.counts[:, :, 0], [[1, 1], [2, 2]])
        assert stats.mean_max_distance == 0.0

    def test_two_sample_fixture(self):
        stats = logit_stats([[0.2, 1.3], [-0.6, 0.4]], [0, 1])
        np.testing.assert_allclose(stats.edges, [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5])
        np.testing.assert_array_equal(stats.counts[0, 0], [0, 0, 1, 0, 0])
        np.testing.assert_array_equal(stats.counts[0, 1], [0, 0, 0, 0, 1])
        np.testing.assert_array_equal(stats.counts[1, 0], [1, 0, 0, 0, 0])
        np.testing.assert_array_equal(stats.counts[1, 1], [0, 0, 1, 0, 0])
        assert stats.logit_min == -0.6
        assert stats.logit_max == 1.3
        assert stats.logit_range == pytest.approx(1.9)
        np.testing.assert_allclose(stats.class_max_distance, [1.1, 1.0])
        assert stats.mean_max_distance == pytest.approx(1.05)

    def test_counts_per_class(self):
        rng = np.random.default_rng(42)
        logits = rng.normal(scale=4.0, size=(200, 4))
        labels = rng.integers(0, 4, size=200)
        stats = logit_stats(logits, labels)
        for c in range(4):
            assert stats.counts[c].sum() == stats.class_counts[c] * 4
        assert stats.logit_range == pytest.approx(logits.max() - logits.min())
        assert len(stats.rows()) == stats.counts.size

    def test_invalid(self):
        with pytest.raises(ShapeError):
            logit_stats(np.zeros((2, 3)), [0, 3])
        with pytest.raises(ConfigError):
            logit_stats(np.zeros((2, 3)), [0, 1], bin_width=0.0)


def _decisions(selected, agree):
    return DecisionBatch.from_records([
        PseudoLabelDecision(0, bool(s), bool(a), 0.99, 0 if a else 1)
        for s, a in zip(selected, agree)
    ])


class TestAgreement:

    def test_all_agree(self):
        assert agreement_ratio([_decisions([1, 1, 1], [1, 1, 1])]) == [1.0]

    def test_none_selected(self):
        assert agreement_ratio([_decisions([0, 0], [1, 0])]) == [None]

    def test_window(self):
        stream = [_decisions([1, 1], [1, 1]), _decisions([1, 1, 0], [1, 0, 1])]
        assert agreement_ratio(stream, window=2) == [0.75]
        assert agreement_ratio(stream, window=1) == [1.0, 0.5]

    def test_trailing_partial_window(self):
        stream = [_decisions([1], [1])] * 3
        assert agreement_ratio(stream, window=2) == [1.0, 1.0]

    def test_tracker_reset(self):
        tracker = AgreementTracker()
        tracker.add(_decisions([1, 1], [1, 0]))
        assert tracker.ratio() == 0.5
        tracker.reset()
        assert tracker.ratio() is None

    def test_bad_window(self):
        with pytest.raises(ConfigError):
            agreement_ratio([], window=0)


class TestSimplexDynamics:

    def test_smallest_grid(self):
        table = simplex_dynamics(3)
        np.testing.assert_allclose(table.p, [0.25, 0.75])

    def test_values(self):
        table = simplex_dynamics(99)
        i = int(np.flatnonzero(np.isclose(table.p, 0.75))[0])
        assert table.min_entropy[i] == pytest.approx(-math.log(0.75))
        assert table.abs_d_min_entropy[i] == pytest.approx(4 / 3)
        j = int(np.flatnonzero(np.isclose(table.p, 0.51))[0])
        assert table.abs_d_entropy[j] == pytest.approx(0.04, abs=5e-3)
        assert table.abs_d_min_entropy[j] == pytest.approx(1.96, abs=5e-3)

    def test_properties(self):
        table = simplex_dynamics(99)
        assert not np.any(np.isclose(table.p, 0.5))
        assert np.all(table.entropy >= table.min_entropy - 1e-15)
        assert np.all(table.abs_d_min_entropy >= 1.0)
        mid = (table.p >= 0.27) & (table.p <= 0.73)
        assert np.all(table.abs_d_min_entropy[mid] >= table.abs_d_entropy[mid])
        assert len(table.rows()) == len(table.p)

    def test_too_coarse(self):
        with pytest.raises(ConfigError):
            simplex_dynamics(2)
