"""Synthetic mixtures, long-tail class counts and the embedding CSV import."""

import dataclasses

import numpy as np
import pytest

from sslcal.lib.data import (
    DatasetSpec,
    balanced_counts,
    class_anchors,
    generate_dataset,
    load_embeddings_csv,
    longtail_counts,
)
from sslcal.lib.errors import ConfigError, ReportError
from tests.desk import SUPERVISED


class TestLongtailCounts:

    def test_three_classes(self):
        assert longtail_counts(3, 100, 10) == [100, 32, 10]

    def test_negative_gamma_reverses(self):
        assert longtail_counts(3, 100, -10) == [10, 32, 100]

    def test_gamma_one_is_balanced(self):
        assert longtail_counts(4, 150, 1) == [150] * 4

    @pytest.mark.parametrize("k,head,gamma", [(4, 150, 10), (10, 1500, 100), (5, 300, 150)])
    def test_monotone_with_head_tail_ratio(self, k, head, gamma):
        counts = longtail_counts(k, head, gamma)
        assert counts[0] == head
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        assert counts[0] / counts[-1] == pytest.approx(gamma, rel=0.1)

    @pytest.mark.parametrize("k,head,gamma", [(3, 2, 10), (1, 100, 10), (3, 100, 0), (3, 100, 2.5)])
    def test_invalid(self, k, head, gamma):
        with pytest.raises(ConfigError):
            longtail_counts(k, head, gamma)


class TestBalancedCounts:

    def test_remainder_goes_first(self):
        assert balanced_counts(4, 10) == [3, 3, 2, 2]

    def test_exact(self):
        assert balanced_counts(4, 2000) == [500] * 4


class TestSynthetic:

    def test_canonical_sizes(self):
        data = generate_dataset(DatasetSpec())
        assert data.sizes() == {"labeled": 16, "unlabeled": 2000, "test": 1000}
        assert data.dim == 2
        np.testing.assert_array_equal(np.bincount(data.y_labeled, minlength=4), 4)
        np.testing.assert_array_equal(np.bincount(data.y_test, minlength=4), 250)
        assert len(data.unlabeled_hidden_labels) == 2000

    def test_same_seed_same_arrays(self):
        a = generate_dataset(DatasetSpec(seed=3))
        b = generate_dataset(DatasetSpec(seed=3))
        for name in ("x_labeled", "y_labeled", "x_unlabeled", "x_test", "y_test"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_seed_changes_draw(self):
        a = generate_dataset(DatasetSpec(seed=0))
        b = generate_dataset(DatasetSpec(seed=1))
        assert not np.array_equal(a.x_unlabeled, b.x_unlabeled)

    def test_anchor_spacing(self):
        spec = DatasetSpec(num_classes=6, separation=3.0, cov_scale=2.0, dim=3)
        anchors = class_anchors(spec)
        assert anchors.shape == (6, 3)
        assert np.linalg.norm(anchors[0] - anchors[1]) == pytest.approx(6.0)
        np.testing.assert_array_equal(anchors[:, 2], 0.0)

    def test_longtail_split(self):
        spec = DatasetSpec(longtail=True, head_labeled=150, head_unlabeled=300,
                           gamma_l=10, gamma_u=-10)
        data = generate_dataset(spec)
        np.testing.assert_array_equal(np.bincount(data.y_labeled, minlength=4),
                                      longtail_counts(4, 150, 10))
        np.testing.assert_array_equal(np.bincount(data.unlabeled_hidden_labels, minlength=4),
                                      longtail_counts(4, 300, -10))
        assert len(data.y_test) == 1000

    def test_hidden_labels_replace(self):
        data = generate_dataset(dataclasses.replace(DatasetSpec(), n_unlabeled=8))
        masked = data.with_hidden_labels(np.full(8, -1))
        np.testing.assert_array_equal(masked.unlabeled_hidden_labels, -1)
        np.testing.assert_array_equal(masked.x_unlabeled, data.x_unlabeled)

    @pytest.mark.parametrize("kwargs", [
        {"num_classes": 1},
        {"dim": 1},
        {"separation": 0.0},
        {"n_test": 0},
        {"labels_per_class": 0},
        {"longtail": True, "gamma_l": 0},
        {"longtail": True, "head_labeled": 3},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            DatasetSpec(**kwargs)


class TestEmbeddings:

    def _write(self, path, text):
        path.write_text(text, encoding="utf-8")
        return path

    def test_load(self, tmp_path):
        train = self._write(tmp_path / "train.csv",
                            "label,f0,f1\n0,1.0,2.0\n1,0.5,0.1\n-1,3.0,3.0\n-1,-1.0,0.0\n")
        test = self._write(tmp_path / "test.csv", "label,f0,f1\n2,0.0,0.0\n0,1.0,1.0\n")
        data = load_embeddings_csv(train, test)
        assert data.sizes() == {"labeled": 2, "unlabeled": 2, "test": 2}
        assert data.num_classes == 3
        np.testing.assert_array_equal(data.y_labeled, [0, 1])
        np.testing.assert_array_equal(data.x_unlabeled, [[3.0, 3.0], [-1.0, 0.0]])

    def test_through_spec(self, tmp_path):
        train = self._write(tmp_path / "train.csv", "label,f0,f1\n0,1,2\n1,3,4\n")
        data = generate_dataset(DatasetSpec(embeddings=str(train)))
        assert data.sizes() == {"labeled": 2, "unlabeled": 0, "test": 0}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ReportError):
            load_embeddings_csv(tmp_path / "nope.csv")

    def test_bad_header(self, tmp_path):
        path = self._write(tmp_path / "bad.csv", "y,f0\n0,1\n")
        with pytest.raises(ReportError):
            load_embeddings_csv(path)

    def test_unlabeled_test_rows(self, tmp_path):
        train = self._write(tmp_path / "train.csv", "label,f0\n0,1\n1,2\n")
        test = self._write(tmp_path / "test.csv", "label,f0\n-1,1\n")
        with pytest.raises(ConfigError):
            load_embeddings_csv(train, test)

    def test_no_labeled_rows(self, tmp_path):
        path = self._write(tmp_path / "u.csv", "label,f0\n-1,1\n-1,2\n")
        with pytest.raises(ConfigError):
            load_embeddings_csv(path)

    @pytest.mark.parametrize("text", [
        "label,f0\n0,1\n0.7,2\n-1,3\n",
        "label,f0\n0,1\n1,2\nnan,3\n",
    ])
    def test_fractional_labels(self, tmp_path, text):
        path = self._write(tmp_path / "frac.csv", text)
        with pytest.raises(ReportError) as exc:
            load_embeddings_csv(path)
        assert exc.value.context["row"] in (2, 3)

    def test_fractional_test_labels(self, tmp_path):
        train = self._write(tmp_path / "train.csv", "label,f0\n0,1\n1,2\n")
        test = self._write(tmp_path / "test.csv", "label,f0\n1.5,1\n")
        with pytest.raises(ReportError) as exc:
            load_embeddings_csv(train, test)
        assert exc.value.context["label"] == "1.5"

    def test_integral_floats_accepted(self, tmp_path):
        path = self._write(tmp_path / "f.csv", "label,f0\n0.0,1\n1.0,2\n-1.0,3\n")
        data = load_embeddings_csv(path)
        np.testing.assert_array_equal(data.y_labeled, [0, 1])
        assert len(data.x_unlabeled) == 1


@pytest.mark.slow
class TestSeparatedMixture:

    def test_supervised_error_below_tenth(self, desk):
        logs = desk.runs({**SUPERVISED, "dataset.separation": "6.0",
                          "dataset.components_per_class": "1",
                          "dataset.component_spread": "0"})
        assert all(log.best.test_error < 0.10 for log in logs)
