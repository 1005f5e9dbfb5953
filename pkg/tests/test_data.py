import math

import numpy as np
import pytest

from pseudosup.data import (
    DatasetFormatError,
    LongitudinalSeries,
    QcRecord,
    Sample,
    apply_crop_flip,
    augment_weak,
    concat_modalities,
    derive_progression_labels,
    generate_overlapping_gaussians,
    generate_multimodal_gaussians,
    load_dataset,
    qc_filter,
    save_dataset,
    split_dataset,
)
from pseudosup.metrics import auc_roc


def ols_slope_oracle(t, v):
    """Closed-form least squares slope: sum((t-tb)(v-vb)) / sum((t-tb)^2)."""
    tb = np.mean(t)
    vb = np.mean(v)
    return np.sum((t - tb) * (v - vb)) / np.sum((t - tb) ** 2)


class TestGaussians:
    def test_separation_two_bayes_auc(self):
        # Bayes discriminant on the first axis; AUC should approach Phi(2/sqrt(2))
        samples = generate_overlapping_gaussians(20000, 2, 2.0, seed=11)
        scores = np.array([s.features[0] for s in samples])
        labels = np.array([s.label for s in samples])
        target = 0.5 * (1 + math.erf((2.0 / math.sqrt(2)) / math.sqrt(2)))
        assert auc_roc(scores, labels) == pytest.approx(target, abs=0.02)

    def test_same_seed_identical(self):
        a = generate_overlapping_gaussians(10, 4, 1.0, seed=3)
        b = generate_overlapping_gaussians(10, 4, 1.0, seed=3)
        for sa, sb in zip(a, b):
            assert sa.id == sb.id and sa.label == sb.label
            np.testing.assert_array_equal(sa.features, sb.features)

    def test_balanced_labels(self):
        samples = generate_overlapping_gaussians(25, 3, 0.5, seed=1)
        labels = [s.label for s in samples]
        assert labels.count(0) == labels.count(1) == 25

    def test_invalid_counts_rejected(self):
        with pytest.raises(ValueError):
            generate_overlapping_gaussians(0, 3, 1.0, seed=1)
        with pytest.raises(ValueError):
            generate_overlapping_gaussians(5, 3, -0.1, seed=1)

    def test_multimodal_feature_length(self):
        samples = generate_multimodal_gaussians(5, (3, 4), 1.0, seed=2,
                                                vf_target_len=104)
        assert all(len(s.features) == 12 + 104 for s in samples)
        assert all(s.grid_dims == (3, 4) for s in samples)


class TestSplit:
    def test_counts(self):
        samples = generate_overlapping_gaussians(50, 2, 1.0, seed=0)
        splits = split_dataset(samples, 0.5, (0.7, 0.1, 0.2), seed=0)
        assert len(splits.labeled_train) == 35
        assert len(splits.unlabeled_train) == 35
        assert len(splits.validation) == 10
        assert len(splits.test) == 20

    def test_full_label_fraction_means_no_unlabeled(self):
        samples = generate_overlapping_gaussians(50, 2, 1.0, seed=0)
        splits = split_dataset(samples, 1.0, (0.7, 0.1, 0.2), seed=0)
        assert splits.unlabeled_train == []

    def test_disjoint_ids_over_many_seeds(self):
        samples = generate_overlapping_gaussians(30, 2, 1.0, seed=0)
        for seed in range(100):
            splits = split_dataset(samples, 0.5, (0.6, 0.2, 0.2), seed=seed)
            parts = [
                {s.id for s in splits.labeled_train},
                {s.id for s in splits.unlabeled_train},
                {s.id for s in splits.validation},
                {s.id for s in splits.test},
            ]
            for i in range(4):
                for j in range(i + 1, 4):
                    assert not parts[i] & parts[j]
            assert set.union(*parts) == {s.id for s in samples}

    def test_unlabeled_hide_but_retain_ground_truth(self):
        samples = generate_overlapping_gaussians(50, 2, 1.0, seed=0)
        splits = split_dataset(samples, 0.5, (0.7, 0.1, 0.2), seed=0)
        for s in splits.unlabeled_train:
            assert s.label is None
            assert s.hidden_label in (0, 1)

    def test_bad_fractions_rejected(self):
        samples = generate_overlapping_gaussians(10, 2, 1.0, seed=0)
        with pytest.raises(ValueError):
            split_dataset(samples, 0.5, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(ValueError):
            split_dataset(samples, 0.0, (0.7, 0.1, 0.2), seed=0)


class TestQcFilter:
    @staticmethod
    def make(signal=10, fix=0.0, fp=0.0, fn=0.0):
        sample = Sample(id="x", features=np.zeros(2), label=0)
        return (sample, QcRecord(signal, fix, fp, fn))

    def test_signal_boundary(self):
        retained, report = qc_filter([self.make(signal=6), self.make(signal=5)])
        assert len(retained) == 1
        assert report.excluded_low_signal == 1

    def test_fixation_boundary(self):
        retained, _ = qc_filter([self.make(fix=0.33), self.make(fix=0.34)])
        assert len(retained) == 1

    def test_false_rate_boundaries(self):
        retained, report = qc_filter(
            [self.make(fp=0.20), self.make(fp=0.21),
             self.make(fn=0.20), self.make(fn=0.21)]
        )
        assert len(retained) == 2
        assert report.excluded_false_positive == 1
        assert report.excluded_false_negative == 1

    def test_report_totals(self):
        _, report = qc_filter([self.make(), self.make(signal=2, fp=0.5)])
        assert report.n_input == 2
        assert report.n_retained == 1
        assert report.excluded_low_signal == 1
        assert report.excluded_false_positive == 1


class TestProgression:
    @staticmethod
    def series(t, td, md):
        return LongitudinalSeries(np.asarray(t), np.asarray(td), np.asarray(md))

    def test_flat_series_no_progression(self):
        t = [0.0, 1.0, 2.0]
        td = np.full((3, 52), -2.0)
        md = np.zeros(3)
        result = derive_progression_labels(self.series(t, td, md))
        assert not result.td_progression
        assert not result.md_fast_progression
        np.testing.assert_allclose(result.td_slopes, 0.0, atol=1e-12)

    def test_exactly_three_boundary_locations(self):
        t = [0.0, 1.0, 2.0]
        td = np.zeros((3, 52))
        for loc in range(3):
            td[:, loc] = [0.0, -1.0, -2.0]  # slope exactly -1
        result = derive_progression_labels(self.series(t, td, np.zeros(3)))
        assert result.td_progression

    def test_two_locations_not_enough(self):
        t = [0.0, 1.0, 2.0]
        td = np.zeros((3, 52))
        for loc in range(2):
            td[:, loc] = [0.0, -1.0, -2.0]
        result = derive_progression_labels(self.series(t, td, np.zeros(3)))
        assert not result.td_progression

    def test_md_boundary(self):
        t = [0.0, 1.0, 2.0]
        td = np.zeros((3, 52))
        result = derive_progression_labels(self.series(t, td, [0.0, -1.0, -2.0]))
        assert result.md_fast_progression

    def test_slopes_match_closed_form_oracle(self):
        rng = np.random.default_rng(8)
        t = np.sort(rng.uniform(0, 10, size=6))
        t += np.arange(6) * 1e-3  # guarantee strict increase
        td = rng.uniform(-10, 10, size=(6, 52))
        md = rng.uniform(-10, 5, size=6)
        result = derive_progression_labels(self.series(t, td, md))
        for loc in range(52):
            assert result.td_slopes[loc] == pytest.approx(
                ols_slope_oracle(t, td[:, loc]), abs=1e-10
            )
        assert result.md_slope == pytest.approx(ols_slope_oracle(t, md), abs=1e-10)

    def test_fewer_than_two_visits_rejected(self):
        with pytest.raises(ValueError):
            derive_progression_labels(
                self.series([0.0], np.zeros((1, 52)), [0.0])
            )

    def test_td_range_enforced(self):
        with pytest.raises(ValueError):
            self.series([0.0, 1.0], np.full((2, 52), 30.0), [0.0, 0.0])


class TestConcatModalities:
    def test_identity_upscale(self):
        s = Sample(id="a", features=np.arange(4.0), label=0)
        vec = np.arange(52.0)
        out = concat_modalities(s, vec, 52)
        np.testing.assert_array_equal(out.features[4:], vec)

    def test_constant_vector_invariance(self):
        s = Sample(id="a", features=np.zeros(4), label=0)
        out = concat_modalities(s, np.full(52, 3.5), 104)
        np.testing.assert_array_equal(out.features[4:], np.full(104, 3.5))

    def test_double_length_replicates_each_element(self):
        s = Sample(id="a", features=np.zeros(1), label=0)
        vec = np.arange(52.0)
        out = concat_modalities(s, vec, 104)
        tail = out.features[1:]
        for k in range(52):
            assert tail[2 * k] == vec[k]
            assert tail[2 * k + 1] == vec[k]

    def test_target_too_short_rejected(self):
        s = Sample(id="a", features=np.zeros(4), label=0)
        with pytest.raises(ValueError):
            concat_modalities(s, np.zeros(52), 51)


class TestAugmentWeak:
    @staticmethod
    def grid_sample(h=6, w=8, tail=0):
        rng = np.random.default_rng(0)
        feats = rng.normal(size=h * w + tail)
        return Sample(id="g", features=feats, label=1, grid_dims=(h, w))

    def test_identity_when_forced(self):
        grid = np.arange(48.0).reshape(6, 8)
        out = apply_crop_flip(grid, flip=False, crop_h=6, crop_w=8, top=0, left=0)
        np.testing.assert_array_equal(out, grid)

    def test_flip_is_involution(self):
        grid = np.arange(48.0).reshape(6, 8)
        once = apply_crop_flip(grid, True, 6, 8, 0, 0)
        twice = apply_crop_flip(once, True, 6, 8, 0, 0)
        np.testing.assert_array_equal(twice, grid)

    def test_constant_grid_stays_constant(self):
        s = Sample(id="c", features=np.full(48, 2.5), label=0, grid_dims=(6, 8))
        for seed in range(10):
            out = augment_weak(s, seed)
            np.testing.assert_array_equal(out.features, np.full(48, 2.5))

    def test_label_and_tail_unchanged(self):
        s = self.grid_sample(tail=10)
        out = augment_weak(s, 5)
        assert out.label == s.label
        np.testing.assert_array_equal(out.features[48:], s.features[48:])

    def test_deterministic_per_seed(self):
        s = self.grid_sample()
        a = augment_weak(s, 9)
        b = augment_weak(s, 9)
        np.testing.assert_array_equal(a.features, b.features)

    def test_requires_grid_dims(self):
        s = Sample(id="n", features=np.zeros(4), label=0)
        with pytest.raises(ValueError):
            augment_weak(s, 0)


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        samples = generate_overlapping_gaussians(20, 3, 1.0, seed=4)
        splits = split_dataset(samples, 0.5, (0.7, 0.1, 0.2), seed=4)
        path = str(tmp_path / "data.txt")
        save_dataset(splits, path)
        loaded = load_dataset(path)
        for orig_part, new_part in zip(
            (splits.labeled_train, splits.unlabeled_train,
             splits.validation, splits.test),
            (loaded.labeled_train, loaded.unlabeled_train,
             loaded.validation, loaded.test),
        ):
            assert len(orig_part) == len(new_part)
            for a, b in zip(orig_part, new_part):
                assert a.id == b.id and a.label == b.label
                np.testing.assert_array_equal(a.features, b.features)

    def test_unlabeled_row_loads_label_absent(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text(
            "gdp-synth v1\nn_features 2\n"
            "trainL a 0 1.0 2.0\ntrainU b ? 3.0 4.0\n"
            "val c 1 0.0 0.0\ntest d 0 1.0 1.0\n"
        )
        splits = load_dataset(str(path))
        assert splits.unlabeled_train[0].label is None

    def test_non_numeric_feature_names_line(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text(
            "gdp-synth v1\nn_features 2\n"
            "trainL a 0 1.0 2.0\ntrainL b 0 oops 4.0\n"
        )
        with pytest.raises(DatasetFormatError, match="line 4"):
            load_dataset(str(path))

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("trainL a 0 1.0\n")
        with pytest.raises(DatasetFormatError, match="line 1"):
            load_dataset(str(path))

    def test_unlabeled_test_row_rejected(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("gdp-synth v1\nn_features 1\ntest a ? 1.0\n")
        with pytest.raises(DatasetFormatError):
            load_dataset(str(path))
