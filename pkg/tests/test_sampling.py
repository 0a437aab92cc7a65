import numpy as np
import pytest

from socialrisk.errors import SocialriskError
from socialrisk.sampling import (
    SamplingPlan,
    cci_matched_pairs,
    resample,
    write_sampling_audit,
)


def imbalanced_labels(n_pos=10, n_neg=90):
    return np.array([1] * n_pos + [0] * n_neg)


class TestPlanValidation:
    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="rus"):
            SamplingPlan(method="smote")

    def test_match_ratio_must_be_positive_integer(self):
        with pytest.raises(ValueError, match="match_ratio"):
            SamplingPlan(method="cci_match", match_ratio=0)
        with pytest.raises(ValueError, match="match_ratio"):
            SamplingPlan(method="cci_match", match_ratio=1.5)


class TestNone:
    def test_identity_indices(self):
        labels = imbalanced_labels(3, 5)
        idx = resample(labels, SamplingPlan(method="none"))
        assert idx.tolist() == list(range(8))


class TestRos:
    def test_ten_ninety_becomes_ninety_ninety(self):
        labels = imbalanced_labels()
        idx = resample(labels, SamplingPlan(method="ros", seed=0))
        counts = np.bincount(labels[idx], minlength=2)
        assert counts.tolist() == [90, 90]

    def test_output_keeps_all_originals_then_appends_minority(self):
        labels = imbalanced_labels(4, 9)
        idx = resample(labels, SamplingPlan(method="ros", seed=1))
        assert idx[:13].tolist() == list(range(13))
        assert (labels[idx[13:]] == 1).all()

    def test_deterministic_per_seed(self):
        labels = imbalanced_labels()
        a = resample(labels, SamplingPlan(method="ros", seed=5))
        b = resample(labels, SamplingPlan(method="ros", seed=5))
        c = resample(labels, SamplingPlan(method="ros", seed=6))
        assert a.tolist() == b.tolist()
        assert a.tolist() != c.tolist()


class TestRus:
    def test_ten_ninety_becomes_ten_ten(self):
        labels = imbalanced_labels()
        idx = resample(labels, SamplingPlan(method="rus", seed=0))
        counts = np.bincount(labels[idx], minlength=2)
        assert counts.tolist() == [10, 10]

    def test_subset_without_duplicates_sorted(self):
        labels = imbalanced_labels(7, 23)
        idx = resample(labels, SamplingPlan(method="rus", seed=3))
        assert len(set(idx.tolist())) == len(idx)
        assert idx.tolist() == sorted(idx.tolist())

    def test_deterministic_per_seed(self):
        labels = imbalanced_labels()
        a = resample(labels, SamplingPlan(method="rus", seed=9))
        b = resample(labels, SamplingPlan(method="rus", seed=9))
        c = resample(labels, SamplingPlan(method="rus", seed=10))
        assert a.tolist() == b.tolist()
        assert a.tolist() != c.tolist()


class TestSingleClass:
    @pytest.mark.parametrize("method", ["none", "ros", "rus", "cci_match"])
    def test_single_class_rejected(self, method):
        labels = np.ones(6, dtype=int)
        with pytest.raises(ValueError, match="single class"):
            resample(labels, SamplingPlan(method=method), cci=np.zeros(6))


class TestCciMatch:
    def test_hand_fixture_selects_nearest_negatives(self):
        labels = np.array([1, 1, 0, 0, 0, 0])
        cci = np.array([2.0, 5.0, 2.0, 3.0, 5.0, 9.0])
        pids = np.arange(6)
        plan = SamplingPlan(method="cci_match", match_ratio=1)
        pairs = cci_matched_pairs(labels, plan, patient_ids=pids, cci=cci)
        assert pairs == [(0, 2), (1, 4)]
        idx = resample(labels, plan, patient_ids=pids, cci=cci)
        assert idx.tolist() == [0, 1, 2, 4]

    def test_equidistant_tie_prefers_smaller_patient_id(self):
        labels = np.array([1, 0, 0])
        cci = np.array([2.0, 1.0, 3.0])
        pids = np.array([1, 9, 4])
        plan = SamplingPlan(method="cci_match")
        pairs = cci_matched_pairs(labels, plan, patient_ids=pids, cci=cci)
        assert pairs == [(0, 2)]

    def test_exact_match_tie_prefers_smaller_patient_id(self):
        labels = np.array([1, 0, 0])
        cci = np.array([2.0, 2.0, 2.0])
        pids = np.array([1, 7, 3])
        pairs = cci_matched_pairs(labels, SamplingPlan(method="cci_match"),
                                  patient_ids=pids, cci=cci)
        assert pairs == [(0, 2)]

    def test_positives_processed_in_ascending_patient_id_order(self):
        # The later-id positive sits equally close, but the earlier one
        # claims the shared nearest negative first.
        labels = np.array([1, 1, 0, 0])
        cci = np.array([4.0, 4.0, 4.0, 0.0])
        pids = np.array([5, 2, 10, 11])
        pairs = cci_matched_pairs(labels, SamplingPlan(method="cci_match"),
                                  patient_ids=pids, cci=cci)
        assert pairs == [(1, 2), (0, 3)]

    def test_match_ratio_runs_extra_passes(self):
        labels = np.array([1, 0, 0, 0])
        cci = np.array([2.0, 2.0, 2.0, 9.0])
        pids = np.arange(4)
        plan = SamplingPlan(method="cci_match", match_ratio=2)
        pairs = cci_matched_pairs(labels, plan, patient_ids=pids, cci=cci)
        assert pairs == [(0, 1), (0, 2)]
        idx = resample(labels, plan, patient_ids=pids, cci=cci)
        assert idx.tolist() == [0, 1, 2]
        counts = np.bincount(labels[idx], minlength=2)
        assert counts.tolist() == [2, 1]

    def test_shortfall_reported(self):
        labels = np.array([1, 1, 1, 0, 0, 0, 0, 0])
        cci = np.zeros(8)
        plan = SamplingPlan(method="cci_match", match_ratio=2)
        with pytest.raises(SocialriskError, match="short 1"):
            resample(labels, plan, cci=cci)

    def test_cci_required(self):
        labels = np.array([1, 0])
        with pytest.raises(SocialriskError, match="CCI"):
            resample(labels, SamplingPlan(method="cci_match"))

    def test_default_patient_ids_are_row_positions(self):
        labels = np.array([1, 0, 0])
        cci = np.array([5.0, 5.0, 5.0])
        pairs = cci_matched_pairs(labels, SamplingPlan(method="cci_match"), cci=cci)
        assert pairs == [(0, 1)]

    def test_seed_does_not_influence_matching(self):
        rng = np.random.default_rng(12)
        labels = (rng.random(60) < 0.3).astype(int)
        labels[:2] = [1, 0]
        cci = rng.integers(0, 10, size=60).astype(float)
        a = resample(labels, SamplingPlan(method="cci_match", seed=1), cci=cci)
        b = resample(labels, SamplingPlan(method="cci_match", seed=2), cci=cci)
        assert a.tolist() == b.tolist()

    def test_matched_negatives_closer_in_cci_than_random_undersampling(self):
        rng = np.random.default_rng(77)
        n_pos, n_neg = 40, 160
        labels = np.array([1] * n_pos + [0] * n_neg)
        pos_cci = rng.integers(6, 12, size=n_pos).astype(float)
        # Most negatives sit far below the positives; a few overlap.
        neg_cci = np.concatenate([
            rng.integers(0, 4, size=n_neg - 30).astype(float),
            rng.integers(6, 12, size=30).astype(float),
        ])
        cci = np.concatenate([pos_cci, neg_cci])
        pids = np.arange(len(labels))
        plan = SamplingPlan(method="cci_match")
        pairs = cci_matched_pairs(labels, plan, patient_ids=pids, cci=cci)
        matched_diff = np.mean([abs(cci[p] - cci[q]) for p, q in pairs])
        rus_idx = resample(labels, SamplingPlan(method="rus", seed=5))
        rus_neg = np.sort(cci[rus_idx[labels[rus_idx] == 0]])
        rus_diff = np.mean(np.abs(np.sort(pos_cci) - rus_neg))
        assert matched_diff <= rus_diff


class TestAudit:
    def test_audit_lists_every_selected_row(self, tmp_path):
        labels = imbalanced_labels(2, 5)
        pids = np.arange(10, 17)
        idx = resample(labels, SamplingPlan(method="ros", seed=0))
        path = tmp_path / "audit.csv"
        write_sampling_audit(idx, labels, pids, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "row_index,patient_id,label"
        assert len(lines) == 1 + len(idx)
        dup_rows = [ln for ln in lines[1:] if ln.endswith(",1")]
        assert len(dup_rows) == 5
