import numpy as np
import pytest
from dataclasses import dataclass, field

from socialrisk.metrics import auroc
from socialrisk.mitigation import (
    generalized_fnr,
    mitigate_adversarial,
    mitigate_calibrated_eo,
    mitigate_dir,
    repair_column,
)
from socialrisk.util import sigmoid

from oracles import ks_statistic


class TestColumnRepair:
    def test_zero_level_is_bitwise_copy(self):
        rng = np.random.default_rng(1)
        values = rng.normal(size=50)
        groups = rng.integers(0, 2, size=50)
        out = repair_column(values, groups, repair_level=0.0)
        assert out.tobytes() == values.tobytes()
        assert out is not values

    def test_full_repair_hand_example(self):
        # {1,2,3} and {11,12,13} share midrank grids, so both become {6,7,8}.
        values = np.array([11.0, 1.0, 12.0, 2.0, 13.0, 3.0])
        groups = np.array(["b", "a", "b", "a", "b", "a"])
        out = repair_column(values, groups, repair_level=1.0)
        np.testing.assert_allclose(out, [6.0, 6.0, 7.0, 7.0, 8.0, 8.0])

    def test_half_level_blends_linearly(self):
        values = np.array([1.0, 2.0, 3.0, 11.0, 12.0, 13.0])
        groups = np.array(["a", "a", "a", "b", "b", "b"])
        out = repair_column(values, groups, repair_level=0.5)
        np.testing.assert_allclose(out, [3.5, 4.5, 5.5, 8.5, 9.5, 10.5])

    def test_full_repair_aligns_distributions(self):
        rng = np.random.default_rng(7)
        a = rng.normal(0.0, 1.0, size=600)
        b = rng.normal(1.5, 2.0, size=400)
        values = np.concatenate([a, b])
        groups = np.array(["a"] * 600 + ["b"] * 400)
        out = repair_column(values, groups, repair_level=1.0)
        gap = ks_statistic(out[:600], out[600:])
        assert gap <= 2.0 / 400

    def test_within_group_order_preserved(self):
        rng = np.random.default_rng(9)
        values = rng.normal(size=200)
        groups = np.repeat(["a", "b"], 100)
        out = repair_column(values, groups, repair_level=1.0)
        for g in ("a", "b"):
            m = groups == g
            src = np.argsort(values[m], kind="stable")
            assert np.all(np.diff(out[m][src]) >= 0)

    def test_tiny_group_passes_through_with_warning(self):
        values = np.array([1.0, 2.0, 3.0, 99.0, 4.0, 5.0, 6.0])
        groups = np.array(["a", "a", "a", "tiny", "b", "b", "b"])
        with pytest.warns(RuntimeWarning, match="tiny"):
            out = repair_column(values, groups, repair_level=1.0)
        assert out[3] == 99.0
        # target built from a and b only: common quantiles of {1,2,3},{4,5,6}
        np.testing.assert_allclose(out[[0, 1, 2]], [2.5, 3.5, 4.5])

    def test_single_group_is_exact_identity(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=40)
        groups = np.zeros(40, dtype=int)
        out = repair_column(values, groups, repair_level=1.0)
        assert out.tobytes() == values.tobytes()

    def test_input_validation(self):
        with pytest.raises(ValueError, match="outside"):
            repair_column(np.ones(4), np.zeros(4), repair_level=1.5)
        with pytest.raises(ValueError, match="1-d"):
            repair_column(np.ones((2, 2)), np.zeros(4), repair_level=0.5)


@dataclass
class FakeColumn:
    name: str
    kind: str


@dataclass
class FakeMatrix:
    values: np.ndarray
    columns: list = field(default_factory=list)


class TestMatrixRepair:
    def make(self):
        values = np.column_stack(
            [
                np.array([1.0, 2.0, 3.0, 11.0, 12.0, 13.0]),
                np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0]),
            ]
        )
        cols = [FakeColumn("age", "continuous"), FakeColumn("sex=female", "categorical")]
        return FakeMatrix(values=values, columns=cols), np.array(["a"] * 3 + ["b"] * 3)

    def test_continuous_repaired_one_hot_passthrough(self):
        m, groups = self.make()
        out = mitigate_dir(m, groups, 1.0)
        np.testing.assert_allclose(out.values[:, 0], [6.0, 7.0, 8.0, 6.0, 7.0, 8.0])
        assert out.values[:, 1].tobytes() == m.values[:, 1].tobytes()
        assert out.columns is m.columns

    def test_zero_level_bit_exact(self):
        m, groups = self.make()
        out = mitigate_dir(m, groups, 0.0)
        assert out.values.tobytes() == m.values.tobytes()
        assert out.values is not m.values


def plain_gd_oracle(x, y, steps, learning_rate, seed):
    rng = np.random.default_rng(seed)
    w = 0.01 * rng.standard_normal(x.shape[1])
    b = 0.0
    n = x.shape[0]
    for _ in range(steps):
        resid = sigmoid(x @ w + b) - y
        w = w - learning_rate * (x.T @ resid / n)
        b = b - learning_rate * float(resid.mean())
    return w, b


class TestAdversarialDebiasing:
    def make_leaky_data(self, n=800, seed=3):
        rng = np.random.default_rng(seed)
        protected = (rng.uniform(size=n) < 0.5).astype(float)
        x = np.column_stack(
            [
                protected + 0.3 * rng.standard_normal(n),
                rng.standard_normal(n),
            ]
        )
        margin = 1.2 * x[:, 1] + 0.8 * x[:, 0] - 0.4
        y = (rng.uniform(size=n) < sigmoid(margin)).astype(float)
        return x, y, protected

    def test_zero_weight_equals_plain_descent(self):
        x, y, protected = self.make_leaky_data()
        result = mitigate_adversarial(
            x, y, protected, adversary_weight=0.0, steps=200, learning_rate=0.5, seed=11
        )
        w, b = plain_gd_oracle(x, y, steps=200, learning_rate=0.5, seed=11)
        np.testing.assert_allclose(result.model.weights, w, atol=1e-4)
        assert result.model.intercept == pytest.approx(b, abs=1e-4)

    def test_adversary_weight_reduces_group_leakage(self):
        x, y, protected = self.make_leaky_data()
        plain = mitigate_adversarial(
            x, y, protected, adversary_weight=0.0, steps=400, seed=5
        )
        debiased = mitigate_adversarial(
            x, y, protected, adversary_weight=1.0, steps=400, seed=5
        )
        leak_plain = auroc(plain.model.predict_margin(x), protected)
        leak_debiased = auroc(debiased.model.predict_margin(x), protected)
        assert abs(leak_debiased - 0.5) < abs(leak_plain - 0.5) - 0.05
        assert debiased.final_pred_loss < 0.75  # still predicts, not collapsed

    def test_deterministic_given_seed(self):
        x, y, protected = self.make_leaky_data()
        a = mitigate_adversarial(x, y, protected, steps=50, seed=2)
        b = mitigate_adversarial(x, y, protected, steps=50, seed=2)
        np.testing.assert_array_equal(a.model.weights, b.model.weights)
        assert a.adversary_slope == b.adversary_slope

    def test_label_aware_adversary(self):
        x, y, protected = self.make_leaky_data()
        plain = mitigate_adversarial(
            x, y, protected, adversary_weight=1.0, steps=200, seed=5
        )
        aware = mitigate_adversarial(
            x,
            y,
            protected,
            adversary_weight=1.0,
            steps=200,
            seed=5,
            adversary_sees_label=True,
        )
        assert plain.adversary_label_slope == 0.0
        assert aware.adversary_label_slope != 0.0
        assert not np.array_equal(plain.model.weights, aware.model.weights)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises_with_advice(self):
        x, y, protected = self.make_leaky_data()
        with pytest.raises(ValueError, match="smaller learning_rate"):
            mitigate_adversarial(
                x,
                y,
                protected,
                adversary_weight=1.0,
                steps=400,
                learning_rate=1e8,
                adversary_learning_rate=1e8,
                seed=0,
            )

    def test_validation(self):
        x, y, protected = self.make_leaky_data(n=40)
        with pytest.raises(ValueError, match="non-negative"):
            mitigate_adversarial(x, y, protected, adversary_weight=-1.0)
        with pytest.raises(ValueError, match="align"):
            mitigate_adversarial(x, y, protected[:-1])
        with pytest.raises(ValueError, match="0/1"):
            mitigate_adversarial(x, y, protected + 0.5)


class TestCalibratedEqualizedOdds:
    def fixture(self):
        # group "low": base rate 1/2, miss mass 0.2; "high": 1/2 and 0.4.
        scores = np.array([0.8, 0.8, 0.1, 0.1, 0.6, 0.6, 0.2, 0.2])
        y_true = np.array([1, 1, 0, 0, 1, 1, 0, 0])
        groups = np.array(["low"] * 4 + ["high"] * 4)
        return scores, y_true, groups

    def test_generalized_fnr(self):
        scores, y_true, groups = self.fixture()
        assert generalized_fnr(scores[:4], y_true[:4]) == pytest.approx(0.2, abs=1e-12)
        assert generalized_fnr(scores[4:], y_true[4:]) == pytest.approx(0.4, abs=1e-12)

    def test_mix_probability_two_thirds(self):
        scores, y_true, groups = self.fixture()
        seed = 123
        res = mitigate_calibrated_eo(scores, y_true, groups, seed=seed)
        assert res.mixing["low"] == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert res.mixing["high"] == 0.0
        assert res.mixed_group == "low"
        assert res.gfnr_after_expected == pytest.approx(0.4, abs=1e-12)
        assert res.gfnr_before == pytest.approx({"low": 0.2, "high": 0.4}, abs=1e-12)
        # only the mixed group draws, so the first rng draws cover its rows
        coin = np.random.default_rng(seed).uniform(size=4) < 2.0 / 3.0
        expected = scores.copy()
        expected[:4][coin] = 0.5
        np.testing.assert_allclose(res.scores, expected, atol=1e-12)

    def test_highest_miss_group_untouched_bitwise(self):
        scores, y_true, groups = self.fixture()
        res = mitigate_calibrated_eo(scores, y_true, groups, seed=0)
        assert res.scores[4:].tobytes() == scores[4:].tobytes()

    def test_equal_miss_rates_change_nothing(self):
        scores = np.array([0.8, 0.2, 0.8, 0.2])
        y_true = np.array([1, 0, 1, 0])
        groups = np.array(["a", "a", "b", "b"])
        res = mitigate_calibrated_eo(scores, y_true, groups, seed=9)
        assert res.scores.tobytes() == scores.tobytes()
        assert res.mixing == {"a": 0.0, "b": 0.0}

    def test_large_sample_closes_gap(self):
        rng = np.random.default_rng(17)
        n = 6000
        groups = np.where(rng.uniform(size=n) < 0.5, "p", "q")
        y_true = (rng.uniform(size=n) < 0.3).astype(float)
        scores = np.clip(
            np.where(y_true == 1, 0.7, 0.25) + 0.05 * rng.standard_normal(n), 0, 1
        )
        scores[groups == "q"] = np.clip(scores[groups == "q"] - 0.15, 0, 1)
        before = [
            generalized_fnr(scores[groups == g], y_true[groups == g]) for g in ("p", "q")
        ]
        assert abs(before[0] - before[1]) > 0.1
        res = mitigate_calibrated_eo(scores, y_true, groups, seed=4)
        after = [
            generalized_fnr(res.scores[groups == g], y_true[groups == g])
            for g in ("p", "q")
        ]
        assert abs(after[0] - after[1]) <= 0.01

    def test_unreachable_target_warns_and_clamps(self):
        # "low" has trivial miss rate 0.2 but the target is 0.5: p would be 4.
        scores = np.array([0.9, 0.9, 0.9, 0.9, 0.1, 0.5, 0.5, 0.3])
        y_true = np.array([1, 1, 1, 1, 0, 1, 1, 0])
        groups = np.array(["low"] * 5 + ["high"] * 3)
        with pytest.warns(RuntimeWarning, match="clamped"):
            res = mitigate_calibrated_eo(scores, y_true, groups, seed=1)
        assert np.all(res.scores[:5][y_true[:5] == 1] == 0.8)

    def test_exactly_two_groups_required(self):
        scores = np.array([0.5, 0.6, 0.4, 0.5, 0.6, 0.4])
        y_true = np.array([1, 0, 1, 0, 1, 0])
        with pytest.raises(ValueError, match="exactly two"):
            mitigate_calibrated_eo(scores, y_true, np.array(["a", "a", "b", "b", "c", "c"]))
        with pytest.raises(ValueError, match="exactly two"):
            mitigate_calibrated_eo(scores, y_true, np.array(["a"] * 6))

    def test_cost_kinds(self):
        scores, y_true, groups = self.fixture()
        with pytest.raises(ValueError, match="cost"):
            mitigate_calibrated_eo(scores, y_true, groups, cost="fpr")

    def test_degenerate_groups_rejected(self):
        scores = np.array([0.5, 0.5, 0.5, 0.5])
        with pytest.raises(ValueError, match="degenerate"):
            mitigate_calibrated_eo(
                scores,
                np.array([1, 1, 1, 0]),
                np.array(["a", "a", "a", "b"]),
            )
        with pytest.raises(ValueError, match="probabilities"):
            mitigate_calibrated_eo(
                np.array([1.5, 0.5, 0.2, 0.4]),
                np.array([1, 0, 1, 0]),
                np.array(["a", "a", "b", "b"]),
            )

    def test_no_positives_error_message(self):
        with pytest.raises(ValueError, match="no positive"):
            generalized_fnr(np.array([0.2, 0.3]), np.array([0.0, 0.0]))
