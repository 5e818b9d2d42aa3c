import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metric_oracles import brute_metrics, pairwise_auc, sweep_ap, tally
from msse import metrics
from msse.metrics import ConfusionMatrix, class_metrics, cohen_kappa, confusion


def _random_matrix(rng, k, total=None):
    return rng.integers(0, 20, size=(k, k))


class TestConfusion:
    def test_perfect(self):
        cm = confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
        assert np.array_equal(cm.counts, np.diag([1, 1, 2]))

    def test_degenerate_predictor(self):
        cm = confusion([0, 1, 2, 1], [0, 0, 0, 0], 3)
        assert cm.counts[:, 1:].sum() == 0 and cm.counts[:, 0].tolist() == [1, 2, 1]

    def test_matches_tally(self):
        rng = np.random.default_rng(0)
        t, p = rng.integers(0, 5, 200), rng.integers(0, 5, 200)
        assert confusion(t, p, 5).counts.tolist() == tally(t, p, 5)

    def test_errors(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0], 2)
        with pytest.raises(ValueError):
            confusion([0, 2], [0, 1], 2)


class TestClassMetrics:
    def test_perfect(self):
        m = class_metrics(ConfusionMatrix(np.diag([3, 4, 5])))
        assert np.all(m.precision == 1) and np.all(m.recall == 1) and np.all(m.f1 == 1)
        assert m.accuracy == 1 and m.macro["f1"] == 1 and m.weighted["precision"] == 1

    def test_two_class(self):
        m = class_metrics(ConfusionMatrix([[8, 2], [1, 9]]))
        assert m.precision[0] == pytest.approx(8 / 9, abs=1e-15)
        assert m.recall[0] == pytest.approx(0.8, abs=1e-15)
        assert m.f1[0] == pytest.approx(2 * (8 / 9) * 0.8 / (8 / 9 + 0.8), abs=1e-15)
        assert round(m.f1[0], 4) == 0.8421

    def test_zero_division_flag(self):
        m = class_metrics(ConfusionMatrix([[5, 0], [3, 0]]))
        assert m.precision[1] == 0.0 and 1 in m.zero_division["precision"]

    def test_empty(self):
        with pytest.raises(ValueError):
            class_metrics(ConfusionMatrix(np.zeros((3, 3))))

    @pytest.mark.parametrize("seed", range(50))
    def test_against_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 10))
        counts = _random_matrix(rng, k)
        got = class_metrics(ConfusionMatrix(counts))
        ref = brute_metrics(counts.tolist())
        for key in ("precision", "recall", "f1"):
            np.testing.assert_allclose(getattr(got, key), ref[key], rtol=0, atol=1e-12)
        assert abs(got.accuracy - ref["accuracy"]) < 1e-12
        assert abs(got.weighted["recall"] - got.accuracy) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 6).flatmap(lambda k: st.lists(
        st.lists(st.integers(0, 30), min_size=k, max_size=k), min_size=k, max_size=k)))
    def test_weighted_recall_is_accuracy(self, rows):
        counts = np.array(rows)
        if counts.sum() == 0:
            return
        m = class_metrics(ConfusionMatrix(counts))
        assert abs(m.weighted["recall"] - m.accuracy) < 1e-12

    def test_permutation(self):
        rng = np.random.default_rng(5)
        counts = _random_matrix(rng, 5) + 1
        perm = rng.permutation(5)
        a = class_metrics(ConfusionMatrix(counts))
        b = class_metrics(ConfusionMatrix(counts[np.ix_(perm, perm)]))
        np.testing.assert_allclose(b.precision, a.precision[perm], atol=1e-15)
        assert a.accuracy == pytest.approx(b.accuracy, abs=1e-15)
        assert a.macro["f1"] == pytest.approx(b.macro["f1"], abs=1e-12)
        assert cohen_kappa(ConfusionMatrix(counts))[0] == pytest.approx(
            cohen_kappa(ConfusionMatrix(counts[np.ix_(perm, perm)]))[0], abs=1e-12)


class TestKappa:
    def test_perfect(self):
        assert cohen_kappa(ConfusionMatrix(np.diag([4, 5, 6])))[0] == 1.0

    def test_independent(self):
        # outer product of matching marginals: p_o == p_e
        marg = np.array([2, 3, 5])
        counts = np.outer(marg, marg)
        kappa, p_o, p_e = cohen_kappa(ConfusionMatrix(counts))
        assert abs(kappa) < 1e-12 and abs(p_o - p_e) < 1e-12

    def test_reference_marginals(self):
        marg = np.array([450, 500, 528, 406, 500, 484, 500, 450, 386])
        total = marg.sum()
        assert total == 4204
        # diagonal mass gives p_o = 0.9931 with row sums == column sums == marg
        errors = round((1 - 0.9931) * total)  # 29 misclassified samples
        assert errors == 29
        counts = np.diag(marg).astype(np.int64)

        def move(cycle):
            # each class in the cycle sends one sample to the next: marginals unchanged
            for a, b in zip(cycle, cycle[1:] + cycle[:1]):
                counts[a, a] -= 1
                counts[a, b] += 1

        for i in range(9):
            move([i, (i + 1) % 9, (i + 2) % 9])
        move([0, 4])
        assert counts.trace() == total - errors
        kappa, p_o, p_e = cohen_kappa(ConfusionMatrix(counts))
        assert np.array_equal(counts.sum(axis=0), marg) and np.array_equal(counts.sum(axis=1), marg)
        assert abs(p_e - 0.1121) <= 1e-4
        assert abs(p_o - 0.9931) < 5e-4
        k_exact = (0.9931 - p_e) / (1 - p_e)
        assert abs(k_exact - 0.9922) <= 2e-4
        assert abs(kappa - 0.9922) <= 2e-4

    def test_single_class_degenerate(self):
        with pytest.raises(ValueError):
            cohen_kappa(ConfusionMatrix([[5, 0], [0, 0]]))

    @pytest.mark.parametrize("seed", range(30))
    def test_bounds(self, seed):
        rng = np.random.default_rng(seed)
        counts = _random_matrix(rng, int(rng.integers(2, 7))) + 1
        kappa = cohen_kappa(ConfusionMatrix(counts))[0]
        assert -1 <= kappa < 1


class TestCurves:
    def test_perfect(self):
        labels = np.array([0, 1, 2, 1, 0])
        scores = np.eye(3)[labels] * 0.8 + 0.1
        for avg in ("micro", "macro"):
            assert metrics.roc_curve(scores, labels, avg)[1] == 1.0
            assert metrics.pr_curve(scores, labels, avg)[1] == 1.0

    def test_random_half(self):
        rng = np.random.default_rng(0)
        scores = rng.dirichlet(np.ones(3), size=5000)
        labels = rng.integers(0, 3, 5000)
        assert abs(metrics.roc_curve(scores, labels)[1] - 0.5) < 0.05

    def test_single_positive_last(self):
        n = 7
        scores = np.linspace(1, 0, n)
        pos = np.zeros(n, bool)
        pos[-1] = True
        assert metrics.binary_pr(scores, pos)[3] == pytest.approx(1 / n, abs=1e-15)

    @pytest.mark.parametrize("seed", range(20))
    def test_auc_pairwise_oracle(self, seed):
        rng = np.random.default_rng(seed)
        labels = np.r_[0, 1, 2, rng.integers(0, 3, 17)]
        scores = rng.dirichlet(np.ones(3), size=20).round(1)  # forces ties
        _, auc = metrics.roc_curve(scores, labels, "micro")
        onehot = np.eye(3, dtype=bool)[labels]
        assert abs(auc - pairwise_auc(scores.ravel().tolist(), onehot.ravel().tolist())) < 1e-9
        _, auc_macro = metrics.roc_curve(scores, labels, "macro")
        ref = np.mean([pairwise_auc(scores[:, k].tolist(), onehot[:, k].tolist()) for k in range(3)])
        assert abs(auc_macro - ref) < 1e-9

    @pytest.mark.parametrize("seed", range(20))
    def test_ap_sweep_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        labels = np.r_[0, 1, 2, rng.integers(0, 3, 17)]
        scores = rng.dirichlet(np.ones(3), size=20).round(1)
        onehot = np.eye(3, dtype=bool)[labels]
        _, ap = metrics.pr_curve(scores, labels, "micro")
        assert abs(ap - sweep_ap(scores.ravel().tolist(), onehot.ravel().tolist())) < 1e-9

    def test_monotone_invariance(self):
        rng = np.random.default_rng(3)
        scores = rng.random(40)
        pos = rng.random(40) < 0.4
        a = metrics.binary_roc(scores, pos)[3]
        b = metrics.binary_roc(np.exp(3 * scores) - 7, pos)[3]
        assert a == b

    def test_no_positives(self):
        with pytest.raises(ValueError):
            metrics.binary_roc([0.1, 0.2], [False, False])
        with pytest.raises(ValueError):
            metrics.binary_pr([0.1, 0.2], [False, False])

    def test_curve_endpoints(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 3, 30)
        scores = rng.dirichlet(np.ones(3), size=30)
        roc, _ = metrics.roc_curve(scores, labels)
        assert roc["fpr"][0] == 0 and roc["tpr"][0] == 0 and roc["fpr"][-1] == 1 and roc["tpr"][-1] == 1
        pr, _ = metrics.pr_curve(scores, labels)
        assert pr["recall"][-1] == 1


class TestReport:
    def test_evaluate_and_serialize(self, tmp_path):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 3, 50)
        scores = rng.dirichlet(np.ones(3), size=50)
        rep = metrics.evaluate(labels, scores, ["a", "b", "c"])
        rep.save_json(tmp_path / "r.json")
        rep.save_curves(tmp_path / "roc.csv", tmp_path / "pr.csv")
        data = json.loads((tmp_path / "r.json").read_text())
        assert set(data["per_class"]) == {"a", "b", "c"}
        assert (tmp_path / "roc.csv").read_text().startswith("threshold,fpr,tpr")
        assert (tmp_path / "pr.csv").read_text().startswith("threshold,precision,recall")
        table = metrics.format_table(rep)
        assert "macro avg" in table and "weighted avg" in table

    def test_perfect_table(self):
        labels = np.arange(9).repeat(3)
        rep = metrics.evaluate(labels, np.eye(9)[labels])
        for line in metrics.format_table(rep).splitlines()[1:11]:
            assert line.split()[-4:-1] == ["1.0000"] * 3
