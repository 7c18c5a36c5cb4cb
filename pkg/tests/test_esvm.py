"""Squared-hinge SVM: gradient and solver oracles, re-encoding
properties, one-vs-rest classification, C selection."""

import numpy as np
import pytest

from scriptoria.esvm import (EsvmReencoder, MulticlassSvm, class_costs,
                             esvm_feature, select_c, svm_gradient,
                             svm_objective, train_linear_svm)


def finite_difference_gradient(w, pos, neg, c_p, c_n, h=1e-6):
    grad = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        grad[i] = (svm_objective(w + e, pos, neg, c_p, c_n)
                   - svm_objective(w - e, pos, neg, c_p, c_n)) / (2 * h)
    return grad


class TestGradient:
    def test_matches_central_differences_at_20_points(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(20):
            d = int(rng.integers(2, 8))
            pos = rng.standard_normal((int(rng.integers(1, 4)), d))
            neg = rng.standard_normal((int(rng.integers(2, 12)), d))
            c_p, c_n = float(rng.uniform(0.1, 5)), float(rng.uniform(0.1, 5))
            w = rng.standard_normal(d)
            analytic = svm_gradient(w, pos, neg, c_p, c_n)
            numeric = finite_difference_gradient(w, pos, neg, c_p, c_n)
            rel = (np.linalg.norm(analytic - numeric)
                   / max(np.linalg.norm(numeric), 1e-12))
            worst = max(worst, rel)
        assert worst <= 1e-5, f"worst relative error {worst}"


class TestTrainLinearSvm:
    def test_one_dimensional_against_dense_grid(self):
        """Mirror-pair 1-D problem: with both hinges active the objective
        is w^2/2 + 2*c*(1-w)^2, minimized at w = 4c/(1+4c) where
        c = c_p = c_n = C. The solver must hit that closed form and land
        at least as low as a dense grid scan."""
        pos = np.array([[1.0]])
        neg = np.array([[-1.0]])
        for C in (0.01, 1.0, 100.0):
            model = train_linear_svm(pos, neg, C=C)
            assert model.c_p == pytest.approx(C)
            assert model.c_n == pytest.approx(C)
            w_star = 4 * C / (1 + 4 * C)
            assert model.w[0] == pytest.approx(w_star, rel=1e-5)
            ws = np.linspace(-0.5, 3.0, 140001)
            values = [svm_objective(np.array([w]), pos, neg,
                                    model.c_p, model.c_n) for w in ws]
            assert model.objective_value <= float(np.min(values)) + 1e-6

    def test_identical_pos_and_neg_point(self):
        """With the same point on both sides the two hinges fight; the
        solver must still match a dense 1-D scan."""
        point = np.array([[1.0]])
        model = train_linear_svm(point, point, C=1.0)
        ws = np.linspace(-2.0, 2.0, 200001)
        values = [svm_objective(np.array([w]), point, point,
                                model.c_p, model.c_n) for w in ws]
        assert model.objective_value <= float(np.min(values)) + 1e-6

    def test_separable_blobs_perfect_training_accuracy(self):
        rng = np.random.default_rng(7)
        pos = rng.standard_normal((20, 2)) * 0.3 + np.array([3.0, 3.0])
        neg = rng.standard_normal((25, 2)) * 0.3 + np.array([-3.0, -3.0])
        model = train_linear_svm(pos, neg, C=100.0)
        assert np.all(pos @ model.w > 0)
        assert np.all(neg @ model.w < 0)

    def test_solver_matches_long_run_reference(self):
        """Final objective within 1e-6 relative of a 10x-iteration solve."""
        rng = np.random.default_rng(11)
        for _ in range(5):
            d = int(rng.integers(3, 10))
            pos = rng.standard_normal((2, d))
            neg = rng.standard_normal((15, d))
            short = train_linear_svm(pos, neg, C=1.0, max_iterations=1000)
            long = train_linear_svm(pos, neg, C=1.0, max_iterations=10000,
                                    tolerance=1e-10)
            rel = abs(short.objective_value - long.objective_value) \
                / max(abs(long.objective_value), 1e-12)
            assert rel <= 1e-6

    def test_doubling_negatives_while_halving_cost(self):
        """The negative hinge sum is linear in pool multiplicity, so
        explicitly halving c_n restores the objective exactly."""
        rng = np.random.default_rng(13)
        pos = rng.standard_normal((1, 5))
        neg = rng.standard_normal((8, 5))
        base = train_linear_svm(pos, neg, C=1.0)
        doubled = train_linear_svm(pos, np.vstack([neg, neg]), C=1.0,
                                   c_p=base.c_p, c_n=base.c_n / 2.0)
        w = np.linspace(-1, 1, 7)[:, None] * np.ones((1, 5))
        for row in w:
            a = svm_objective(row, pos, neg, base.c_p, base.c_n)
            b = svm_objective(row, pos, np.vstack([neg, neg]), doubled.c_p,
                              doubled.c_n)
            assert a == pytest.approx(b, abs=1e-12)
        np.testing.assert_allclose(doubled.w, base.w, atol=1e-5)

    def test_cost_weights_inverse_to_class_sizes(self):
        c_p, c_n = class_costs(2.0, 1, 9)
        assert c_p == pytest.approx(2.0 * 10 / 2)
        assert c_n == pytest.approx(2.0 * 10 / 18)

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError):
            train_linear_svm(np.zeros((0, 3)), np.ones((2, 3)))
        with pytest.raises(ValueError):
            class_costs(1.0, 0, 5)


class TestEsvmFeature:
    def test_unit_norm(self):
        rng = np.random.default_rng(17)
        feature = esvm_feature(rng.standard_normal(6),
                               rng.standard_normal((10, 6)))
        assert np.linalg.norm(feature) == pytest.approx(1.0, abs=1e-9)

    def test_positive_cosine_to_orthogonal_query(self):
        rng = np.random.default_rng(19)
        negatives = np.zeros((6, 4))
        negatives[:, :2] = rng.standard_normal((6, 2))
        query = np.array([0.0, 0.0, 1.0, 0.0])
        feature = esvm_feature(query, negatives, C=10.0)
        assert feature @ query > 0

    def test_deterministic(self):
        rng = np.random.default_rng(23)
        q = rng.standard_normal(5)
        negs = rng.standard_normal((12, 5))
        np.testing.assert_array_equal(esvm_feature(q, negs),
                                      esvm_feature(q, negs))

    def test_zero_query_rejected(self):
        with pytest.raises(ValueError):
            esvm_feature(np.zeros(4), np.ones((3, 4)))

    def test_reencoder_transform_rows(self):
        rng = np.random.default_rng(29)
        negs = rng.standard_normal((10, 5))
        X = rng.standard_normal((3, 5))
        out = EsvmReencoder(C=1.0).fit(negs).transform(X)
        assert out.shape == (3, 5)
        for i in range(3):
            np.testing.assert_allclose(out[i], esvm_feature(X[i], negs))

    def test_reencoder_dimension_mismatch(self):
        with pytest.raises(ValueError):
            EsvmReencoder().fit(np.ones((4, 5))).transform(np.ones((2, 3)))


class TestMulticlassSvm:
    def test_two_separated_gaussians(self):
        rng = np.random.default_rng(31)
        X = np.vstack([rng.standard_normal((40, 2)) * 0.4 + [2.5, 0.0],
                       rng.standard_normal((40, 2)) * 0.4 + [-2.5, 0.0]])
        y = np.array(["a"] * 40 + ["b"] * 40)
        clf = MulticlassSvm(C=10.0).fit(X, y)
        test = np.vstack([rng.standard_normal((30, 2)) * 0.4 + [2.5, 0.0],
                          rng.standard_normal((30, 2)) * 0.4 + [-2.5, 0.0]])
        truth = np.array(["a"] * 30 + ["b"] * 30)
        assert clf.score(test, truth) >= 0.95

    def test_one_point_per_class_symmetry(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([0, 1])
        clf = MulticlassSvm(C=10.0).fit(X, y)
        assert clf.predict(np.array([[0.9, 0.0]]))[0] == 0
        assert clf.predict(np.array([[-0.9, 0.0]]))[0] == 1

    def test_argmax_scale_invariance(self):
        rng = np.random.default_rng(37)
        X = rng.standard_normal((30, 3))
        y = rng.integers(3, size=30)
        clf = MulticlassSvm(C=1.0).fit(X, y)
        base = clf.predict(X)
        for m in clf.models_:
            m.w = m.w * 4.5
        np.testing.assert_array_equal(clf.predict(X), base)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            MulticlassSvm().fit(np.ones((4, 2)), np.zeros(4))


class TestSelectC:
    def _writer_data(self, rng, writers=6, docs=6, dim=4):
        X, labels = [], []
        means = 4.0 * rng.standard_normal((writers, dim))
        for w in range(writers):
            X.append(means[w] + 0.3 * rng.standard_normal((docs, dim)))
            labels.extend([f"w{w}"] * docs)
        return np.vstack(X), np.array(labels)

    def test_degenerate_grid_returns_its_value(self):
        rng = np.random.default_rng(41)
        X, y = self._writer_data(rng)
        C, scores = select_c(X, y, mode="retrieval", grid=[0.5])
        assert C == 0.5
        assert set(scores) == {0.5}

    def test_retrieval_folds_are_writer_disjoint(self):
        from scriptoria.esvm import _writer_disjoint_folds

        rng = np.random.default_rng(43)
        _, y = self._writer_data(rng)
        folds = _writer_disjoint_folds(y, 2, seed=0)
        assert not (set(folds[0]) & set(folds[1]))
        assert set(folds[0]) | set(folds[1]) == set(np.unique(y))

    def test_scores_reproduce_on_rerun(self):
        rng = np.random.default_rng(47)
        X, y = self._writer_data(rng, writers=4, docs=4)
        grid = [0.1, 10.0]
        c1, s1 = select_c(X, y, mode="retrieval", grid=grid, seed=3)
        c2, s2 = select_c(X, y, mode="retrieval", grid=grid, seed=3)
        assert c1 == c2 and s1 == s2

    def test_classification_mode_prefers_separating_c(self):
        rng = np.random.default_rng(53)
        X, y = self._writer_data(rng, writers=3, docs=10)
        C, scores = select_c(X, y, mode="classification",
                             grid=[1e-5, 1.0], n_folds=2)
        assert scores[C] == max(scores.values())

    def test_single_label_rejected(self):
        with pytest.raises(ValueError):
            select_c(np.ones((4, 2)), np.zeros(4))
