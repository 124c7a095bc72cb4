import math
from itertools import combinations

import numpy as np
import pytest

from conftest import make_annulus, make_disk
from vafo import metrics as ME
from vafo.errors import (
    EmptyDataError,
    EmptySampleError,
    ShapeMismatchError,
    SingleClassError,
    TooFewSubjectsError,
)


class TestSegScores:
    def test_identical_maps(self, rng):
        labels = rng.integers(0, 4, size=(20, 20)).astype(np.uint8)
        s = ME.seg_scores(labels, labels)
        for c, sc in s.per_class.items():
            if not math.isnan(sc.f1):
                assert sc.f1 == 1.0 and sc.iou == 1.0 and sc.mse == 0.0
        assert s.weighted.f1 == 1.0 and s.weighted.mse == 0.0

    def test_half_overlap_confusion_counts(self):
        # TP=50, FP=50, FN=50 by construction
        gt = np.zeros((20, 20), np.uint8)
        gt[0:10, 0:10] = 1
        pred = np.zeros((20, 20), np.uint8)
        pred[0:10, 5:15] = 1
        s = ME.seg_scores(pred, gt).per_class[1]
        assert s.f1 == pytest.approx(0.5)
        assert s.iou == pytest.approx(1 / 3)
        assert s.mse == pytest.approx(100 / 400)

    def test_all_background_prediction(self):
        gt = np.zeros((8, 8), np.uint8)
        gt[2:5, 2:5] = 1
        s = ME.seg_scores(np.zeros((8, 8), np.uint8), gt).per_class[1]
        assert s.f1 == 0.0 and s.iou == 0.0

    def test_dice_jaccard_identity(self, rng):
        for _ in range(10):
            pred = rng.integers(0, 4, size=(16, 16)).astype(np.uint8)
            gt = rng.integers(0, 4, size=(16, 16)).astype(np.uint8)
            s = ME.seg_scores(pred, gt)
            for sc in s.per_class.values():
                if math.isnan(sc.f1):
                    continue
                assert sc.f1 == pytest.approx(2 * sc.iou / (1 + sc.iou), abs=1e-12)
                assert sc.f1 >= sc.iou - 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ME.seg_scores(np.zeros((2, 2), np.uint8), np.zeros((2, 3), np.uint8))


class TestBetti:
    def test_disk(self):
        b = ME.betti_numbers(make_disk((41, 41), (20, 20), 15))
        assert (b.b0, b.b1) == (1, 0)

    def test_annulus(self):
        b = ME.betti_numbers(make_annulus((41, 41), (20, 20), 15, 8))
        assert (b.b0, b.b1) == (1, 1)

    def test_two_annuli(self):
        mask = make_annulus((41, 90), (20, 22), 15, 8) | make_annulus((41, 90), (20, 65), 15, 8)
        b = ME.betti_numbers(mask)
        assert (b.b0, b.b1) == (2, 2)

    def test_border_hugging_mask(self):
        # padding ring keeps the outer background a single component
        mask = np.ones((10, 10), bool)
        mask[4:6, 4:6] = False
        b = ME.betti_numbers(mask)
        assert (b.b0, b.b1) == (1, 1)

    def test_additivity_under_disjoint_union(self, rng):
        for _ in range(5):
            left = np.zeros((40, 90), bool)
            right = np.zeros((40, 90), bool)
            left[:, :40] = rng.uniform(size=(40, 40)) < 0.5
            right[:, 50:] = rng.uniform(size=(40, 40)) < 0.5
            a, b, u = ME.betti_numbers(left), ME.betti_numbers(right), ME.betti_numbers(left | right)
            assert u.b0 == a.b0 + b.b0
            assert u.b1 == a.b1 + b.b1

    def test_error_component_split(self):
        # prediction splits one artery component in two: artery error 1,
        # vein error 0, class mean 0.5
        gt = np.zeros((20, 30), np.uint8)
        gt[10, 5:25] = 1
        pred = gt.copy()
        pred[10, 15] = 0
        assert ME.betti_error(pred, gt) == pytest.approx(0.5)

    def test_error_hole_per_class(self):
        gt = np.zeros((30, 60), np.uint8)
        gt[make_disk((30, 60), (15, 15), 8)] = 1
        gt[make_disk((30, 60), (15, 45), 8)] = 2
        pred = gt.copy()
        pred[15, 15] = 0  # punch a hole in the artery disk
        pred[15, 45] = 0  # and in the vein disk
        assert ME.betti_error(pred, gt) == pytest.approx(1.0)

    def test_error_identical(self, rng):
        labels = rng.integers(0, 3, size=(24, 24)).astype(np.uint8)
        assert ME.betti_error(labels, labels) == 0.0

    def test_patch_mode(self):
        gt = np.zeros((20, 20), np.uint8)
        gt[5, 2:18] = 1
        pred = gt.copy()
        pred[5, 10] = 0
        whole = ME.betti_error(pred, gt)
        patched = ME.betti_error(pred, gt, patch=10)
        assert whole == pytest.approx(0.5)
        assert patched >= 0.0


def icc_two_way_longhand(table):
    """Independent ANOVA route: residual form for the error sum of squares."""
    n, k = table.shape
    grand = table.sum() / (n * k)
    row_means = [row.sum() / k for row in table]
    col_means = [table[:, j].sum() / n for j in range(k)]
    msr = k * sum((rm - grand) ** 2 for rm in row_means) / (n - 1)
    msc = n * sum((cm - grand) ** 2 for cm in col_means) / (k - 1)
    sse = sum(
        (table[i, j] - row_means[i] - col_means[j] + grand) ** 2
        for i in range(n)
        for j in range(k)
    )
    mse = sse / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)


class TestIcc:
    def test_perfect_agreement(self, rng):
        x = rng.normal(size=12)
        res = ME.icc(np.column_stack([x, x]), resamples=100)
        assert res.icc == pytest.approx(1.0, abs=1e-12)
        assert res.ci_low <= res.icc <= res.ci_high

    def test_anti_agreement_is_negative(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        res = ME.icc(np.column_stack([x, 5.0 - x]), resamples=100)
        assert res.icc < 0

    def test_matches_longhand_anova(self, rng):
        for _ in range(5):
            gt = rng.normal(0, 2, 20)
            pred = gt + rng.normal(0, 0.7, 20) + 0.3
            table = np.column_stack([pred, gt])
            res = ME.icc(table, resamples=0)
            assert res.icc == pytest.approx(icc_two_way_longhand(table), abs=1e-10)

    def test_symmetric_in_raters(self, rng):
        gt = rng.normal(size=15)
        pred = gt + rng.normal(0, 0.5, 15)
        a = ME.icc(np.column_stack([pred, gt]), resamples=0).icc
        b = ME.icc(np.column_stack([gt, pred]), resamples=0).icc
        assert a == pytest.approx(b, abs=1e-12)

    def test_too_few_subjects(self):
        with pytest.raises(TooFewSubjectsError):
            ME.icc([(1.0, 1.0), (2.0, 2.0)])

    def test_zero_variance_flag(self):
        res = ME.icc([(3.0, 3.0)] * 5)
        assert not res.defined and math.isnan(res.icc)

    def test_bootstrap_is_deterministic(self, rng):
        gt = rng.normal(size=10)
        table = np.column_stack([gt + rng.normal(0, 0.4, 10), gt])
        a = ME.icc(table, resamples=200, seed=3)
        b = ME.icc(table, resamples=200, seed=3)
        assert (a.ci_low, a.ci_high) == (b.ci_low, b.ci_high)


def mwu_exact_oracle(a, b):
    """Two-sided p by enumerating every rank assignment (tie-free input)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    order = pooled.argsort()
    ranks = np.empty(n + m)
    ranks[order] = np.arange(1, n + m + 1)
    observed = min(ranks[:n].sum() - n * (n + 1) / 2, n * m - (ranks[:n].sum() - n * (n + 1) / 2))
    hits = total = 0
    for subset in combinations(range(n + m), n):
        u = ranks[list(subset)].sum() - n * (n + 1) / 2
        if min(u, n * m - u) <= observed + 1e-9:
            hits += 1
        total += 1
    return min(1.0, hits / total)


class TestMannWhitney:
    def test_disjoint_small_samples(self):
        u, p = ME.mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert u == 0.0
        assert p == pytest.approx(0.1, abs=1e-12)

    def test_identical_multisets(self):
        _, p = ME.mann_whitney_u([1, 2, 2, 5], [1, 2, 2, 5])
        assert p == pytest.approx(1.0, abs=1e-9)

    def test_exact_matches_enumeration(self, rng):
        for _ in range(8):
            n = int(rng.integers(2, 8))
            m = int(rng.integers(2, 8))
            a = rng.normal(size=n)
            b = rng.normal(rng.uniform(-1, 1), size=m)
            u, p = ME.mann_whitney_u(a, b, method="exact")
            assert p == pytest.approx(mwu_exact_oracle(a, b), abs=1e-12)

    def test_normal_approximation_near_exact_at_7(self, rng):
        # a clearly separated case; the approximation error grows toward
        # mid-range U and peaks around 0.012, so pick a tail case
        a = [1.0, 2.0, 3.0, 4.0, 5.0, 8.0, 9.0]
        b = [6.0, 7.0, 10.0, 11.0, 12.0, 13.0, 14.0]
        _, p_exact = ME.mann_whitney_u(a, b, method="exact")
        _, p_norm = ME.mann_whitney_u(a, b, method="normal")
        assert abs(p_exact - p_norm) < 0.01

    def test_u_statistics_sum_to_nm(self, rng):
        for _ in range(10):
            a = rng.normal(size=int(rng.integers(2, 12)))
            b = rng.normal(size=int(rng.integers(2, 12)))
            u_a, _ = ME.mann_whitney_u(a, b)
            u_b, _ = ME.mann_whitney_u(b, a)
            assert u_a + u_b == pytest.approx(a.size * b.size)

    def test_empty_sample(self):
        with pytest.raises(EmptySampleError):
            ME.mann_whitney_u([], [1.0])

    def test_exact_refuses_ties(self):
        with pytest.raises(ValueError):
            ME.mann_whitney_u([1, 1, 2], [2, 3, 4], method="exact")


class TestRocPrAuc:
    def test_perfect_separation(self):
        auc, ap = ME.roc_pr_auc([0.9, 0.8, 0.7, 0.3, 0.2, 0.1], [1, 1, 1, 0, 0, 0])
        assert auc == 1.0 and ap == 1.0

    def test_constant_scores(self):
        auc, _ = ME.roc_pr_auc([0.5] * 8, [1, 0, 1, 0, 1, 0, 1, 0])
        assert auc == 0.5

    def test_matches_pairwise_count_exactly(self, rng):
        scores = rng.normal(size=100)
        labels = (rng.uniform(size=100) < 0.35).astype(int)
        labels[:2] = (0, 1)  # both classes present
        scores[labels == 1] += 0.5
        scores[::7] = np.round(scores[::7], 1)  # inject some ties
        auc, _ = ME.roc_pr_auc(scores, labels)
        pos, neg = scores[labels == 1], scores[labels == 0]
        brute = sum(
            1.0 if sp > sn else 0.5 if sp == sn else 0.0 for sp in pos for sn in neg
        ) / (pos.size * neg.size)
        assert auc == brute

    def test_matches_trapezoidal_integration_without_ties(self, rng):
        scores = rng.permutation(np.linspace(0, 1, 60))
        labels = (rng.uniform(size=60) < 0.4).astype(int)
        labels[:2] = (0, 1)
        auc, _ = ME.roc_pr_auc(scores, labels)
        # oracle: explicit ROC curve swept over thresholds
        thresholds = np.concatenate([[np.inf], np.sort(scores)[::-1]])
        pos, neg = (labels == 1).sum(), (labels == 0).sum()
        tpr = [(scores[labels == 1] >= t).sum() / pos for t in thresholds]
        fpr = [(scores[labels == 0] >= t).sum() / neg for t in thresholds]
        assert auc == pytest.approx(np.trapezoid(tpr, fpr), abs=1e-12)

    def test_average_precision_with_ties(self):
        # two tied scores, one of each label: precision at that threshold
        # group is 2/3 applied to the recall mass it adds
        scores = [0.9, 0.5, 0.5, 0.1]
        labels = [1, 1, 0, 0]
        _, ap = ME.roc_pr_auc(scores, labels)
        assert ap == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3), abs=1e-12)

    def test_single_class(self):
        with pytest.raises(SingleClassError):
            ME.roc_pr_auc([0.1, 0.2], [1, 1])


class TestBootstrap:
    def test_constant_data(self):
        lo, hi = ME.bootstrap_ci(np.mean, np.full(10, 3.25), resamples=50)
        assert lo == hi == 3.25

    def test_mean_ci_brackets_half(self, rng):
        data = (rng.uniform(size=400) < 0.5).astype(float)
        lo, hi = ME.bootstrap_ci(np.mean, data, resamples=300)
        assert lo < 0.5 < hi

    def test_deterministic_given_seed(self, rng):
        data = rng.normal(size=40)
        a = ME.bootstrap_ci(np.mean, data, resamples=100, seed=11)
        b = ME.bootstrap_ci(np.mean, data, resamples=100, seed=11)
        assert a == b

    def test_empty_data(self):
        with pytest.raises(EmptyDataError):
            ME.bootstrap_ci(np.mean, [])
