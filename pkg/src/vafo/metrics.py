"""Evaluation stack: overlap scores, topology error, and agreement statistics.

Segmentation scores are computed per vessel class from the confusion
counts of that class plane; the weighted aggregate uses ground-truth
pixel shares as weights. Topology is summarised by Betti numbers under
the standard digital pairing (foreground 8-connected, background
4-connected, one padding ring so the outside counts once).

Agreement statistics follow the two-rater setting (method vs ground
truth): ICC is the two-way random-effects, absolute-agreement, single
measurement form with a percentile-bootstrap CI; group comparisons use
the Mann-Whitney U test with an exact small-sample path; classifier
quality uses rank-statistic AUC-ROC and step-interpolated AUC-PR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import morphology
from .errors import (
    EmptyDataError,
    EmptySampleError,
    ShapeMismatchError,
    SingleClassError,
    TooFewSubjectsError,
)

VESSEL_CLASS_IDS = (1, 2, 3)


@dataclass(frozen=True)
class ClassScores:
    f1: float
    iou: float
    mse: float  # raw fraction; multiply by 100 for reporting


@dataclass(frozen=True)
class SegScores:
    per_class: dict[int, ClassScores]  # nan scores for classes absent everywhere
    weighted: ClassScores


@dataclass(frozen=True)
class BettiPair:
    b0: int
    b1: int


@dataclass(frozen=True)
class IccResult:
    icc: float
    ci_low: float
    ci_high: float
    defined: bool = True


def seg_scores(pred: np.ndarray, gt: np.ndarray) -> SegScores:
    """Per-class F1/IOU/MSE plus the ground-truth-share weighted aggregate."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"map shapes differ: {pred.shape} vs {gt.shape}")
    n = gt.size
    per_class: dict[int, ClassScores] = {}
    weights: dict[int, float] = {}
    total_fg = int(np.isin(gt, VESSEL_CLASS_IDS).sum())
    for c in VESSEL_CLASS_IDS:
        p = pred == c
        g = gt == c
        tp = int((p & g).sum())
        fp = int((p & ~g).sum())
        fn = int((~p & g).sum())
        if tp + fp + fn == 0:
            per_class[c] = ClassScores(float("nan"), float("nan"), float("nan"))
            continue
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)
        iou = tp / (tp + fp + fn)
        mse = (fp + fn) / n
        per_class[c] = ClassScores(f1, iou, mse)
        weights[c] = (int(g.sum()) / total_fg) if total_fg else float("nan")

    def agg(pick) -> float:
        if not weights:
            return float("nan")
        return float(sum(weights[c] * pick(per_class[c]) for c in weights))

    weighted = ClassScores(
        f1=agg(lambda s: s.f1), iou=agg(lambda s: s.iou), mse=agg(lambda s: s.mse)
    )
    return SegScores(per_class=per_class, weighted=weighted)


def betti_numbers(mask: np.ndarray) -> BettiPair:
    """b0 = 8-connected foreground components, b1 = enclosed holes."""
    mask = np.asarray(mask, dtype=bool)
    b0, _ = morphology.connected_components(mask, connectivity=8)
    padded = np.pad(mask, 1, constant_values=False)
    bg_components, _ = morphology.connected_components(~padded, connectivity=4)
    return BettiPair(b0=b0, b1=bg_components - 1)


def betti_error(pred: np.ndarray, gt: np.ndarray, patch: int | None = None) -> float:
    """Mean over artery/vein of |delta b0| + |delta b1|.

    With ``patch`` set, both maps are cut into patch x patch tiles and the
    per-class error is averaged over tiles before the class mean.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"map shapes differ: {pred.shape} vs {gt.shape}")

    def class_error(p_mask, g_mask) -> float:
        bp = betti_numbers(p_mask)
        bg = betti_numbers(g_mask)
        return abs(bp.b0 - bg.b0) + abs(bp.b1 - bg.b1)

    errors = []
    for c in (1, 2):
        p_mask = pred == c
        g_mask = gt == c
        if patch is None:
            errors.append(class_error(p_mask, g_mask))
        else:
            tile_errors = []
            h, w = gt.shape
            for r0 in range(0, h, patch):
                for c0 in range(0, w, patch):
                    tile_errors.append(
                        class_error(
                            p_mask[r0 : r0 + patch, c0 : c0 + patch],
                            g_mask[r0 : r0 + patch, c0 : c0 + patch],
                        )
                    )
            errors.append(float(np.mean(tile_errors)))
    return float(np.mean(errors))


def _anova_mean_squares(table: np.ndarray) -> tuple[float, float, float]:
    """(MSR, MSC, MSE) of a subjects x raters two-way layout."""
    n, k = table.shape
    grand = table.mean()
    row_means = table.mean(axis=1)
    col_means = table.mean(axis=0)
    ss_total = float(((table - grand) ** 2).sum())
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    ss_err = ss_total - ss_rows - ss_cols
    return ss_rows / (n - 1), ss_cols / (k - 1), ss_err / ((n - 1) * (k - 1))


def _icc_point(table: np.ndarray) -> float:
    n, k = table.shape
    msr, msc, mse = _anova_mean_squares(table)
    denom = msr + (k - 1) * mse + (k / n) * (msc - mse)
    return (msr - mse) / denom


def icc(pairs, resamples: int = 2000, seed: int = 7) -> IccResult:
    """Two-way random, absolute-agreement, single-measurement ICC.

    ``pairs`` is a sequence of (predicted, ground_truth) feature values,
    one per subject. The CI is a percentile bootstrap over subjects at
    [2.5, 97.5]; it is widened if needed so it brackets the point
    estimate. All-identical tables have no subject variance and return
    defined=False with nan values.
    """
    table = np.asarray(list(pairs), dtype=np.float64)
    if table.ndim != 2 or table.shape[1] != 2:
        raise ValueError(f"expected (n, 2) pairs, got shape {table.shape}")
    n = table.shape[0]
    if n < 3:
        raise TooFewSubjectsError(f"ICC needs >= 3 subjects, got {n}")
    if not np.isfinite(table).all():
        raise ValueError("feature values must be finite")
    if np.allclose(table, table.ravel()[0]):
        return IccResult(float("nan"), float("nan"), float("nan"), defined=False)

    point = _icc_point(table)

    values = []
    for i in range(resamples):
        rng = np.random.default_rng((seed, i))
        rows = table[rng.integers(0, n, size=n)]
        if np.allclose(rows, rows.ravel()[0]):
            continue
        val = _icc_point(rows)
        if np.isfinite(val):
            values.append(val)
    if values:
        low, high = np.percentile(values, [2.5, 97.5])
    else:
        low = high = point
    return IccResult(icc=point, ci_low=min(float(low), point), ci_high=max(float(high), point))


def _exact_u_distribution(n: int, m: int) -> np.ndarray:
    """Exact null distribution of U by the classic counting recurrence.

    f(i, j, u) = f(i-1, j, u-j) + f(i, j-1, u): the largest pooled value
    is either from the first sample (beating all j others) or not.
    """
    f = np.zeros((m + 1, n * m + 1), dtype=np.float64)
    f[:, 0] = 1.0  # zero first-sample items: U = 0
    for _ in range(n):
        g = np.zeros_like(f)
        g[0, 0] = 1.0
        for j in range(1, m + 1):
            g[j] = g[j - 1]
            g[j, j:] += f[j, : n * m + 1 - j]
        f = g
    return f[m]


def mann_whitney_u(a, b, method: str = "auto") -> tuple[float, float]:
    """U statistic of the first sample and a two-sided p-value.

    Exact p by full enumeration of the null distribution when
    n*m <= 64 and there are no ties; otherwise the normal approximation
    with tie and continuity corrections. ``method`` forces a path
    ("exact" or "normal").
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("both samples must be non-empty")
    n, m = a.size, b.size
    combined = np.concatenate([a, b])
    ranks = _midranks(combined)
    r_a = ranks[:n].sum()
    u_a = float(r_a - n * (n + 1) / 2.0)
    u_b = n * m - u_a

    _, tie_counts = np.unique(combined, return_counts=True)
    has_ties = bool((tie_counts > 1).any())

    if method == "exact" or (method == "auto" and n * m <= 64 and not has_ties):
        if has_ties:
            raise ValueError("exact p-value is only defined for tie-free samples")
        dist = _exact_u_distribution(n, m)
        total = dist.sum()
        u_min = min(u_a, u_b)
        p = 2.0 * dist[: int(u_min) + 1].sum() / total
        return u_a, min(1.0, float(p))

    big_u = max(u_a, u_b)
    nn = n + m
    tie_term = float(((tie_counts**3 - tie_counts).sum())) / (nn * (nn - 1)) if nn > 1 else 0.0
    sd = math.sqrt(n * m / 12.0 * ((nn + 1) - tie_term))
    if sd == 0.0:
        return u_a, 1.0  # every value identical: no evidence either way
    z = (big_u - n * m / 2.0 - 0.5) / sd
    p = math.erfc(z / math.sqrt(2.0))  # == 2 * normal_sf(z)
    return u_a, min(1.0, float(p))


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_pr_auc(scores, labels) -> tuple[float, float]:
    """Rank-statistic AUC-ROC and step-interpolated AUC-PR."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise SingleClassError("need both positive and negative labels")

    ranks = _midranks(scores)
    r_pos = ranks[labels == 1].sum()
    auc_roc = (r_pos - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size)

    # average precision over descending unique thresholds
    order = np.argsort(-scores, kind="stable")
    sorted_labels = np.asarray(labels)[order]
    sorted_scores = scores[order]
    tp = fp = 0
    prev_recall = 0.0
    ap = 0.0
    i = 0
    n = scores.size
    total_pos = pos.size
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        group_pos = int((sorted_labels[i : j + 1] == 1).sum())
        tp += group_pos
        fp += (j - i + 1) - group_pos
        recall = tp / total_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(auc_roc), float(ap)


def bootstrap_ci(
    statistic,
    data,
    resamples: int = 1000,
    percentiles: tuple[float, float] = (5.0, 95.0),
    seed: int = 7,
) -> tuple[float, float]:
    """Percentile bootstrap of ``statistic`` over rows of ``data``.

    Resample i draws its indices from a generator keyed by (seed, i), so
    results are reproducible and independent of evaluation order.
    Resamples where the statistic is undefined (raises or returns
    non-finite) are dropped.
    """
    rows = np.asarray(data)
    if rows.size == 0:
        raise EmptyDataError("bootstrap needs non-empty data")
    n = rows.shape[0]
    values = []
    for i in range(resamples):
        rng = np.random.default_rng((seed, i))
        sample = rows[rng.integers(0, n, size=n)]
        try:
            v = float(statistic(sample))
        except Exception:
            continue
        if math.isfinite(v):
            values.append(v)
    if not values:
        raise EmptyDataError("statistic undefined on every resample")
    low, high = np.percentile(values, list(percentiles))
    return float(low), float(high)
