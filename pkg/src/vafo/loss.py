"""Segmentation loss combining cross entropy with multi-scale box-count error.

The box term compares soft box counts of the predicted probability planes
against hard counts of the ground-truth class masks over the dyadic size
set, one term per class (artery and vein by default):

    per class:  sum_i sqrt(eps_i) * |N_gt(eps_i) - N_soft(eps_i)| / N_gt(eps_i)
                ------------------------------------------------------------
                                 sqrt(sum_i eps_i^2)

and the final box loss is the mean over classes. Soft counts take the
per-tile maximum of the probability plane, which equals the hard count on
binary input; the subgradient routes to each tile's argmax pixel (lowest
raster index on ties). Sizes whose ground-truth count is zero carry no
structure and are skipped unless ``strict_empty`` is set.

Gradients are taken with respect to the probability grid itself; mapping
them back through a softmax is the caller's concern.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import features, morphology
from .errors import EmptyGroundTruthError, ShapeMismatchError
from .raster_io import N_CLASSES

#: clamp applied inside logarithms
PROB_FLOOR = 1e-7

VESSEL_CLASSES = (1, 2)


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.5
    class_set: tuple[int, ...] = VESSEL_CLASSES
    epsilon_set: tuple[int, ...] | None = None  # None: derived from the grid
    soft_sharpness: float | None = None  # None: hard per-tile max
    strict_empty: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.soft_sharpness is not None and self.soft_sharpness <= 0:
            raise ValueError("soft_sharpness must be positive when set")
        if not self.class_set or any(c not in (1, 2, 3) for c in self.class_set):
            raise ValueError(f"class_set must be non-empty vessel classes, got {self.class_set}")


@dataclass(frozen=True)
class LossValue:
    total: float
    loss_v: float  # cross-entropy component
    loss_b: float  # box-count component (before the lambda weight)
    gradient: np.ndarray | None = None


def _check_pair(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 3 or probs.shape[2] != N_CLASSES:
        raise ShapeMismatchError(f"probability grid must be (H, W, {N_CLASSES}), got {probs.shape}")
    if labels.shape != probs.shape[:2]:
        raise ShapeMismatchError(
            f"label shape {labels.shape} does not match probability grid {probs.shape[:2]}"
        )
    return probs, labels


def loss_v_mae_form(pred_plane: np.ndarray, true_plane: np.ndarray) -> tuple[float, float]:
    """Density-difference loss and its mean-absolute-error upper bound.

    Returns (|mean(s) - mean(t)|, mean(|s - t|)); the first never exceeds
    the second, with equality exactly when s - t does not change sign.
    """
    s = np.asarray(pred_plane, dtype=np.float64)
    t = np.asarray(true_plane, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeMismatchError(f"plane shapes differ: {s.shape} vs {t.shape}")
    diff = s - t
    n = s.size
    return abs(float(diff.sum())) / n, float(np.abs(diff).sum()) / n


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-probability of the true class, with gradient.

    Probabilities are clamped to [1e-7, 1] inside the log. The gradient is
    -1/(N * s_c) on each pixel's true-class channel and zero elsewhere
    (it treats channels as free variables; no softmax coupling).
    """
    probs, labels = _check_pair(probs, labels)
    h, w, _ = probs.shape
    n = h * w
    rows, cols = np.indices((h, w))
    picked = probs[rows, cols, labels]
    clamped = np.clip(picked, PROB_FLOOR, 1.0)
    value = float(-np.log(clamped).sum()) / n + 0.0  # normalise -0.0

    grad = np.zeros_like(probs)
    live = picked >= PROB_FLOOR  # below the floor the clamp flattens the loss
    g = np.where(live, -1.0 / (n * clamped), 0.0)
    grad[rows, cols, labels] = g
    return value, grad


def _tiles(plane: np.ndarray, size: int, pad_value: float) -> np.ndarray:
    """(tiles_h, tiles_w, size*size) view of an origin-anchored tiling."""
    h, w = plane.shape
    th, tw = -(-h // size), -(-w // size)
    padded = np.full((th * size, tw * size), pad_value, dtype=np.float64)
    padded[:h, :w] = plane
    return padded.reshape(th, size, tw, size).transpose(0, 2, 1, 3).reshape(th, tw, size * size)


def soft_box_counts(
    plane: np.ndarray,
    size: int,
    sharpness: float | None = None,
    with_grad: bool = False,
):
    """Differentiable occupied-tile count of one probability plane.

    Default is the hard per-tile maximum; with ``sharpness`` beta set, the
    smooth surrogate log-sum-exp(beta * tile)/beta is used instead (an
    upper bound on the max that spreads gradient over the tile).
    Returns the scalar, or (scalar, gradient plane) when ``with_grad``.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    if sharpness is None:
        tiles = _tiles(plane, size, pad_value=-1.0)  # pad below any probability
        maxes = tiles.max(axis=2)
        value = float(maxes.sum())
        if not with_grad:
            return value
        grad = np.zeros((h, w), dtype=np.float64)
        idx = tiles.argmax(axis=2)
        tr, tc = np.indices(idx.shape)
        rr = tr * size + idx // size
        cc = tc * size + idx % size
        grad[rr.ravel(), cc.ravel()] = 1.0
        return value, grad

    beta = float(sharpness)
    tiles = _tiles(plane, size, pad_value=-np.inf)
    shifted = beta * tiles
    peak = shifted.max(axis=2, keepdims=True)
    expd = np.exp(shifted - peak)
    sums = expd.sum(axis=2)
    value = float(((peak[..., 0] + np.log(sums)) / beta).sum())
    if not with_grad:
        return value
    weights = expd / sums[..., np.newaxis]  # softmax over each tile
    th, tw = weights.shape[:2]
    padded = weights.reshape(th, tw, size, size).transpose(0, 2, 1, 3).reshape(th * size, tw * size)
    return value, padded[:h, :w].copy()


def _epsilon_set(cfg: LossConfig, shape: tuple[int, int]) -> tuple[int, ...]:
    if cfg.epsilon_set is not None:
        return cfg.epsilon_set
    return features.dyadic_box_sizes(*shape)


def loss_b(
    probs: np.ndarray,
    labels: np.ndarray,
    cfg: LossConfig | None = None,
    with_grad: bool = True,
) -> tuple[float, np.ndarray | None]:
    """Normalised multi-scale box-count discrepancy, averaged over classes."""
    cfg = cfg or LossConfig()
    probs, labels = _check_pair(probs, labels)
    sizes = _epsilon_set(cfg, labels.shape)

    grad = np.zeros_like(probs) if with_grad else None
    class_values: list[float] = []
    for class_id in cfg.class_set:
        gt_mask = morphology.class_mask(labels, class_id)
        gt_counts = {s: features.occupied_tiles(gt_mask, s) for s in sizes}
        live_sizes = [s for s in sizes if gt_counts[s] > 0]
        if not live_sizes:
            if cfg.strict_empty:
                raise EmptyGroundTruthError(f"class {class_id} has no ground-truth foreground")
            continue
        norm = float(np.sqrt(sum(float(s) ** 2 for s in live_sizes)))
        plane = probs[:, :, class_id]
        value = 0.0
        for s in live_sizes:
            n_gt = gt_counts[s]
            coeff = np.sqrt(float(s)) / norm
            if with_grad:
                n_soft, g = soft_box_counts(plane, s, cfg.soft_sharpness, with_grad=True)
            else:
                n_soft = soft_box_counts(plane, s, cfg.soft_sharpness)
            err = (n_gt - n_soft) / n_gt
            value += coeff * abs(err)
            if with_grad:
                # d|x|/dx with subgradient 0 at the kink
                sign = 0.0 if err == 0.0 else (-1.0 if err > 0.0 else 1.0)
                grad[:, :, class_id] += (coeff * sign / n_gt) * g
        class_values.append(value)

    if not class_values:
        return 0.0, grad
    mean_value = float(np.mean(class_values))
    if with_grad:
        grad /= len(class_values)
    return mean_value, grad


def vafo_loss(
    probs: np.ndarray,
    labels: np.ndarray,
    cfg: LossConfig | None = None,
    with_grad: bool = True,
) -> LossValue:
    """Cross entropy plus lambda-weighted box loss; lambda = 0 gives plain CE."""
    cfg = cfg or LossConfig()
    ce, ce_grad = cross_entropy(probs, labels)
    lb, lb_grad = loss_b(probs, labels, cfg, with_grad=with_grad)
    total = ce + cfg.lam * lb
    grad = None
    if with_grad:
        grad = ce_grad + cfg.lam * lb_grad
    return LossValue(total=total, loss_v=ce, loss_b=lb, gradient=grad)


def random_probmap(shape: tuple[int, int], rng: np.random.Generator, floor: float = 0.2) -> np.ndarray:
    """Random normalized probability grid with all channels >= floor/4-ish.

    The floor keeps every channel well inside (0, 1), where central
    differences of the log are accurate, so gradient checks are meaningful.
    """
    raw = rng.uniform(floor, 1.0, size=shape + (N_CLASSES,))
    return (raw / raw.sum(axis=2, keepdims=True)).astype(np.float64)


def random_labelmap(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, N_CLASSES, size=shape).astype(np.uint8)


@dataclass
class GradientCheckReport:
    max_rel_err_ce: float
    max_rel_err_lb: float
    max_rel_err_total: float
    n_checked: int
    n_excluded: int
    excluded: set = field(default_factory=set, repr=False)

    @property
    def worst(self) -> float:
        return max(self.max_rel_err_ce, self.max_rel_err_lb, self.max_rel_err_total)


def _tie_excluded_coords(probs, labels, cfg, sizes, margin) -> set:
    """Coordinates whose central difference would straddle a kink.

    Two sources: tiles whose top-two values are within the margin (the
    argmax can flip), and sizes where the soft count sits within the
    margin of the ground-truth count (the |.| sign can flip, which
    contaminates the finite difference at that size's argmax pixels).
    """
    excluded = set()
    for class_id in cfg.class_set:
        plane = probs[:, :, class_id]
        gt_mask = morphology.class_mask(labels, class_id)
        for s in sizes:
            n_gt = features.occupied_tiles(gt_mask, s)
            if n_gt == 0:
                continue
            tiles = _tiles(plane, s, pad_value=-1.0)
            th, tw, _ = tiles.shape
            order = np.sort(tiles, axis=2)
            gap = order[:, :, -1] - order[:, :, -2] if tiles.shape[2] > 1 else np.full((th, tw), np.inf)
            idx = tiles.argmax(axis=2)
            n_soft = float(tiles.max(axis=2).sum())
            sign_fragile = abs(n_gt - n_soft) <= margin
            for tr in range(th):
                for tc in range(tw):
                    if gap[tr, tc] <= margin or sign_fragile:
                        r = tr * s + int(idx[tr, tc]) // s
                        c = tc * s + int(idx[tr, tc]) % s
                        if r < plane.shape[0] and c < plane.shape[1]:
                            excluded.add((r, c, class_id))
                        if gap[tr, tc] <= margin:
                            # runner-up pixels can take over the max
                            flat = tiles[tr, tc]
                            near = np.nonzero(flat >= flat.max() - margin)[0]
                            for k in near:
                                rr = tr * s + int(k) // s
                                cc = tc * s + int(k) % s
                                if rr < plane.shape[0] and cc < plane.shape[1]:
                                    excluded.add((rr, cc, class_id))
    return excluded


def finite_difference_report(
    probs: np.ndarray,
    labels: np.ndarray,
    cfg: LossConfig | None = None,
    step: float = 1e-4,
) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences.

    Checks every coordinate of the probability grid except those within
    10 * step of a tile tie or an absolute-value kink, where the loss is
    not differentiable and the comparison is meaningless.
    """
    cfg = cfg or LossConfig()
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    sizes = _epsilon_set(cfg, labels.shape)
    margin = 10.0 * step

    _, ce_grad = cross_entropy(probs, labels)
    _, lb_grad = loss_b(probs, labels, cfg, with_grad=True)
    total_grad = ce_grad + cfg.lam * lb_grad

    excluded = _tie_excluded_coords(probs, labels, cfg, sizes, margin)

    def rel_err(analytic: float, numeric: float) -> float:
        scale = max(abs(analytic), abs(numeric))
        if scale < 1e-12:
            return 0.0
        return abs(analytic - numeric) / scale

    worst = {"ce": 0.0, "lb": 0.0, "total": 0.0}
    n_checked = 0
    h, w, c = probs.shape
    work = probs.copy()
    for r in range(h):
        for col in range(w):
            for ch in range(c):
                if (r, col, ch) in excluded:
                    continue
                base = work[r, col, ch]
                work[r, col, ch] = base + step
                ce_hi, _ = cross_entropy(work, labels)
                lb_hi, _ = loss_b(work, labels, cfg, with_grad=False)
                work[r, col, ch] = base - step
                ce_lo, _ = cross_entropy(work, labels)
                lb_lo, _ = loss_b(work, labels, cfg, with_grad=False)
                work[r, col, ch] = base
                fd_ce = (ce_hi - ce_lo) / (2 * step)
                fd_lb = (lb_hi - lb_lo) / (2 * step)
                fd_total = fd_ce + cfg.lam * fd_lb
                worst["ce"] = max(worst["ce"], rel_err(ce_grad[r, col, ch], fd_ce))
                worst["lb"] = max(worst["lb"], rel_err(lb_grad[r, col, ch], fd_lb))
                worst["total"] = max(worst["total"], rel_err(total_grad[r, col, ch], fd_total))
                n_checked += 1

    return GradientCheckReport(
        max_rel_err_ce=worst["ce"],
        max_rel_err_lb=worst["lb"],
        max_rel_err_total=worst["total"],
        n_checked=n_checked,
        n_excluded=len(excluded),
        excluded=excluded,
    )
