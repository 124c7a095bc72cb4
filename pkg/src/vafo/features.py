"""Clinical vascular features: density, fractal dimension, tortuosity.

Box counting uses the dyadic size set {2^i : 2 <= 2^i <= min(h, w)} with
tiles anchored at the grid origin; ragged edge tiles count like any
other. The fractal dimension is the least-squares slope of log N(eps)
against log(1/eps), natural logs, over sizes with a positive count.
Tortuosity is chain-code arc length over endpoint chord length, per
branch; image-level tortuosity is the unweighted mean over branches with
chord >= 3 px (shorter chords are numerically unstable and skipped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import morphology
from .errors import DegenerateBranchError, TooSmallError, UndefinedFeatureError

#: minimum chord (px) for a branch to enter tortuosity statistics
MIN_TORTUOSITY_CHORD = 3.0


@dataclass(frozen=True)
class BoxCountCurve:
    sizes: tuple[int, ...]   # ascending dyadic box sizes
    counts: tuple[int, ...]  # occupied tiles per size


@dataclass(frozen=True)
class FeatureRecord:
    class_id: int
    vessel_density: float
    fractal_dimension: float
    mean_tortuosity: float  # nan when no branch qualifies
    n_branches: int         # branches contributing to the mean


def dyadic_box_sizes(height: int, width: int) -> tuple[int, ...]:
    """All powers of two from 2 up to min(height, width)."""
    limit = min(height, width)
    if limit < 2:
        raise TooSmallError(f"grid {height}x{width} too small for box counting")
    sizes = []
    size = 2
    while size <= limit:
        sizes.append(size)
        size *= 2
    return tuple(sizes)


def vessel_density(mask: np.ndarray) -> float:
    """Foreground fraction of the grid."""
    mask = np.asarray(mask, dtype=bool)
    return float(mask.sum()) / mask.size


def occupied_tiles(mask: np.ndarray, size: int) -> int:
    """Number of size x size origin-anchored tiles containing foreground."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    th, tw = -(-h // size), -(-w // size)
    padded = np.zeros((th * size, tw * size), dtype=bool)
    padded[:h, :w] = mask
    return int(padded.reshape(th, size, tw, size).any(axis=(1, 3)).sum())


def box_counts(mask: np.ndarray) -> BoxCountCurve:
    mask = np.asarray(mask, dtype=bool)
    sizes = dyadic_box_sizes(*mask.shape)
    return BoxCountCurve(sizes=sizes, counts=tuple(occupied_tiles(mask, s) for s in sizes))


def fractal_dimension(curve: BoxCountCurve) -> float:
    """Least-squares slope of log N vs log(1/eps) over positive counts."""
    pts = [(s, n) for s, n in zip(curve.sizes, curve.counts) if n > 0]
    if len(pts) < 2:
        raise UndefinedFeatureError("fractal dimension needs >= 2 positive box counts")
    x = np.array([math.log(1.0 / s) for s, _ in pts])
    y = np.array([math.log(n) for _, n in pts])
    x_c = x - x.mean()
    return float(np.dot(x_c, y) / np.dot(x_c, x_c))


def tortuosity(branch: morphology.Branch) -> float:
    """Arc over chord for one branch; raises on chords below 3 px."""
    if branch.chord_length < MIN_TORTUOSITY_CHORD:
        raise DegenerateBranchError(
            f"chord {branch.chord_length:.3f} px below {MIN_TORTUOSITY_CHORD}"
        )
    return branch.arc_length / branch.chord_length


def mean_tortuosity(graph: morphology.VesselGraph) -> tuple[float, int]:
    """Unweighted mean tortuosity and the number of branches used."""
    values = [
        b.arc_length / b.chord_length
        for b in graph.branches
        if b.chord_length >= MIN_TORTUOSITY_CHORD
    ]
    if not values:
        return float("nan"), 0
    return float(np.mean(values)), len(values)


def feature_record(labels: np.ndarray, class_id: int) -> FeatureRecord:
    """Density, fractal dimension, and mean tortuosity for one class.

    Raises UndefinedFeatureError when the class has no pixels at all.
    """
    mask = morphology.class_mask(labels, class_id)
    if not mask.any():
        raise UndefinedFeatureError(f"class {class_id} absent from map")
    density = vessel_density(mask)
    fd = fractal_dimension(box_counts(mask))
    graph = morphology.decompose_branches(morphology.skeletonize(mask))
    tort, n_used = mean_tortuosity(graph)
    return FeatureRecord(
        class_id=class_id,
        vessel_density=density,
        fractal_dimension=fd,
        mean_tortuosity=tort,
        n_branches=n_used,
    )
