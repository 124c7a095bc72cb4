"""Synthetic intra-segment misclassification scenarios.

A scenario is an artery made of two circular arcs A1 (left) and A2
(right) with equal chords r meeting at the canvas centre, crossed by a
vertical vein. The corrupted map relabels exactly A2's pixels as vein.
The arc-length ratio arc(A2)/arc(A1) is the scenario's rho; curvature of
the longer arc is tuned until the chain-code measured ratio matches the
request within 2%.

Arcs are circular because the chord/arc relation is closed form: an arc
with chord c subtending half-angle a has length c * a / sin(a).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import features, morphology
from .errors import UnreachableRhoError

_SAMPLE_STEP = 0.2  # px between successive curve samples
_CANVAS_PAD = 4


@dataclass(frozen=True)
class ScenarioSpec:
    rho: float
    width: int = 3
    chord: int | None = None  # None: canvas // 3
    curvature: float = 0.0    # base half-angle (rad) of the shorter arc
    canvas: int = 512
    seed: int = 7

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.width < 1:
            raise ValueError("width must be >= 1 px")
        if self.chord is not None and self.chord < 16:
            raise ValueError("chord must be >= 16 px")
        if not 0.0 <= self.curvature < math.pi:
            raise ValueError("curvature must lie in [0, pi)")


@dataclass(frozen=True)
class ScenarioPair:
    truth: np.ndarray
    corrupted: np.ndarray
    a1_path: np.ndarray      # ordered (row, col) centreline chain of A1
    a2_path: np.ndarray
    measured_rho: float      # chain-code arc(A2) / arc(A1)


def predicted_errors(rho: float) -> tuple[float, float, float]:
    """Analytic relative errors (tortuosity, density, box counts).

    Tortuosity: |1 - rho| / (rho + 1). Density and box counts share the
    form rho / (rho + 1). Note the tortuosity error tends to 1 as rho
    tends to 0: removing a vanishing A2 still halves the chord, which is
    what the arc/chord algebra yields.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return (
        abs(1.0 - rho) / (rho + 1.0),
        rho / (rho + 1.0),
        rho / (rho + 1.0),
    )


def _arc_samples(p_start, p_end, half_angle: float, bulge_sign: float) -> np.ndarray:
    """Dense (row, col) samples of a circular arc between two points.

    ``half_angle`` = 0 degenerates to the straight segment. ``bulge_sign``
    picks which side of the chord the arc bows to (+1: increasing rows).
    """
    p_start = np.asarray(p_start, dtype=np.float64)
    p_end = np.asarray(p_end, dtype=np.float64)
    chord_vec = p_end - p_start
    chord = float(np.hypot(*chord_vec))
    if half_angle < 1e-9:
        n = max(2, int(chord / _SAMPLE_STEP))
        t = np.linspace(0.0, 1.0, n)
        return p_start + t[:, None] * chord_vec

    radius = chord / (2.0 * math.sin(half_angle))
    mid = 0.5 * (p_start + p_end)
    normal = np.array([chord_vec[1], -chord_vec[0]]) / chord * bulge_sign
    center = mid - normal * radius * math.cos(half_angle)

    phi0 = math.atan2(p_start[0] - center[0], p_start[1] - center[1])
    bulge_peak = mid + normal * radius * (1.0 - math.cos(half_angle))
    phi_peak = math.atan2(bulge_peak[0] - center[0], bulge_peak[1] - center[1])
    delta = (phi_peak - phi0 + math.pi) % (2.0 * math.pi) - math.pi
    direction = 1.0 if delta >= 0 else -1.0

    length = chord * half_angle / math.sin(half_angle)
    n = max(2, int(length / _SAMPLE_STEP))
    angles = phi0 + direction * np.linspace(0.0, 2.0 * half_angle, n)
    rows = center[0] + radius * np.sin(angles)
    cols = center[1] + radius * np.cos(angles)
    return np.column_stack([rows, cols])


def _rasterize_chain(samples: np.ndarray) -> np.ndarray:
    """Minimal 8-connected pixel chain following the sampled curve."""
    pixels = np.rint(samples).astype(np.int64)
    if len(pixels) > 1:  # drop consecutive duplicates before the scan
        keep = np.ones(len(pixels), dtype=bool)
        keep[1:] = (np.diff(pixels, axis=0) != 0).any(axis=1)
        pixels = pixels[keep]
    chain: list[tuple[int, int]] = []
    for r, c in pixels:
        p = (int(r), int(c))
        # drop corner-cut pixels so the chain stays minimal
        while len(chain) >= 2 and _adjacent(chain[-2], p):
            chain.pop()
        if chain and not _adjacent(chain[-1], p):
            raise RuntimeError("curve sampling too coarse for chain rasterization")
        chain.append(p)
    return np.array(chain, dtype=np.int64)


def _adjacent(a, b) -> bool:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def _stamp_tube(shape: tuple[int, int], samples: np.ndarray, width: int) -> np.ndarray:
    """All pixels whose centre lies within width/2 of the sampled curve."""
    mask = np.zeros(shape, dtype=bool)
    if width == 1:
        chain = _rasterize_chain(samples)
        mask[chain[:, 0], chain[:, 1]] = True
        return mask
    radius = width / 2.0
    reach = int(math.ceil(radius)) + 1
    base = np.floor(samples).astype(np.int64)
    for dr in range(-reach, reach + 1):
        for dc in range(-reach, reach + 1):
            rr = base[:, 0] + dr
            cc = base[:, 1] + dc
            d2 = (rr - samples[:, 0]) ** 2 + (cc - samples[:, 1]) ** 2
            ok = (d2 <= radius * radius) & (rr >= 0) & (rr < shape[0]) & (cc >= 0) & (cc < shape[1])
            mask[rr[ok], cc[ok]] = True
    return mask


def _chain_arc(samples: np.ndarray) -> float:
    return morphology.chain_code_length(_rasterize_chain(samples))


def _solve_half_angle(target_g: float) -> float:
    """Invert g(a) = a / sin(a) on (0, pi); g is increasing from 1."""
    if target_g <= 1.0 + 1e-12:
        return 0.0
    lo, hi = 1e-6, math.pi - 1e-6
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid / math.sin(mid) < target_g:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_scenario(spec: ScenarioSpec) -> ScenarioPair:
    """Build the truth/corrupted label-map pair for one arc-ratio setting."""
    canvas = spec.canvas
    chord = spec.chord if spec.chord is not None else canvas // 3
    cy = cx = canvas // 2
    p0 = (float(cy), float(cx - chord))
    mid = (float(cy), float(cx))
    p1 = (float(cy), float(cx + chord))

    # the shorter arc keeps the base curvature; the longer one is tuned
    base_alpha = spec.curvature
    g_base = 1.0 if base_alpha < 1e-9 else base_alpha / math.sin(base_alpha)
    if spec.rho >= 1.0:
        fixed_side = "a1"
        target_g = spec.rho * g_base
    else:
        fixed_side = "a2"
        target_g = g_base / spec.rho

    alpha_free = _solve_half_angle(target_g)
    if alpha_free >= math.pi - 1e-3:
        raise UnreachableRhoError(f"rho {spec.rho} needs a closed circle at chord {chord}")

    def build(alpha_free_now: float):
        if fixed_side == "a1":
            s1 = _arc_samples(p0, mid, base_alpha, bulge_sign=1.0)
            s2 = _arc_samples(mid, p1, alpha_free_now, bulge_sign=1.0)
        else:
            s1 = _arc_samples(p0, mid, alpha_free_now, bulge_sign=1.0)
            s2 = _arc_samples(mid, p1, base_alpha, bulge_sign=1.0)
        return s1, s2

    def measured_ratio(alpha_free_now: float) -> float:
        s1, s2 = build(alpha_free_now)
        return _chain_arc(s2) / _chain_arc(s1)

    # refine against the discrete chain metric (the tuned arc's chain
    # length is monotone in its half-angle up to pixel quantisation)
    lo = max(0.0, alpha_free - 0.4)
    hi = min(math.pi - 1e-3, alpha_free + 0.4)
    best_alpha, best_err = alpha_free, abs(measured_ratio(alpha_free) / spec.rho - 1.0)
    for _ in range(30):
        if best_err <= 0.005:
            break
        mid_alpha = 0.5 * (lo + hi)
        ratio = measured_ratio(mid_alpha)
        err = abs(ratio / spec.rho - 1.0)
        if err < best_err:
            best_alpha, best_err = mid_alpha, err
        went_low = (ratio < spec.rho) if fixed_side == "a1" else (ratio > spec.rho)
        if went_low:
            lo = mid_alpha
        else:
            hi = mid_alpha
    if best_err > 0.02:
        raise UnreachableRhoError(
            f"could not realise rho {spec.rho} within 2% (best {best_err:.3f} off)"
        )

    s1, s2 = build(best_alpha)
    pad = _CANVAS_PAD + spec.width
    for s in (s1, s2):
        if s.min() < pad or s.max() >= canvas - pad:
            raise UnreachableRhoError(f"rho {spec.rho} arcs exceed the {canvas}px canvas")

    a1_path = _rasterize_chain(s1)
    a2_path = _rasterize_chain(s2)
    a1_tube = _stamp_tube((canvas, canvas), s1, spec.width)
    a2_tube = _stamp_tube((canvas, canvas), s2, spec.width)

    vein_rows = np.arange(pad, canvas - pad, _SAMPLE_STEP, dtype=np.float64)
    vein_samples = np.column_stack([vein_rows, np.full_like(vein_rows, float(cx))])
    vein_tube = _stamp_tube((canvas, canvas), vein_samples, spec.width)

    truth = np.zeros((canvas, canvas), dtype=np.uint8)
    truth[vein_tube] = 2
    truth[a1_tube | a2_tube] = 1  # artery wins at the crossing

    flipped = a2_tube & ~a1_tube
    corrupted = truth.copy()
    corrupted[flipped] = 2

    measured = _chain_arc(s2) / _chain_arc(s1)
    return ScenarioPair(
        truth=truth,
        corrupted=corrupted,
        a1_path=a1_path,
        a2_path=a2_path,
        measured_rho=measured,
    )


def empirical_errors(pair: ScenarioPair) -> tuple[float, float, float]:
    """Measured artery feature errors between corrupted and truth maps.

    Returns relative errors of (mean tortuosity, vessel density, box
    counts), the last averaged over the two smallest box sizes where the
    small-size approximation behind the analytic form holds.
    """
    mask_truth = morphology.class_mask(pair.truth, 1)
    mask_corr = morphology.class_mask(pair.corrupted, 1)

    tort_truth, _ = features.mean_tortuosity(
        morphology.decompose_branches(morphology.skeletonize(mask_truth))
    )
    tort_corr, _ = features.mean_tortuosity(
        morphology.decompose_branches(morphology.skeletonize(mask_corr))
    )
    tort_err = abs(tort_truth - tort_corr) / tort_truth

    dens_truth = features.vessel_density(mask_truth)
    dens_corr = features.vessel_density(mask_corr)
    dens_err = abs(dens_truth - dens_corr) / dens_truth

    curve_truth = features.box_counts(mask_truth)
    curve_corr = features.box_counts(mask_corr)
    box_errs = [
        abs(nt - nc) / nt
        for nt, nc in zip(curve_truth.counts[:2], curve_corr.counts[:2])
    ]
    return tort_err, dens_err, float(np.mean(box_errs))
