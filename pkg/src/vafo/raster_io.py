"""Loading, storing, and converting segmentation rasters.

Two in-memory representations are used throughout the package:

* label map  -- 2-D uint8 array of class ids
  (0 background, 1 artery, 2 vein, 3 uncertain)
* probability map -- (H, W, 4) float32 array, per-pixel class
  probabilities summing to 1, channel order matching the class ids

Label maps travel as RGB PNGs (black/red/blue/green by default) and
probability maps as VAFP files, a small raw float32 container defined in
``save_probmap``.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    BadMagicError,
    DecodeError,
    NormalizationError,
    ShapeMismatchError,
    UnknownColorError,
)

N_CLASSES = 4
CLASS_NAMES = ("background", "artery", "vein", "uncertain")

#: class id -> RGB triple used in label PNGs
DEFAULT_PALETTE = {
    0: (0, 0, 0),
    1: (255, 0, 0),
    2: (0, 0, 255),
    3: (0, 255, 0),
}

_VAFP_MAGIC = b"VAFP"
_VAFP_VERSION = 1
# channel sums may drift this far from 1 before a file is rejected
_SUM_TOLERANCE = 1e-4
# drift at or below this is treated as codec noise and left untouched
_SUM_NOISE = 1e-6


def validate_label_map(labels: np.ndarray) -> np.ndarray:
    """Check dtype/shape/value constraints and return a uint8 view."""
    arr = np.asarray(labels)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"label map must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype == bool:  # binary masks (e.g. skeletons) save as background/artery
        arr = arr.astype(np.uint8)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"label map must be integer-typed, got {arr.dtype}")
    if arr.min() < 0 or arr.max() >= N_CLASSES:
        raise ValueError("label map contains ids outside {0, 1, 2, 3}")
    return arr.astype(np.uint8, copy=False)


def validate_prob_map(probs: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Check an (H, W, 4) probability grid: values in [0, 1], sums within tol of 1."""
    arr = np.asarray(probs, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != N_CLASSES or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"probability map must have shape (H, W, {N_CLASSES}), got {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    sums = arr.sum(axis=2, dtype=np.float64)
    if np.abs(sums - 1.0).max() > tol:
        raise ValueError("per-pixel channel sums deviate from 1 beyond tolerance")
    return arr


def load_label_png(path, palette: dict[int, tuple[int, int, int]] | None = None) -> np.ndarray:
    """Read a color-coded label PNG into a label map.

    Every pixel must match one palette color exactly; anything else raises
    UnknownColorError. Malformed or non-image files raise DecodeError.
    """
    palette = DEFAULT_PALETTE if palette is None else palette
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode label image {path}: {exc}") from exc
    if rgb.size == 0:
        raise DecodeError(f"empty image: {path}")

    labels = np.full(rgb.shape[:2], -1, dtype=np.int16)
    for class_id, color in palette.items():
        match = np.all(rgb == np.array(color, dtype=np.uint8), axis=2)
        labels[match] = class_id
    if (labels < 0).any():
        r, c = np.argwhere(labels < 0)[0]
        raise UnknownColorError((int(r), int(c)), tuple(int(v) for v in rgb[r, c]))
    return labels.astype(np.uint8)


def save_label_png(labels: np.ndarray, path, palette: dict[int, tuple[int, int, int]] | None = None) -> None:
    """Write a label map as an RGB PNG; load_label_png inverts it exactly."""
    labels = validate_label_map(labels)
    palette = DEFAULT_PALETTE if palette is None else palette
    lut = np.zeros((N_CLASSES, 3), dtype=np.uint8)
    for class_id, color in palette.items():
        lut[class_id] = color
    Image.fromarray(lut[labels]).save(path, format="PNG")


def write_vafp(planes: np.ndarray, path) -> None:
    """Write raw (H, W, C) float32 planes in the VAFP container.

    Layout (little-endian): magic ``VAFP``, u16 version=1, u16 reserved=0,
    u32 height, u32 width, u32 channels, then ``channels`` row-major
    float32 planes. No value constraints; use save_probmap for
    probability maps.
    """
    arr = np.ascontiguousarray(np.asarray(planes, dtype="<f4"))
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, C) array, got shape {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(_VAFP_MAGIC)
        fh.write(struct.pack("<HHIII", _VAFP_VERSION, 0, h, w, c))
        fh.write(np.transpose(arr, (2, 0, 1)).tobytes())


def read_vafp(path) -> np.ndarray:
    """Read a VAFP container back into an (H, W, C) float32 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != _VAFP_MAGIC:
        raise BadMagicError(f"not a VAFP file: {path}")
    version, _reserved, h, w, c = struct.unpack("<HHIII", blob[4:20])
    if version != _VAFP_VERSION:
        raise DecodeError(f"unsupported VAFP version {version}")
    if h == 0 or w == 0 or c == 0:
        raise ShapeMismatchError(f"degenerate VAFP shape {(h, w, c)}")
    expected = 20 + 4 * h * w * c
    if len(blob) != expected:
        raise ShapeMismatchError(
            f"VAFP payload is {len(blob) - 20} bytes, header implies {expected - 20}"
        )
    flat = np.frombuffer(blob[20:], dtype="<f4")
    return np.transpose(flat.reshape(c, h, w), (1, 2, 0)).copy()


def save_probmap(probs: np.ndarray, path) -> None:
    """Validate and write a probability map to a VAFP file."""
    write_vafp(validate_prob_map(probs), path)


def load_probmap(path) -> np.ndarray:
    """Read and validate a probability map from a VAFP file.

    Channel sums within 1e-6 of 1 are kept bit-exact (save -> load is the
    identity for valid maps); sums off by up to 1e-4 are renormalised;
    anything further, or any value outside [0, 1], raises
    NormalizationError.
    """
    arr = read_vafp(path)
    if arr.shape[2] != N_CLASSES:
        raise ShapeMismatchError(f"probability map needs {N_CLASSES} channels, file has {arr.shape[2]}")
    bad = (arr < 0.0) | (arr > 1.0) | ~np.isfinite(arr)
    if bad.any():
        r, c, ch = np.argwhere(bad)[0]
        raise NormalizationError((int(r), int(c)), f"channel {ch} value {arr[r, c, ch]!r} outside [0, 1]")
    sums = arr.sum(axis=2, dtype=np.float64)
    dev = np.abs(sums - 1.0)
    if dev.max() > _SUM_TOLERANCE:
        r, c = np.unravel_index(int(np.argmax(dev)), dev.shape)
        raise NormalizationError((int(r), int(c)), f"channel sum {sums[r, c]!r}")
    drift = dev > _SUM_NOISE
    if drift.any():
        arr[drift] = arr[drift] / sums[drift, np.newaxis].astype(np.float32)
    return arr


def harden(probs: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over channels; ties resolve to the lowest class id."""
    arr = validate_prob_map(probs)
    return np.argmax(arr, axis=2).astype(np.uint8)


def one_hot(labels: np.ndarray) -> np.ndarray:
    """Expand a label map to exact 0/1 probability planes."""
    labels = validate_label_map(labels)
    planes = np.zeros(labels.shape + (N_CLASSES,), dtype=np.float32)
    rows, cols = np.indices(labels.shape)
    planes[rows, cols, labels] = 1.0
    return planes
