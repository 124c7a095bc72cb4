"""Exception types shared across the package.

Filesystem failures (unwritable paths etc.) are not wrapped; they surface
as the builtin OSError.
"""


class VafoError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(VafoError):
    """Two maps that must share a shape do not."""


class DecodeError(VafoError):
    """A file could not be parsed in the expected format."""


class BadMagicError(DecodeError):
    """A probability file does not start with the VAFP magic bytes."""


class UnknownColorError(DecodeError):
    """A label PNG contains a pixel outside the class palette."""

    def __init__(self, pixel, rgb):
        self.pixel = pixel
        self.rgb = rgb
        super().__init__(f"unknown label color {rgb} at pixel {pixel}")


class NormalizationError(DecodeError):
    """A probability map violates the per-pixel normalization contract."""

    def __init__(self, pixel, detail):
        self.pixel = pixel
        super().__init__(f"bad probabilities at pixel {pixel}: {detail}")


class BadClassIdError(VafoError):
    """Class id outside the vessel classes {1, 2, 3}."""


class TooSmallError(VafoError):
    """Grid too small for dyadic box counting (min side < 2)."""


class UndefinedFeatureError(VafoError):
    """Feature is undefined, e.g. fractal dimension of an empty mask."""


class DegenerateBranchError(VafoError):
    """Tortuosity requested for a branch with chord below 3 px."""


class EmptyGroundTruthError(VafoError):
    """Strict mode: a loss class has no ground-truth foreground."""


class TooFewSubjectsError(VafoError):
    """ICC needs at least 3 paired subjects."""


class EmptySampleError(VafoError):
    """Rank test called with an empty sample."""


class SingleClassError(VafoError):
    """AUC requested but only one label value is present."""


class EmptyDataError(VafoError):
    """Bootstrap called with no data."""


class UnreachableRhoError(VafoError):
    """Requested arc ratio cannot be realised inside the canvas."""


class BadSizeError(VafoError):
    """Synthetic cohort size must be a positive even number."""


class PairingError(VafoError):
    """Prediction/ground-truth directories could not be paired by stem."""
