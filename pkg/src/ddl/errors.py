"""Exception and warning types shared across the package.

The CLI maps these onto process exit codes: anything rooted at
``DataError`` exits 2, ``NumericalError`` exits 3, usage problems exit 1.
"""


class DdlError(Exception):
    """Base class for all package errors."""


class DataError(DdlError):
    """Problems with input data or persisted files."""


class NumericalError(DdlError):
    """A numerical routine failed (overflow, NaN, degenerate system)."""


class BadMagicError(DataError):
    """File does not start with the expected magic bytes."""


class TruncatedError(DataError):
    """File is shorter than its header promises."""


class CountMismatchError(DataError):
    """Image and label files disagree on the number of items."""


class LabelOutOfRangeError(DataError):
    """A label byte exceeds the number of classes."""


class NotEnoughPatchesError(DataError):
    """Fewer distinct nonzero patches than requested dictionary atoms."""


class ShapeMismatchError(DataError):
    """Two arrays that must share a shape do not."""


class DimensionMismatchError(DataError):
    """Dictionary atom dimension does not match the signal dimension."""


class LengthMismatchError(DataError):
    """Datasets that must be aligned have different lengths."""


class PatchTooLargeError(DataError):
    """Requested patch size exceeds the image."""


class ImageSmallerThanWindowError(DataError):
    """Image is smaller than the similarity window."""


class ZeroReferenceError(DataError):
    """All-zero reference image makes peak-based metrics undefined."""


class EmptyDictionaryError(DataError):
    """Dictionary has no usable (nonzero) atoms."""


class NonFiniteError(NumericalError):
    """NaN or infinity appeared mid-iteration."""


class SingularGramWarning(UserWarning):
    """Selected atoms became numerically dependent; the atom was skipped."""
