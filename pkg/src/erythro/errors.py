"""Exception types shared across the package."""


class ErythroError(Exception):
    """Base class for all package-specific errors."""


# -- dataset ingestion ------------------------------------------------------

class MissingDirectory(ErythroError):
    """A required variant or class directory is absent."""


class DecodeError(ErythroError):
    """An image file could not be decoded; aborts the load."""


class ManifestMismatch(ErythroError):
    """Declared per-class counts differ from the files found on disk."""


# -- feature extraction / model files ---------------------------------------

class ModelLoadError(ErythroError):
    """A backbone model file is missing, unreadable, or the engine is unavailable."""


class InferenceError(ErythroError):
    """Backbone inference failed or produced non-finite values."""


class DimMismatch(ErythroError):
    """A dimension disagrees with the declared one (registry/model/feature skew)."""


# -- serialization -----------------------------------------------------------

class IoError(ErythroError):
    """Underlying filesystem read/write failure."""


class FormatError(ErythroError):
    """Bad magic, truncated payload, or malformed container."""


class VersionMismatch(ErythroError):
    """Container version not supported by this reader."""


# -- classifiers -------------------------------------------------------------

class EmptyInput(ErythroError):
    """An operation that needs at least one sample got none."""


class SingleClassInput(ErythroError):
    """SVM training needs at least two distinct labels."""


class NonFiniteFeature(ErythroError):
    """NaN or infinity encountered where finite values are required."""


# -- evaluation / reporting --------------------------------------------------

class BadK(ErythroError):
    """Fold count outside 2..n."""


class EmptyMatrix(ErythroError):
    """Confusion matrix with zero total."""


class EmptyGrid(ErythroError):
    """No experiment cells available for the requested rendering."""
