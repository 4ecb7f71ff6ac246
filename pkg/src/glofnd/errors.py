"""Exception types shared across the package."""


class GlofndError(Exception):
    """Base class for every error raised by this package."""


class ZeroRowError(GlofndError, ValueError):
    """A row that must be normalized has (near-)zero Euclidean norm."""


class DimMismatchError(GlofndError, ValueError):
    """Operand dimensions are incompatible."""


class ShapeMismatchError(GlofndError, ValueError):
    """Array shapes disagree where they must match exactly."""


class EmptyScoresError(GlofndError, ValueError):
    """A score set that must be nonempty is empty."""


class AlphaOutOfRangeError(GlofndError, ValueError):
    """The top-fraction parameter is outside its valid range."""


class EmptyNegativesError(GlofndError, ValueError):
    """An anchor has no negative candidates."""


class IndexOutOfRangeError(GlofndError, IndexError):
    """An anchor/sample index exceeds the tracked population."""


class EmptyFilteredSetError(GlofndError, ValueError):
    """Filtering removed every negative of an anchor."""


class KTooLargeError(GlofndError, ValueError):
    """Top-k selection asked for more entries than are available."""


class UninitializedSurrogateError(GlofndError, ValueError):
    """A surrogate estimate is read before its first update."""


class BadConfigError(GlofndError, ValueError):
    """A generator/evaluator was configured with invalid values."""


class ConfigError(GlofndError, ValueError):
    """A run configuration is invalid or contains unknown keys."""
