"""Exception hierarchy shared by every subpackage.

The CLI maps these onto exit codes: ``ConfigError`` is a usage problem (1),
``DataError`` covers anything wrong with inputs on disk (2), everything else
is a runtime/numeric failure (3).
"""


class ArtifactError(Exception):
    """Base class for all package errors."""


class ConfigError(ArtifactError, ValueError):
    pass


class VariantError(ConfigError):
    pass


class DataError(ArtifactError):
    pass


class ParseError(DataError):
    pass


class TruncationError(DataError):
    pass


class AnnotationError(DataError):
    pass


class MissingRunError(DataError):
    pass


class WindowError(DataError):
    pass


class SplitError(DataError):
    pass


class FitError(DataError):
    pass


class CacheVersionError(DataError):
    pass


class SubjectIndexError(DataError):
    pass


class ShapeError(ArtifactError, ValueError):
    pass


class DomainError(ArtifactError, ValueError):
    pass


class StateError(ArtifactError):
    pass
