"""Exception hierarchy shared across the toolkit."""


class OliveSynthError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(OliveSynthError, ValueError):
    """An argument is outside its documented domain."""


class GeometryError(OliveSynthError, ValueError):
    """Input geometry is degenerate (e.g. a curve collapsed to a point)."""


class ConfigError(OliveSynthError, ValueError):
    """A scene/render/dataset configuration is inconsistent."""


class ShapeError(OliveSynthError, ValueError):
    """Array or raster dimensions do not match."""


class DomainError(OliveSynthError, ValueError):
    """A numeric value falls outside the domain of a formula (log(0), zero norm, ...)."""


class FormatError(OliveSynthError, ValueError):
    """A file or raster has the wrong layout."""
