"""Shared exception types."""


class ShapeError(ValueError):
    """Operands have incompatible shapes or dimensions."""


class ConfigError(ValueError):
    """A configuration value violates its contract."""


class FormatError(ValueError):
    """A binary or text artifact does not match its declared format."""


class MeshParseError(ValueError):
    """Mesh bytes could not be parsed into geometry."""
