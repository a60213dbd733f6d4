"""Exception types shared across the package."""


class GsdeformError(Exception):
    """Base class for package errors."""


class SplatFormatError(GsdeformError):
    """Raised when a PLY buffer is malformed or misses a required property."""


class EmptyCloudError(GsdeformError):
    """Raised when a splat file declares zero Gaussians."""


class ValidationError(GsdeformError):
    """Raised when loaded or constructed data violates a documented invariant."""


class DisconnectedGraphError(GsdeformError):
    """Raised when an operation requires a connected edge set and gets none."""
