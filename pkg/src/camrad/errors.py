"""Exception types shared across the package."""


class CamradError(Exception):
    """Base class for all package-specific errors."""


class ProjectionDomainError(CamradError, ValueError):
    """A point lies outside the projectable domain (behind the camera,
    at or above the horizon, or outside the radar half-plane)."""


class ConfigError(CamradError, ValueError):
    """A configuration value violates its contract.  The message names
    the offending key."""


class FormatError(CamradError, ValueError):
    """A data file is malformed.  The message names the file."""


class SceneSpecError(CamradError, ValueError):
    """A synthetic scene specification is invalid.  The message names
    the offending object."""
