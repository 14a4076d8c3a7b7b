"""Exception types shared across the package.

ValueError is raised directly for malformed arguments (bad shapes, out-of-range
parameters).  The types below mark conditions a caller may want to handle
separately from programming errors.
"""


class SharekinError(Exception):
    """Base class for package-specific errors."""


class CapacityError(SharekinError):
    """A requested exact computation exceeds its guarded size limit."""


class DataError(SharekinError):
    """Input data is missing, malformed, or inconsistent with the request."""
