"""Failure types for extraction jobs."""


class AdapterError(Exception):
    """Base class for everything this package raises on purpose."""


class JobConfigError(AdapterError):
    """The job description itself is unusable (bad rate, missing input...)."""


class ModelUnavailable(AdapterError):
    """The named model backend is not installed in this environment."""


class DecodeFailure(AdapterError):
    """Input media or sidecar data could not be decoded."""


class DuplicateKey(AdapterError):
    """Two rows would share an id within one store."""
