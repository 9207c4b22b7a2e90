"""Shared exception base so callers can catch any bootscope failure at once."""


class BootscopeError(Exception):
    """Base class for all errors raised by this package."""
