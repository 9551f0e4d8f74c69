"""Shared exception base so the CLI can catch toolkit errors uniformly."""


class WeldError(Exception):
    """Base class for all toolkit-specific errors."""
