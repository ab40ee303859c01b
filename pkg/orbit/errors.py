"""
Errors raised by the retrieval engine.

Every error derives from OrbitError so callers can catch the whole family.
Argument, schema and config errors are also ValueErrors.
"""


class OrbitError(Exception):
    """Base class for all engine errors."""


class InvalidArgumentError(OrbitError, ValueError):
    """An argument is outside its valid domain (non-finite, out of range, zero norm...)."""


class SchemaError(OrbitError, ValueError):
    """Vector layout does not match the configured modalities or dimensions."""


class ConfigError(OrbitError, ValueError):
    """Settings or experiment configuration is invalid."""


class SnapshotError(OrbitError, RuntimeError):
    """A snapshot file is corrupt, truncated or from an unsupported format version."""
