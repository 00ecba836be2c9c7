"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes: ConfigError -> 1, DataError -> 2,
NumericsError -> 3.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class DataError(RuntimeError):
    """Missing, malformed, or unreadable dataset content."""


class NumericsError(RuntimeError):
    """Non-finite values encountered where finite ones are required."""


class ArchiveError(RuntimeError):
    """Corrupt tensor archive or parameter inventory mismatch."""
