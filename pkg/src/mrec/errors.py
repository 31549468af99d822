"""Exception hierarchy shared by the codec core, the CLI, and the service.

Every error raised deliberately by this package derives from ``MrecError``
and carries a stable ``exit_code`` so the CLI can map failure categories to
process exit codes, and the service can map them to structured HTTP errors.
Exit code 2 is left to argparse for usage errors.
"""

from __future__ import annotations

__all__ = [
    "MrecError",
    "ShapeError",
    "ConfigError",
    "IndexingError",
    "DomainError",
    "StateError",
    "FormatError",
    "CoderError",
]


class MrecError(Exception):
    """Base class for all deliberate failures. ``exit_code`` 1 is generic."""

    exit_code = 1
    category = "error"


class ShapeError(MrecError):
    """Array dimensions do not conform (matmul operands, weight shapes, ...)."""

    exit_code = 3
    category = "shape"


class ConfigError(MrecError):
    """Invalid configuration (unknown profile, even window size, bad sizes)."""

    exit_code = 4
    category = "config"


class IndexingError(MrecError):
    """Gather/scatter index out of range, or duplicate scatter target."""

    exit_code = 5
    category = "index"


class DomainError(MrecError):
    """Numeric argument outside its domain (non-positive sigma, NaN input)."""

    exit_code = 6
    category = "domain"


class StateError(MrecError):
    """Slice state misused (empty state where previous slices are required)."""

    exit_code = 7
    category = "state"


class FormatError(MrecError):
    """Malformed container: bad magic, version, lengths, or trailing bytes."""

    exit_code = 8
    category = "format"


class CoderError(MrecError):
    """Range coder failure: corrupt or truncated stream, uncodable symbol."""

    exit_code = 9
    category = "coder"
