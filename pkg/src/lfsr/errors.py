"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 2,
runtime numeric failures exit 3.
"""


class LfsrError(Exception):
    """Base class for all package errors."""


class ArgumentError(LfsrError, ValueError):
    """A caller violated an operation precondition."""


class FormatError(LfsrError):
    """Malformed or unsupported file content (names the offending chunk/field)."""


class ConfigError(LfsrError):
    """Invalid or inconsistent configuration."""


class IntegrityError(LfsrError):
    """Persisted state failed a consistency check (names the bad array)."""


class UnsupportedVersionError(LfsrError):
    """Checkpoint or manifest format_version not understood by this build."""


class NumericError(LfsrError):
    """Non-finite values encountered during computation."""
