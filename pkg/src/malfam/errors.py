"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 1, I/O
problems exit 2 (see ``malfam.cli``).
"""


class MalfamError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(MalfamError):
    """Input data or configuration violates a documented invariant."""

    exit_code = 1


class SchemaError(ValidationError):
    """A file header or schema description is malformed or mismatched."""


class ParseError(ValidationError):
    """A cell or record could not be parsed; carries row/col context."""


class IOFailure(MalfamError):
    """Filesystem-level failure (missing path, unwritable directory)."""

    exit_code = 2


class TrainingDiverged(MalfamError):
    """Model training produced a non-finite loss."""
