"""Exception bases shared across the package.

The CLI maps these onto exit codes: SchemaError -> 2, OSError -> 3,
NumericError -> 4.  Module-specific exceptions subclass one of the bases.
"""


class TaiyanError(Exception):
    """Base class for all package errors."""


class SchemaError(TaiyanError):
    """Malformed or contract-violating input (files, records, arguments)."""


class NumericError(TaiyanError):
    """Numeric failure during computation (non-finite loss, overflow)."""
