"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes (see ``cli.py``): usage errors
exit 2, validation errors 3, OS-level I/O failures 4.
"""


class ValidationError(ValueError):
    """Input data violates a documented precondition or invariant."""


class UsageError(ValueError):
    """Command-line arguments are inconsistent or malformed."""
