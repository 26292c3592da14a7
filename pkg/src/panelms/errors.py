"""Exception types shared across the package.

User/input problems raise plain ValueError; NumericalError marks breakdowns of
the numerics themselves (non-SPD posterior precision, failed factorizations).
The CLI maps ValueError to exit code 2 and NumericalError to exit code 3.
"""


class NumericalError(RuntimeError):
    """A numerical operation failed in a way valid inputs should never trigger."""
