"""Exception types mapped to CLI exit codes."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(FloatingPointError):
    """A computation produced non-finite values or could not proceed."""
