"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent user-supplied input (files, flags, calendars)."""


class InsufficientDataError(RuntimeError):
    """A statistical guard failed: not enough samples to produce a result."""
