"""Exception types shared across the toolkit."""


class InputError(ValueError):
    """Invalid user input: bad parameters, malformed files, domain violations."""


class InternalInvariantError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
