class UsageError(RuntimeError):
    """A call made in a state where it is not allowed (e.g. stepping a finished episode)."""


class ArbitrationError(AssertionError):
    """A granted association matrix reached the AoI update without being arbitrated."""
