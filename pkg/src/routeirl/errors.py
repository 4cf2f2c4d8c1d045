"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed input: bad graph records, inconsistent dims, broken config."""


class InfeasibilityError(RuntimeError):
    """Reward configuration admits no convergent forward/backward pass."""
