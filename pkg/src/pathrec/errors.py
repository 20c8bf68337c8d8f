"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when caller-supplied data violates an operation's preconditions."""


class ContractViolation(RuntimeError):
    """Raised when an internal invariant is broken (a bug, not bad input)."""
