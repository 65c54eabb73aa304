"""Exception hierarchy shared by the library and the CLI."""


class NLGError(Exception):
    """Base class for all library errors."""


class DomainError(NLGError, ValueError):
    """An argument lies outside the mathematical domain of an operation
    (negative or non-finite input, NaN field values, ...)."""


class UsageError(NLGError, ValueError):
    """An operation was called with inconsistent or degenerate parameters
    (empty stencil, epsilon below two grid spacings, missing fidelity, ...)."""


class SpecError(NLGError, ValueError):
    """An experiment specification failed to parse or validate."""
