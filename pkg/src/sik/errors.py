"""Exception types shared across the package.

Invalid arguments raise the builtin ``ValueError``; the classes here cover the
two failure modes that callers are expected to handle specifically.
"""


class ResourceLimitError(RuntimeError):
    """Raised when an operation would exceed a configured memory cap."""


class DivergenceError(ArithmeticError):
    """Raised when a solver produces a non-finite iterate.

    Attributes
    ----------
    trace : IterationTrace
        Records collected before the failure.
    x : numpy.ndarray or None
        Last finite iterate, if any.
    """

    def __init__(self, message, trace=None, x=None):
        super().__init__(message)
        self.trace = trace
        self.x = x
