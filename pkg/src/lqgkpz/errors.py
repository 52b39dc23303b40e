"""Exception types shared by all modules.

Every error carries ``param``, the dotted path of the offending input
(e.g. ``"mellin.alpha"``), so the CLI can report it.
"""


class LQGError(Exception):
    def __init__(self, message, param=None):
        super().__init__(message)
        self.param = param

    def __str__(self):
        msg = super().__str__()
        return f"{msg} [{self.param}]" if self.param else msg


class DomainError(LQGError, ValueError):
    """Input outside the mathematical domain of an operation."""


class EmbeddingError(LQGError):
    """Circulant embedding produced significantly negative eigenvalues."""


class OutOfDomain(LQGError):
    """A path left the grid on which the field is known."""

    def __init__(self, message, index, param=None):
        super().__init__(message, param)
        self.index = index


class InvariantViolation(LQGError):
    """An internal invariant failed; indicates a bug or corrupt input."""


class TruncationError(LQGError):
    """Truncated t-integral tail too large; ``suggested`` holds new bounds."""

    def __init__(self, message, suggested=None, param=None):
        super().__init__(message, param)
        self.suggested = suggested


class BracketNotFound(LQGError):
    """No sign change of the dimension statistic over the s-grid."""


class BracketNotFoundWarning(UserWarning):
    pass
