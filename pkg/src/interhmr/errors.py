"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions are inconsistent with an operation's contract."""


class DegenerateRowError(ValueError):
    """A softmax row has no allowed entries."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class AlignmentError(ValueError):
    """Procrustes alignment is undefined for rank-deficient point sets."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration, model file or checkpoint."""
