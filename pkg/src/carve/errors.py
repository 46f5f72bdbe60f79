"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CarveError(Exception):
    """Base class for all package errors."""


class DomainError(CarveError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ConfigError(CarveError, ValueError):
    """Invalid configuration (sizes, sample counts, hyperparameters)."""


class TruncationMassError(CarveError, FloatingPointError):
    """The truncation interval carries no representable probability mass."""


class RankError(CarveError, ValueError):
    """A design block is rank deficient on the selected columns."""


class ConsistencyError(CarveError, ValueError):
    """A selection event and a contrast direction disagree (V- >= V+)."""


class ConvergenceError(CarveError, RuntimeError):
    """An iterative solver ran out of iterations.

    ``best`` holds the best iterate found and ``residual`` its residual.
    """

    def __init__(self, msg: str, best: float | None = None, residual: float | None = None):
        super().__init__(msg)
        self.best = best
        self.residual = residual


class BracketError(CarveError, RuntimeError):
    """No sign change was found while expanding a root bracket."""

    def __init__(self, msg: str, bracket: tuple[float, float] | None = None):
        super().__init__(msg)
        self.bracket = bracket


class IngestionError(CarveError, ValueError):
    """Input data file is malformed (missing cells, wrong shape)."""
