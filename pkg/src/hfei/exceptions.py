"""Exception hierarchy shared by every stage of the pipeline."""


class HfeiError(Exception):
    """Base class. ``category`` is the short tag printed by the CLI."""

    category = "error"


class InputError(HfeiError, ValueError):
    category = "input"


class OrderingError(HfeiError, ValueError):
    category = "ordering"


class TransformError(HfeiError, ValueError):
    category = "transform"


class InsufficientDataError(HfeiError, ValueError):
    category = "insufficient-data"


class SpecError(HfeiError, ValueError):
    category = "spec"


class BuildError(HfeiError, ValueError):
    category = "build"


class NumericError(HfeiError, FloatingPointError):
    category = "numeric"


class DegeneratePosteriorError(HfeiError, ValueError):
    category = "degenerate-posterior"


class EstimationError(HfeiError, RuntimeError):
    """Raised when a Gibbs chain fails; carries the failing iteration."""

    category = "estimation"

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
