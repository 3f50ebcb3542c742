"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Operands disagree on dimension or length."""


class NotSPDError(ValueError):
    """A matrix required to be symmetric positive-definite is not."""


class StepTooLargeError(RuntimeError):
    """A manifold step left the SPD cone; the caller should contract it."""


class ObjectiveNumericsError(FloatingPointError):
    """A term of the objective became non-finite.

    Carries the offending term name and, when applicable, the window index.
    """

    def __init__(self, term: str, t: int | None = None):
        self.term = term
        self.t = t
        where = f" at window {t}" if t is not None else ""
        super().__init__(f"non-finite value in objective term '{term}'{where}")


class MonotonicityError(RuntimeError):
    """The outer-loop cost increased beyond the allowed slack."""
