"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """Optimizer state became numerically unusable.

    Carries a machine-readable ``reason`` code so the harness can record why
    a trial was aborted.  Known codes: ``nonfinite_state``, ``eigh_failed``,
    ``singular_metric``, ``nonpositive_determinant``.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class SingularMetricError(NumericalError):
    """The Fisher metric could not be inverted (eigenvalue at or below the floor)."""

    def __init__(self, detail: str = ""):
        super().__init__("singular_metric", detail)


class InvalidFitnessError(ValueError):
    """Non-finite fitness values were passed to a ranking operation."""
