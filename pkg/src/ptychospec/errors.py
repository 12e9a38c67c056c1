"""Exception types shared across the package."""


class PtychoSpecError(Exception):
    """Base class for library-specific failures."""


class GeometryError(PtychoSpecError, ValueError):
    """Scan geometry is inconsistent or a patch falls outside the image."""


class DegenerateProbeError(PtychoSpecError, ValueError):
    """Probe (or its data seed) has zero norm and cannot be normalized."""


class IllConditionedDictionaryError(PtychoSpecError, ValueError):
    """Spectrum Gram matrix is numerically singular."""

    def __init__(self, condition: float, limit: float):
        self.condition = condition
        self.limit = limit
        super().__init__(
            f"dictionary Gram condition {condition:.3e} exceeds limit {limit:.3e}"
        )


class DivergenceError(PtychoSpecError, RuntimeError):
    """Solver state stopped being finite or blew past the norm guard."""

    def __init__(self, iteration: int, detail: str = ""):
        self.iteration = iteration
        message = f"solver diverged at iteration {iteration}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class MetricUndefinedError(PtychoSpecError, ValueError):
    """Metric denominator is zero."""
