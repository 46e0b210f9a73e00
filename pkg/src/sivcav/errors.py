"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ValidationError(ValueError):
    """One or more type invariants are violated.

    Carries the complete list of violations, not just the first one found.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InfeasibleMeasurementError(DomainError):
    """Measured values are mutually inconsistent with the rate model."""


class RankDeficiencyError(RuntimeError):
    """The least-squares problem has an unidentifiable parameter direction."""

    def __init__(self, message, parameters=()):
        self.parameters = tuple(parameters)
        super().__init__(message)


class InputFormatError(ValueError):
    """A data file is malformed; records the file and line where parsing failed."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class NarrowCavityWarning(UserWarning):
    """Cavity linewidth is narrower than the emitter line; the Lorentzian
    spectral-overlap factor is then only an approximation."""


class DegenerateEigenvaluesWarning(UserWarning):
    """The two relaxation eigenvalues are (nearly) equal, so the standard
    two-exponential parametrization of g2 does not exist."""
