"""Exception hierarchy shared by all modules."""


class KppDriftError(Exception):
    """Base class for all package errors."""


class InputError(KppDriftError, ValueError):
    """Invalid or inconsistent user input (bad grids, fields, configs)."""


class AdmissibilityError(InputError):
    """A velocity field failed the incompressibility/mean-zero/no-flux checks."""


class NumericalError(KppDriftError, RuntimeError):
    """A solver failed to converge or produced an invalid result."""


class EigenConvergenceError(NumericalError):
    """Eigenvalue iteration did not converge."""


class PositivityError(NumericalError):
    """Principal eigenfunction came out sign-changing even after fallback."""


class UnbracketedMinimumError(NumericalError):
    """Speed minimum sits at the edge of the lambda bracket after expansion."""


class BracketingError(NumericalError):
    """Multiplier search could not bracket the feasibility root."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class InconclusiveSurveyError(NumericalError):
    """Every surveyed seed came back Undetermined."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
