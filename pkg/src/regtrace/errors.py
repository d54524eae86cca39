"""Exception hierarchy shared by every stage of the pipeline."""


class RegtraceError(Exception):
    """Base class for all errors raised by regtrace."""


class ScenarioError(RegtraceError):
    """Malformed or incomplete scenario description."""


class HypothesisError(ScenarioError):
    """A validated input violates a hypothesis of the trace theorem.

    ``hypothesis`` carries a short name of the violated condition so that
    callers (and the CLI) can report it verbatim.
    """

    def __init__(self, hypothesis: str, message: str):
        super().__init__(f"[{hypothesis}] {message}")
        self.hypothesis = hypothesis


class NumericalFailure(RegtraceError):
    """Eigensolver or quadrature did not reach its accuracy contract."""


class ContourError(NumericalFailure):
    """A contour does not separate the spectrum the way it must."""


class ConsistencyError(NumericalFailure):
    """Two routes for the same closed-form quantity disagree."""
