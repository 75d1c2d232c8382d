"""Typed failures raised by the solver stack.

Every error carries a stable ``code`` string; the CLI maps codes to exit
statuses, so codes must never be renamed.
"""


class ParadiffError(Exception):
    code = "ERROR"

    def __init__(self, message="", code=None, **details):
        if code is not None:
            self.code = code
        self.details = details
        super().__init__(f"{self.code}: {message}" if message else self.code)


class ResolutionError(ParadiffError, ValueError):
    code = "UNRESOLVED_BAND"


class GridMismatchError(ParadiffError, ValueError):
    code = "GRID_MISMATCH"


class NonlinearityError(ParadiffError, ValueError):
    """PRESENCE_OF_UUXX, DEGENERATE, EMPTY or UNCLASSIFIED."""


class ThresholdError(ParadiffError, ValueError):
    """NONPOSITIVE_GAMMA or SIGMA_TOO_SMALL."""


class AdmissionError(ParadiffError):
    code = "ADMISSION_FAILED"


class ConvergenceError(ParadiffError):
    """NO_CONTRACTION, OUTER_DIVERGENCE or K_SEARCH_EXHAUSTED."""


class UnknownTagError(ParadiffError, KeyError):
    code = "UNKNOWN_TAG"


class ScenarioError(ParadiffError, ValueError):
    code = "PARSE"
