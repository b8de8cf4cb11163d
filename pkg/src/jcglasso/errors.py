"""Exception types shared across the package.

Each exception carries a short machine-readable ``code`` so callers (and the
command line front end) can map failures to exit statuses without parsing
messages.
"""


class JcglassoError(Exception):
    code = "internal-error"


class InvalidParametersError(JcglassoError):
    code = "invalid-parameters"


class ShapeError(JcglassoError):
    code = "shape-error"


class InvalidRegionError(JcglassoError):
    code = "invalid-region"


class ConditioningFailure(JcglassoError):
    code = "conditioning-failure"


class InvalidStatsError(JcglassoError):
    code = "invalid-stats"


class NoConvergenceError(JcglassoError):
    code = "no-convergence"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateVariableError(JcglassoError):
    code = "degenerate-variable"


class InvalidGridError(JcglassoError):
    code = "invalid-grid"


class DegeneratePathError(JcglassoError):
    code = "degenerate-path"


class InputError(JcglassoError):
    code = "input-error"
