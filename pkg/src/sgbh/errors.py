"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit
JSON diagnostics without string matching.
"""


class SGBHError(Exception):
    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class DegenerateGridError(SGBHError, ValueError):
    code = "degenerate"


class AliasingError(SGBHError, ValueError):
    code = "aliasing"


class SingularTimeError(SGBHError, ValueError):
    code = "singular-time"


class TraceConditionError(SGBHError, ValueError):
    code = "trace-condition"


class AlignmentError(SGBHError, ValueError):
    code = "alignment"


class ConfigError(SGBHError, ValueError):
    code = "config"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NumericalError(SGBHError, ArithmeticError):
    """Base for failures detected while integrating or optimizing."""

    code = "numerical"


class BlowupError(NumericalError):
    code = "blowup"

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step

    def to_dict(self):
        return {**super().to_dict(), "step": self.step}


class CFLError(BlowupError):
    code = "cfl"


class NoContractionError(NumericalError):
    code = "no-contraction"

    def __init__(self, message, residual=None, residuals=None):
        super().__init__(message)
        self.residual = residual
        self.residuals = list(residuals or [])

    def to_dict(self):
        return {**super().to_dict(), "residual": self.residual}


class NonconvergenceError(NumericalError):
    code = "nonconvergence"

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result

    def to_dict(self):
        d = super().to_dict()
        if self.result is not None:
            d["best"] = self.result.to_dict()
        return d


class UnestimableError(NumericalError):
    code = "unestimable"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = list(partial or [])


class NoNoiseRecordError(SGBHError, ValueError):
    code = "no-noise-record"
