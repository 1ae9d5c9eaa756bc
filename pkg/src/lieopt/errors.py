"""Exception types shared across the package."""


class LieOptError(Exception):
    pass


class KindError(LieOptError, ValueError):
    """Operation applied to the wrong transformation kind."""


class ShapeError(LieOptError, ValueError):
    """Batch shapes or dimensions are incompatible."""


class DomainError(LieOptError, ValueError):
    """Numeric input outside the operation's domain (non-finite, negative...)."""


class CorruptElementError(LieOptError, ValueError):
    """Group element violates its invariants beyond repairable tolerance."""


class EvaluationError(LieOptError, RuntimeError):
    """Residual evaluation produced a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SolverError(LieOptError, RuntimeError):
    """Linear solve failed (indefinite system or no convergence)."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class ContractViolationError(LieOptError, RuntimeError):
    """A declared independence/structure assumption does not hold."""


class ParseError(LieOptError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GraphError(LieOptError, ValueError):
    """Structurally invalid pose graph."""
