"""Exception hierarchy shared across the toolkit."""


class GrnCertError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(GrnCertError):
    """Model file is structurally malformed; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class SemanticError(GrnCertError):
    """Model file is well-formed but violates a model invariant."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class AssumptionViolation(GrnCertError):
    """The extremal systems do not share the structure the method requires
    (state transition graph or sink set differs between systems)."""


class GeometryError(GrnCertError):
    """Degenerate or inconsistent polyhedral computation."""


class UnboundedPolytopeError(GeometryError):
    """A vertex enumeration was requested for an unbounded polyhedron."""


class SolverError(GrnCertError):
    """The SDP backend broke down numerically."""


class ResidualTooLarge(GrnCertError):
    """A candidate certificate failed the independent residual re-check."""

    def __init__(self, constraint: str, residual: float, tol: float):
        super().__init__(
            f"constraint {constraint!r} has residual {residual:.3e} > tolerance {tol:.3e}"
        )
        self.constraint = constraint
        self.residual = residual
        self.tol = tol


class SimulationError(GrnCertError):
    """Filippov simulation failed (inconsistent pinning, Zeno behavior, ...)."""
