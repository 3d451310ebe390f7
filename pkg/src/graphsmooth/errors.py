"""Exception types raised across the package."""


class GraphSmoothError(Exception):
    """Base class for all package errors."""


class DegenerateDegree(GraphSmoothError):
    """A node has (numerically) zero degree, so L = D^-1 A is undefined."""


class SolveFailure(GraphSmoothError):
    """The regularized Gram system could not be solved."""


class EigFailure(GraphSmoothError):
    """A symmetric eigendecomposition did not converge."""


class ConfigMismatch(GraphSmoothError):
    """A configuration does not belong to the family an operation supports."""


class ParseError(GraphSmoothError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class UnknownNodeId(GraphSmoothError):
    """An edge references a node id with no feature row."""


class DimensionMismatch(GraphSmoothError):
    """Two inputs disagree on the number of nodes or features."""
