"""Exception types shared across the package."""


class NeckflowError(Exception):
    """Base class for all package errors."""


class GeometryError(NeckflowError):
    """Invalid geometry input or out-of-chart evaluation."""


class MeshError(NeckflowError):
    """Mesh construction or validity failure."""


class MeshCapacityError(MeshError):
    """Requested resolution exceeds the vertex budget.

    Carries the smallest separation `eps_floor` expected to fit the budget
    at the same target size and layer count.
    """

    def __init__(self, message, eps_floor=None):
        super().__init__(message)
        self.eps_floor = eps_floor


class SolverError(NeckflowError):
    """Nonlinear solve failed to reach the requested tolerance.

    Carries the last scaled residual and the regularization stage at which
    the iteration stagnated.
    """

    def __init__(self, message, residual=None, eta=None):
        super().__init__(message)
        self.residual = residual
        self.eta = eta


class FitError(NeckflowError):
    """Degenerate data passed to a least-squares fit."""


class QuadratureError(NeckflowError):
    """Adaptive quadrature failed to reach the requested accuracy."""


class BranchError(NeckflowError):
    """Operation not defined on the requested exponent branch."""
