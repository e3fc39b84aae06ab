"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the domain of a basis or model."""


class DimensionMismatch(ValueError):
    """Input dimensionality does not match the model."""


class DegenerateVariance(ValueError):
    """Target vector has zero variance, so R^2 is undefined."""


class EmptyEnsemble(ValueError):
    """No converged solutions to summarise."""


class PostShockQuery(ValueError):
    """Characteristics cross before the requested time."""


class NonFiniteResidual(FloatingPointError):
    """A solver produced a NaN or infinite objective value."""
