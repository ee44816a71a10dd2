"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A model parameter or argument violates a documented precondition."""


class BudgetError(RuntimeError):
    """A requested exact computation exceeds its memory/size budget."""


class SolverError(RuntimeError):
    """A numerical solver failed to reach its tolerance on a feasible input."""
