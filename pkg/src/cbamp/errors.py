"""Exception types raised by the solvers and generators."""


class ParameterError(ValueError):
    """A parameter lies outside its admissible domain."""


class ShapeError(ValueError):
    """Array dimensions are inconsistent."""


class DomainError(ValueError):
    """Non-finite or otherwise invalid numerical input."""


class ColumnDegeneracyError(ArithmeticError):
    """A column of the measurement matrix is identically zero."""


class RangeError(ValueError):
    """A search interval does not bracket the quantity sought."""


class DivergenceError(ArithmeticError):
    """An iterative solver produced non-finite state.

    ``iteration`` is the iteration at which the failure was detected and
    ``trace`` holds every record up to the last finite one.
    """

    def __init__(self, message, iteration, trace=None):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
        self.trace = trace
