"""Exception hierarchy shared by every module of the package."""


class MarkovVoIError(ValueError):
    """Base class for all errors raised by markov_voi."""


class NonSquareError(MarkovVoIError):
    pass


class NegativeEntryError(MarkovVoIError):
    def __init__(self, i, j, value):
        super().__init__(f"negative entry {value!r} at ({i}, {j})")
        self.i, self.j, self.value = i, j, value


class RowSumError(MarkovVoIError):
    def __init__(self, i, total):
        super().__init__(f"row {i} sums to {total!r}, expected 1")
        self.i, self.total = i, total


class NoConvergenceError(MarkovVoIError):
    def __init__(self, max_iters):
        super().__init__(
            f"power iteration did not converge in {max_iters} iterations "
            "(chain may be periodic or reducible)"
        )
        self.max_iters = max_iters


class EpsilonTooLargeError(MarkovVoIError):
    pass


class LengthMismatchError(MarkovVoIError):
    pass


class InvalidDistributionError(MarkovVoIError):
    pass


class DimensionMismatchError(MarkovVoIError):
    pass


class EmptyGroupError(MarkovVoIError):
    def __init__(self, j):
        super().__init__(f"group {j} has zero marginal probability")
        self.j = j


class InfiniteDivergenceError(MarkovVoIError):
    pass


class NumericUnderflowError(MarkovVoIError):
    def __init__(self, i):
        super().__init__(f"every group weight vanished for state {i}")
        self.i = i


class GroupCapReachedError(MarkovVoIError):
    pass


class EmptyHierarchyError(MarkovVoIError):
    pass
