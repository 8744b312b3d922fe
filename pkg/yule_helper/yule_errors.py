class YuleError(Exception):
    """Base class for every failure raised by the nonsense-correlation toolkit."""

    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class InvalidParameterError(YuleError):
    exit_code = 2


class JetSingularityError(YuleError):
    """A jet operation was asked to expand a function at a point where it is not smooth."""

    exit_code = 3


class QuadratureNonConvergenceError(YuleError):
    exit_code = 3

    def __init__(self, k: int, level: int, delta: float):
        super().__init__(f"quadrature for E rho^{k} did not converge by level {level} (last delta {delta:.3e})")
        self.k = k
        self.level = level
        self.delta = delta


class RiccatiError(YuleError):
    exit_code = 3


class VerificationError(YuleError):
    exit_code = 4

    def __init__(self, worst_point: dict, deviation: float, tolerance: float):
        super().__init__(f"closed form and Riccati oracle differ by {deviation:.3e} (> {tolerance:.1e}) at {worst_point}")
        self.worst_point = worst_point
        self.deviation = deviation
        self.tolerance = tolerance
