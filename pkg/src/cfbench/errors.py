"""Exception types shared across the package."""


class CFBenchError(Exception):
    """Base class for all errors raised by cfbench."""


class ShapeMismatch(CFBenchError, ValueError):
    pass


class RegionOverflow(CFBenchError):
    """A region ellipsoid leaves the brain mask."""


class DegenerateRange(CFBenchError, ValueError):
    pass


class InsufficientSamples(CFBenchError, ValueError):
    pass


class NumericalStabilityError(CFBenchError, ArithmeticError):
    pass


class FamilyMismatch(CFBenchError, TypeError):
    pass


class DivergenceError(CFBenchError, RuntimeError):
    """Training loss became non-finite."""


class TooFewSubjects(CFBenchError, ValueError):
    pass


class ConfigError(CFBenchError, ValueError):
    pass


class StageFailure(CFBenchError, RuntimeError):
    pass
