class HolonomyLabError(Exception):
    """Base class for all lab errors"""


class DomainError(HolonomyLabError, ValueError):
    """Input outside the mathematical domain of an operation"""


class SingularPointError(DomainError):
    pass


class LevelSetError(DomainError):
    pass


class StencilError(DomainError):
    pass


class StepTooLargeError(DomainError):
    pass


class OverlapDomainError(DomainError):
    pass


class OracleDomainError(DomainError):
    pass


class ChartUnavailableError(DomainError):
    pass


class ConfigurationError(HolonomyLabError, ValueError):
    pass


class ShapeError(HolonomyLabError, ValueError):
    pass


class AliasingError(HolonomyLabError, ValueError):
    pass


class NormalizationError(HolonomyLabError, ValueError):
    pass


class InputError(HolonomyLabError, ValueError):
    pass


class DegenerateChainError(HolonomyLabError, ValueError):
    pass


class NotALoopError(HolonomyLabError, ValueError):
    pass


class ResourceError(HolonomyLabError, RuntimeError):
    pass
