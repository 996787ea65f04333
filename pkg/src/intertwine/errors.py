"""Exception hierarchy shared by every module."""


class IntertwineError(Exception):
    """Base class for all library errors."""


class SingularPoint(IntertwineError):
    """A requested derivative diverges at the evaluation point."""


class ParameterOutOfRange(IntertwineError, ValueError):
    pass


class DimensionTooLarge(IntertwineError, ValueError):
    pass


class MassNotCaptured(IntertwineError):
    """The truncation box loses measurable probability mass."""


class KernelSingular(IntertwineError):
    """A BL kernel has smallest eigenvalue below ``rho_floor`` at some nodes."""

    def __init__(self, message, nodes=None, excluded_mass=None):
        super().__init__(message)
        self.nodes = nodes
        self.excluded_mass = excluded_mass


class NonPositiveRho(KernelSingular):
    pass


class NonPositiveBound(IntertwineError):
    pass


class BoundsUnverified(IntertwineError):
    pass


class CertificateViolation(IntertwineError):
    """Random re-evaluation found a field value below a reported bound."""


class NoConvergence(IntertwineError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NonExplosionUnverified(IntertwineError):
    pass


class PathDiverged(IntertwineError):
    pass


class ConfigInvalid(IntertwineError, ValueError):
    pass
