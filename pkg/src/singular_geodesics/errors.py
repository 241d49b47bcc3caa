"""Exception types shared across the package."""


class SingularGeodesicsError(Exception):
    """Base class for errors raised by this package."""


class NonOscillationError(SingularGeodesicsError):
    """The limit functional of the inverse warp does not exist."""


class QuadratureError(SingularGeodesicsError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class IntegrationError(SingularGeodesicsError):
    """Trajectory integration failed or produced unusable output."""
