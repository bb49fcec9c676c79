"""Exception taxonomy for geometric and numerical failure modes."""


class TubescoreError(Exception):
    """Base class for all library-specific errors."""


class ConfigError(TubescoreError):
    """Invalid or inconsistent run configuration."""


class ManifoldMismatch(TubescoreError):
    """Operands live on different manifolds."""


class UnsupportedManifold(TubescoreError):
    """Requested operation is not provided for this manifold."""


class OutsideTube(TubescoreError):
    """Ambient point is farther than the working tube radius from the manifold."""


class BeyondInjectivity(TubescoreError):
    """Tangent vector is too long for a well-defined exponential-map inverse."""


class CutLocus(TubescoreError):
    """No unique minimizing geodesic between the given points."""


class NotInTube(TubescoreError):
    """Sample was flagged as outside the tube; the requested target is undefined."""


class QuadratureNotConverged(TubescoreError):
    """Grid refinement hit the node cap before reaching the requested tolerance."""


class DegenerateScore(TubescoreError):
    """Score magnitude at the probe point is too small for a stable projection."""


class EmptyWindow(TubescoreError):
    """No samples received positive kernel weight at the probe point."""
