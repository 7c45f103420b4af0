"""Exception hierarchy shared by all lfpp modules."""


class LfppError(Exception):
    """Base class for every error raised by this package."""


class RegionError(LfppError, ValueError):
    """Malformed rectilinear region (non axis-parallel, self-intersecting, ...)."""


class ScaleTooSmallError(LfppError, ValueError):
    pass


class BudgetError(LfppError, ValueError):
    """Requested lattice exceeds the configured size budget."""


class SolverError(LfppError, RuntimeError):
    pass


class BoundaryProximityError(LfppError, ValueError):
    """A unit circle around the requested point leaves the domain."""


class SnapshotFormatError(LfppError, ValueError):
    pass
