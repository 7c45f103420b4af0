"""Discrete and continuum Liouville first passage percolation over Gaussian free fields."""
from .analysis import (CrossingResult, DGamma, ExponentEstimate, LevelSetQuery, annulus_distance,
                       estimate_exponent, implied_dgamma, lambda_nonneg_check, levelset_cost_bound,
                       levelset_crossing)
from .coupling import (CouplingMode, CouplingSample, ProjectionSolver, build_coupling,
                       circle_average, circle_average_variance_profile, discrepancy_stat,
                       project_to_coarse)
from .errors import (BoundaryProximityError, BudgetError, LfppError, RegionError,
                     ScaleTooSmallError, SnapshotFormatError, SolverError)
from .gff import (FieldKind, FieldSample, covariance_log_profile, field_max, green_function,
                  read_snapshot, sample_dgff, write_snapshot)
from .lattice import (AnnulusSpec, DomainMask, RectRegion, annulus, nearest_lattice_point,
                      rasterize)
from .metric import (DistanceQuery, DistanceResult, MetricKind, compare_metrics, dlfpp_distance,
                     fine_lfpp_distance, lattice_lfpp_distance)

__version__ = "0.1.0"
