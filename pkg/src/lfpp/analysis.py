"""Level-set crossings, annulus-distance exponents and the implied LQG dimension."""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import gff
from .coupling import SQRT_PI_2
from .gff import FieldKind, FieldSample
from .lattice import AnnulusSpec, DomainMask, Point, annulus
from .metric import DistanceQuery, DistanceResult, MetricKind, dlfpp_distance

DEFAULT_CHI = 0.75


@dataclass(frozen=True)
class LevelSetQuery:
    threshold: float
    annulus: AnnulusSpec
    chi: float | None = None

    def __post_init__(self):
        if self.chi is not None and not 0.5 < self.chi < 1.0:
            raise ValueError(f"chi must lie in (1/2, 1), got {self.chi}")

    @classmethod
    def from_chi(cls, n: int, chi: float = DEFAULT_CHI) -> "LevelSetQuery":
        """Threshold ``(log n)^chi`` on the standard annulus at scale ``n``."""
        if not 0.5 < chi < 1.0:
            raise ValueError(f"chi must lie in (1/2, 1), got {chi}")
        return cls(math.log(n) ** chi, annulus(n), chi)


@dataclass(frozen=True)
class CrossingResult:
    """Outcome of a level-set crossing search.

    ``hop_count`` is the number of vertices the crossing path passes
    through (both ends included), the quantity that bounds its DLFPP cost.
    """

    found: bool
    path: tuple[Point, ...] | None = None
    hop_count: int = 0


def levelset_crossing(field: FieldSample, q: LevelSetQuery) -> CrossingResult:
    """Fewest-vertex path inside ``{eta <= t}`` from the inner square to the outer frame."""
    n = field.n
    if q.annulus.n != n:
        raise ValueError(f"annulus scale {q.annulus.n} does not match field scale {n}")
    stride = n + 1
    allowed = (field.values <= q.threshold).ravel().tolist()
    target = q.annulus.outer_boundary.mask.ravel().tolist()
    total = stride * stride
    pred = [-2] * total  # -2 unvisited, -1 source
    frontier = deque()
    for x, y in q.annulus.inner_points:
        u = x * stride + y
        if allowed[u]:
            pred[u] = -1
            frontier.append(u)
    while frontier:
        u = frontier.popleft()
        if target[u]:
            path = [u]
            while pred[path[-1]] >= 0:
                path.append(pred[path[-1]])
            path.reverse()
            pts = tuple(divmod(i, stride) for i in path)
            return CrossingResult(True, pts, len(pts))
        y = u % stride
        for v in (u - stride, u + stride, u - 1 if y > 0 else -1, u + 1 if y < n else -1):
            if 0 <= v < total and pred[v] == -2 and allowed[v]:
                pred[v] = u
                frontier.append(v)
    return CrossingResult(False)


def levelset_cost_bound(result: CrossingResult, xi: float, t: float) -> float:
    """Upper bound ``hop_count * exp(xi sqrt(pi/2) t)`` on the annulus DLFPP distance."""
    if not result.found:
        raise ValueError("cost bound needs a crossing path")
    return result.hop_count * math.exp(xi * SQRT_PI_2 * t)


def annulus_distance(field: FieldSample, xi: float, spec: AnnulusSpec | None = None) -> DistanceResult:
    """``D([n S_1], [n dS_2])`` over paths in the whole lattice."""
    spec = spec or annulus(field.n)
    q = DistanceQuery(spec.inner_points, spec.outer_points, DomainMask.full(field.n),
                      MetricKind.DLFPP, xi)
    return dlfpp_distance(field, q)


# --- exponent estimation ---------------------------------------------------

@dataclass(frozen=True)
class DGamma:
    gamma: float
    dgamma: float

    def bound_holds(self, slack: float = 0.0) -> bool:
        """``d_gamma >= 2 + gamma^2/2 - slack``."""
        return self.dgamma >= 2.0 + self.gamma**2 / 2.0 - slack


def implied_dgamma(xi: float, Q: float) -> DGamma | None:
    """Invert ``xi = gamma/d`` and ``Q = (2 + gamma^2/2)/d``.

    Eliminating ``d`` gives ``xi gamma^2/2 - Q gamma + 2 xi = 0``; the smaller
    root is returned (the roots multiply to 4, so the other one exceeds 2).
    """
    if not (xi > 0 and Q > 0):
        raise ValueError("xi and Q must be positive")
    disc = Q * Q - 4.0 * xi * xi
    if disc < 0:
        return None
    gamma = 4.0 * xi / (Q + math.sqrt(disc))  # stable form of (Q - sqrt(disc)) / xi
    return DGamma(gamma, gamma / xi)


@dataclass(frozen=True)
class ReplicateRecord:
    xi: float
    n: int
    rep: int
    seed: int
    distance: float
    hop_count: int
    crossing_found: bool


@dataclass(frozen=True)
class ExponentEstimate:
    xi: float
    ladder: tuple[int, ...]
    median_log_distance: tuple[float, ...]
    slope: float
    intercept: float
    stderr: float
    records: tuple[ReplicateRecord, ...] = field(default=(), repr=False)

    @property
    def lambda_hat(self) -> float:
        return 1.0 - self.slope

    @property
    def dgamma(self) -> DGamma | None:
        if self.slope <= 0:
            return None
        return implied_dgamma(self.xi, self.slope)

    def summary(self, slack: float = 0.0) -> dict:
        dg = self.dgamma
        return {
            "xi": self.xi,
            "ladder": list(self.ladder),
            "median_log_distance": list(self.median_log_distance),
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "lambda_hat": self.lambda_hat,
            "gamma_hat": dg.gamma if dg else None,
            "dgamma_hat": dg.dgamma if dg else None,
            "bound_check": dg.bound_holds(slack) if dg else None,
        }


def fit_loglog(ns: Sequence[float], distances: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares ``log D = intercept + slope log n``; returns ``(slope, intercept, stderr)``."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(distances, dtype=np.float64))
    if len(x) < 3:
        raise ValueError("need at least 3 ladder sizes")
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.stderr)


def _replicate(args) -> ReplicateRecord:
    xi, n, rep, seed, chi = args
    sample = gff.sample_dgff(n, seed)
    spec = annulus(n)
    dist = annulus_distance(sample, xi, spec).distance
    crossing = levelset_crossing(sample, LevelSetQuery(math.log(n) ** chi, spec, chi))
    return ReplicateRecord(xi, n, rep, seed, dist, crossing.hop_count, crossing.found)


def _check_ladder(n_ladder: Sequence[int]) -> tuple[int, ...]:
    ladder = tuple(int(n) for n in n_ladder)
    if len(ladder) < 3 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly increasing with at least 3 sizes")
    return ladder


def estimate_exponent(xi: float, n_ladder: Sequence[int], reps: int, seed: int,
                      distance_fn: Callable[[int, int], float] | None = None,
                      jobs: int = 1, chi: float = DEFAULT_CHI) -> ExponentEstimate:
    """Fit the slope of median log annulus distance against log n.

    Replicate ``rep`` at scale ``n`` samples a DGFF with seed
    ``derive_seed(seed, n, rep)``.  ``distance_fn(n, seed)`` replaces the
    simulation (for synthetic power laws).
    """
    from .coupling import check_budget

    ladder = _check_ladder(n_ladder)
    if reps < 1:
        raise ValueError("reps must be positive")
    for n in ladder:
        check_budget(n, 1)
    jobs_list = [(xi, n, rep, gff.derive_seed(seed, n, rep), chi)
                 for n in ladder for rep in range(reps)]
    if distance_fn is not None:
        records = [ReplicateRecord(xi, n, rep, s, float(distance_fn(n, s)), 0, False)
                   for xi, n, rep, s, _ in jobs_list]
    elif jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_replicate, jobs_list))
    else:
        records = [_replicate(a) for a in jobs_list]
    medians = []
    for n in ladder:
        logs = [math.log(r.distance) for r in records if r.n == n]
        medians.append(float(np.median(logs)))
    slope, intercept, stderr = fit_loglog(ladder, np.exp(medians))
    return ExponentEstimate(xi, ladder, tuple(medians), slope, intercept, stderr, tuple(records))


def lambda_nonneg_check(xi: float, n_ladder: Sequence[int], reps: int, seed: int,
                        tolerance: float = 0.1, **kwargs) -> dict:
    """Check the fitted annulus slope stays below ``1 + tolerance``."""
    est = estimate_exponent(xi, n_ladder, reps, seed, **kwargs)
    return {
        "xi": xi,
        "slope": est.slope,
        "tolerance": tolerance,
        "passed": est.slope <= 1.0 + tolerance,
        "medians": dict(zip(est.ladder, est.median_log_distance)),
        "estimate": est,
    }
