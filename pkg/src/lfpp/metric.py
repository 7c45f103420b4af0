"""Shortest-path distances for DLFPP, lattice LFPP and fine-mesh LFPP.

Vertex-weighted metrics (DLFPP, lattice LFPP) charge every vertex on the
path, endpoints included, and give distance 0 between a vertex and itself.
The fine-mesh metric is edge-weighted on the 8-neighbor fine lattice and
approximates the path integral of ``exp(xi * h_1)`` by the trapezoid rule.
"""
from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coupling import SQRT_PI_2, CouplingSample, circle_mean_field
from .errors import BoundaryProximityError
from .gff import FieldKind, FieldSample
from .lattice import DomainMask, Point, RectRegion, nearest_lattice_point, rasterize


class MetricKind(str, enum.Enum):
    DLFPP = "dlfpp"
    LATTICE_LFPP = "lattice-lfpp"
    FINE_LFPP = "fine-lfpp"


@dataclass(frozen=True)
class DistanceQuery:
    source: tuple[Point, ...]
    target: tuple[Point, ...]
    mask: DomainMask
    kind: MetricKind = MetricKind.DLFPP
    xi: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(tuple(p) for p in self.source))
        object.__setattr__(self, "target", tuple(tuple(p) for p in self.target))
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        for p in self.source + self.target:
            if p not in self.mask:
                raise ValueError(f"query point {p} lies outside the mask")

    @classmethod
    def points(cls, u: Point, v: Point, n: int, xi: float, kind=MetricKind.DLFPP,
               mask: DomainMask | None = None) -> "DistanceQuery":
        return cls((u,), (v,), mask if mask is not None else DomainMask.full(n), kind, xi)


@dataclass(frozen=True)
class DistanceResult:
    distance: float
    geodesic: tuple[Point, ...] | None = None
    relaxations: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.distance)


def _unpack(path_idx, stride) -> tuple[Point, ...]:
    return tuple(divmod(i, stride) for i in path_idx)


def _walk_back(pred, end) -> list[int]:
    path = [end]
    while pred[path[-1]] >= 0:
        path.append(pred[path[-1]])
    path.reverse()
    return path


def vertex_weighted_distance(weights: np.ndarray, mask: np.ndarray, sources: Sequence[Point],
                             targets: Sequence[Point], want_path: bool = True) -> DistanceResult:
    """Minimum over 4-neighbor paths inside ``mask`` of the summed vertex weights.

    Multi-source Dijkstra with early exit when the first target is settled.
    Returns an infinite distance when no target is reachable.
    """
    size = weights.shape[0]
    stride = size
    src = {x * stride + y for x, y in sources}
    tgt = {x * stride + y for x, y in targets}
    common = src & tgt
    if common:
        v = min(common)
        return DistanceResult(0.0, _unpack([v], stride) if want_path else None, 0)
    w = weights.ravel().tolist()
    allowed = mask.ravel().tolist()
    total = size * size
    dist = [math.inf] * total
    pred = [-1] * total
    done = bytearray(total)
    heap = []
    for s in src:
        dist[s] = w[s]
        heap.append((w[s], s))
    heapq.heapify(heap)
    relax = 0
    push, pop = heapq.heappush, heapq.heappop
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = 1
        if u in tgt:
            path = _unpack(_walk_back(pred, u), stride) if want_path else None
            return DistanceResult(d, path, relax)
        y = u % stride
        for v in (u - stride, u + stride, u - 1 if y > 0 else -1, u + 1 if y < stride - 1 else -1):
            if v < 0 or v >= total or done[v] or not allowed[v]:
                continue
            relax += 1
            nd = d + w[v]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                push(heap, (nd, v))
    return DistanceResult(math.inf, None, relax)


_DIAG = math.sqrt(2.0)


def edge_weighted_distance(speed: np.ndarray, mask: np.ndarray, source: Point, target: Point,
                           step: float = 1.0, want_path: bool = True) -> DistanceResult:
    """8-neighbor Dijkstra with edge cost ``|a - b| * step * (speed[a] + speed[b]) / 2``."""
    size = speed.shape[0]
    stride = size
    s = source[0] * stride + source[1]
    t = target[0] * stride + target[1]
    if s == t:
        return DistanceResult(0.0, _unpack([s], stride) if want_path else None, 0)
    w = (0.5 * step * speed).ravel().tolist()
    allowed = mask.ravel().tolist()
    total = size * size
    dist = [math.inf] * total
    pred = [-1] * total
    done = bytearray(total)
    dist[s] = 0.0
    heap = [(0.0, s)]
    relax = 0
    push, pop = heapq.heappush, heapq.heappop
    moves = [(off, length, off % stride) for off, length in (
        (stride, 1.0), (-stride, 1.0), (1, 1.0), (-1, 1.0),
        (stride + 1, _DIAG), (stride - 1, _DIAG), (-stride + 1, _DIAG), (-stride - 1, _DIAG))]
    top = stride - 1
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = 1
        if u == t:
            path = _unpack(_walk_back(pred, u), stride) if want_path else None
            return DistanceResult(d, path, relax)
        y = u % stride
        wu = w[u]
        for off, length, dy in moves:
            # reject wrap-around in the y direction
            if (dy == 1 and y == top) or (dy == top and y == 0):
                continue
            v = u + off
            if v < 0 or v >= total or done[v] or not allowed[v]:
                continue
            relax += 1
            nd = d + length * (wu + w[v])
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                push(heap, (nd, v))
    return DistanceResult(math.inf, None, relax)


def vertex_path_cost(weights: np.ndarray, path: Sequence[Point]) -> float:
    if len(path) <= 1:
        return 0.0
    return float(sum(weights[x, y] for x, y in path))


def edge_path_cost(speed: np.ndarray, path: Sequence[Point], step: float = 1.0) -> float:
    total = 0.0
    for (ax, ay), (bx, by) in zip(path[:-1], path[1:]):
        total += math.hypot(ax - bx, ay - by) * step * 0.5 * (speed[ax, ay] + speed[bx, by])
    return total


def is_lattice_path(path: Sequence[Point], mask: np.ndarray, diagonal: bool = False) -> bool:
    for x, y in path:
        if not mask[x, y]:
            return False
    for (ax, ay), (bx, by) in zip(path[:-1], path[1:]):
        dx, dy = abs(ax - bx), abs(ay - by)
        if diagonal:
            if max(dx, dy) != 1:
                return False
        elif dx + dy != 1:
            return False
    return True


def dlfpp_weights(values: np.ndarray, xi: float) -> np.ndarray:
    # normalize first so circ = sqrt(pi/2) eta gives bit-identical weights
    return np.exp(xi * (SQRT_PI_2 * np.asarray(values)))


def dlfpp_distance(field: FieldSample, q: DistanceQuery) -> DistanceResult:
    """DLFPP distance with vertex weights ``exp(xi sqrt(pi/2) eta(v))``."""
    if field.kind in (FieldKind.FINE_DGFF, FieldKind.COUPLED_FINE, FieldKind.CIRCLE_AVERAGE):
        raise ValueError(f"dlfpp_distance expects a coarse field, got {field.kind.name}")
    if q.kind != MetricKind.DLFPP:
        raise ValueError(f"query kind {q.kind.value} is not dlfpp")
    if q.mask.n != field.n:
        raise ValueError("mask scale does not match the field")
    return vertex_weighted_distance(dlfpp_weights(field.values, q.xi), q.mask.mask, q.source, q.target)


def lattice_lfpp_distance(circ: FieldSample, q: DistanceQuery) -> DistanceResult:
    """Same combinatorics as DLFPP with weights ``exp(xi h_1(v))``."""
    if circ.kind != FieldKind.CIRCLE_AVERAGE:
        raise ValueError(f"lattice_lfpp_distance expects circle averages, got {circ.kind.name}")
    if q.kind != MetricKind.LATTICE_LFPP:
        raise ValueError(f"query kind {q.kind.value} is not lattice-lfpp")
    if q.mask.n != circ.n:
        raise ValueError("mask scale does not match the field")
    if np.isnan(circ.values[q.mask.mask]).any():
        raise BoundaryProximityError("mask reaches vertices without a circle average")
    weights = np.exp(q.xi * np.nan_to_num(circ.values))
    return vertex_weighted_distance(weights, q.mask.mask, q.source, q.target)


@dataclass(frozen=True, eq=False)
class FineMetric:
    """Speed ``exp(xi H)`` on the fine lattice restricted to a rasterized region."""

    m: int
    xi: float
    mask: np.ndarray
    speed: np.ndarray

    @property
    def step(self) -> float:
        return 1.0 / self.m

    def snap(self, z) -> Point:
        """Nearest fine vertex of a point given in coarse coordinates."""
        return nearest_lattice_point(z, self.m)

    def distance(self, z, w, want_path: bool = True) -> DistanceResult:
        a, b = self.snap(z), self.snap(w)
        for p in (a, b):
            if not (0 <= p[0] < self.mask.shape[0] and 0 <= p[1] < self.mask.shape[1]) \
                    or not self.mask[p]:
                raise ValueError(f"point {p} (fine units) lies outside the region")
        return edge_weighted_distance(self.speed, self.mask, a, b, self.step, want_path)


def fine_metric(coupling: CouplingSample, region: RectRegion, xi: float) -> FineMetric:
    """Fine-lattice speed field for a coupling, with ``H`` the normalized circle average."""
    m = coupling.m
    N = coupling.n * m
    mask = rasterize(region, N).mask
    H = SQRT_PI_2 * circle_mean_field(coupling.fine.values, m)
    if np.isnan(H[mask]).any():
        raise BoundaryProximityError("unit circle around a region vertex leaves the domain")
    speed = np.exp(xi * np.where(mask, H, 0.0))
    return FineMetric(m, xi, mask, speed)


def fine_metric_from_field(H: np.ndarray, m: int, xi: float, mask: np.ndarray | None = None) -> FineMetric:
    """Fine metric from an explicit (synthetic) normalized field ``H``."""
    H = np.asarray(H, dtype=np.float64)
    mask = np.ones(H.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return FineMetric(m, xi, mask, np.exp(xi * H))


def fine_lfpp_distance(coupling: CouplingSample, z, w, region: RectRegion, xi: float,
                       metric: FineMetric | None = None) -> DistanceResult:
    """Fine-mesh continuum LFPP distance between points ``z, w`` of ``n * region``.

    ``z`` and ``w`` are in coarse units and snapped to the nearest fine
    vertex.  Pass a prebuilt ``metric`` to reuse the speed field across pairs.
    """
    metric = metric or fine_metric(coupling, region, xi)
    return metric.distance(z, w)


def compare_metrics(coupling: CouplingSample, region: RectRegion, pair_count: int, xi: float,
                    seed: int = 0, pairs: Sequence[tuple] | None = None) -> dict:
    """Log-ratio comparison of DLFPP and fine-mesh LFPP under a coupling.

    For each pair ``r = |log(D_dlfpp([z],[w]) + exp(xi sqrt(pi/2) eta([z])))
    - log(D_fine(z, w))| / log n``.  Pairs are drawn uniformly among distinct
    coarse vertices of ``[n region]`` unless given explicitly (coarse units).
    """
    n = coupling.n
    if not region.interior_only:
        raise ValueError("compare_metrics needs an interior_only region")
    coarse_mask = rasterize(region, n)
    if pairs is None:
        pts = coarse_mask.points()
        rng = np.random.default_rng(seed)
        pairs = []
        for _ in range(pair_count):
            i, j = rng.choice(len(pts), size=2, replace=False)
            pairs.append((pts[i], pts[j]))
    metric = fine_metric(coupling, region, xi)
    weights = dlfpp_weights(coupling.coarse.values, xi)
    rows = []
    for z, w in pairs:
        zl, wl = nearest_lattice_point(z, 1), nearest_lattice_point(w, 1)
        d_lat = vertex_weighted_distance(weights, coarse_mask.mask, [zl], [wl], want_path=False)
        correction = float(weights[zl])
        d_fine = metric.distance(z, w, want_path=False)
        r = abs(math.log(d_lat.distance + correction) - math.log(d_fine.distance)) / math.log(n)
        rows.append({"z": tuple(z), "w": tuple(w), "dlfpp": d_lat.distance,
                     "correction": correction, "fine_lfpp": d_fine.distance, "r": r})
    rs = np.array([row["r"] for row in rows])
    return {
        "n": n, "m": coupling.m, "xi": xi, "pairs": rows,
        "median": float(np.median(rs)) if len(rs) else math.nan,
        "max": float(rs.max()) if len(rs) else math.nan,
    }

