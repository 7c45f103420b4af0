"""Lattice domains, rectilinear regions and the standard annulus.

Points of the scaled square ``n*[0,1]^2`` are addressed by integer pairs
``(x, y)`` with ``0 <= x, y <= n``.  Every mask in this package is a dense
boolean array of shape ``(n + 1, n + 1)`` indexed as ``mask[x, y]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import RegionError, ScaleTooSmallError

Point = tuple[int, int]

BOUNDARY_CONVENTIONS = ("nearest", "inner", "outer", "band")


def _round_half_down(c: Fraction | float) -> int:
    # nearest integer, ties toward the smaller one
    return math.ceil(c - Fraction(1, 2)) if isinstance(c, Fraction) else math.ceil(c - 0.5)


def nearest_lattice_point(z: Sequence[float | Fraction], n: int) -> Point:
    """Return ``[n z]``, the lattice point closest to ``n z``.

    Half-integer ties go to the smaller coordinate, so the map is
    deterministic everywhere.
    """
    return (_round_half_down(n * z[0]), _round_half_down(n * z[1]))


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**9)
    return Fraction(value)


@dataclass(frozen=True)
class RectRegion:
    """Axis-aligned rectilinear polygon inside the unit square.

    Vertices are exact rationals listed in boundary order; the closing edge
    from the last vertex back to the first is implicit.
    """

    vertices: tuple[tuple[Fraction, Fraction], ...]
    interior_only: bool = False

    def __post_init__(self):
        verts = tuple((_as_fraction(x), _as_fraction(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        self._validate()

    @classmethod
    def rectangle(cls, x0, y0, x1, y1, interior_only: bool = False) -> "RectRegion":
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)), interior_only=interior_only)

    @classmethod
    def centered_square(cls, side, interior_only: bool = False) -> "RectRegion":
        half = _as_fraction(side) / 2
        c = Fraction(1, 2)
        return cls.rectangle(c - half, c - half, c + half, c + half, interior_only)

    @property
    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def _validate(self):
        verts = self.vertices
        if len(verts) < 4:
            raise RegionError("a rectilinear polygon needs at least 4 vertices")
        for x, y in verts:
            if not (0 <= x <= 1 and 0 <= y <= 1):
                raise RegionError(f"vertex ({x}, {y}) lies outside the unit square")
            if self.interior_only and not (0 < x < 1 and 0 < y < 1):
                raise RegionError(f"vertex ({x}, {y}) touches the boundary of the unit square")
        edges = self.edges
        for (a, b) in edges:
            if a == b:
                raise RegionError("repeated vertex")
            if a[0] != b[0] and a[1] != b[1]:
                raise RegionError(f"edge {a} -> {b} is not axis-parallel")
        k = len(edges)
        for i in range(k):
            for j in range(i + 1, k):
                adjacent = j == i + 1 or (i == 0 and j == k - 1)
                if _segments_overlap(edges[i], edges[j], adjacent):
                    raise RegionError("polygon is not simple")

    def contains(self, p: Sequence) -> bool:
        """Closed membership test for a point of the unit square."""
        px, py = _as_fraction(p[0]), _as_fraction(p[1])
        for a, b in self.edges:
            if _on_segment(px, py, a, b):
                return True
        return _ray_inside(px, py, self.edges)

    def bounding_box(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def distance_to_unit_boundary(self) -> Fraction:
        x0, y0, x1, y1 = self.bounding_box()
        return min(x0, y0, 1 - x1, 1 - y1)

    def inside_cells(self):
        """Closed rectangles whose union is the closure of the polygon."""
        xs = sorted({v[0] for v in self.vertices})
        ys = sorted({v[1] for v in self.vertices})
        edges = self.edges
        cells = []
        for i in range(len(xs) - 1):
            for j in range(len(ys) - 1):
                mx = (xs[i] + xs[i + 1]) / 2
                my = (ys[j] + ys[j + 1]) / 2
                if _ray_inside(mx, my, edges):
                    cells.append((xs[i], ys[j], xs[i + 1], ys[j + 1]))
        return cells


def _on_segment(px, py, a, b) -> bool:
    (ax, ay), (bx, by) = a, b
    if ax == bx:
        return px == ax and min(ay, by) <= py <= max(ay, by)
    return py == ay and min(ax, bx) <= px <= max(ax, bx)


def _ray_inside(px, py, edges) -> bool:
    # even-odd rule with a ray toward +x; only vertical edges can cross it
    inside = False
    for (ax, ay), (bx, by) in edges:
        if ax != bx:
            continue
        lo, hi = min(ay, by), max(ay, by)
        if lo <= py < hi and ax > px:
            inside = not inside
    return inside


def _segments_overlap(e1, e2, adjacent: bool) -> bool:
    (a, b), (c, d) = e1, e2
    ax0, ax1 = sorted((a[0], b[0]))
    ay0, ay1 = sorted((a[1], b[1]))
    cx0, cx1 = sorted((c[0], d[0]))
    cy0, cy1 = sorted((c[1], d[1]))
    ix0, ix1 = max(ax0, cx0), min(ax1, cx1)
    iy0, iy1 = max(ay0, cy0), min(ay1, cy1)
    if ix0 > ix1 or iy0 > iy1:
        return False
    if adjacent:
        # consecutive edges may only share their common vertex
        return (ix0, iy0) != (ix1, iy1)
    return True


def read_region(path: str | Path, interior_only: bool = False) -> RectRegion:
    """Parse a region file: one ``p/q r/s`` vertex per line, ``#`` comments."""
    verts = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise RegionError(f"{path}:{lineno}: expected two rational coordinates")
        try:
            verts.append((Fraction(parts[0]), Fraction(parts[1])))
        except (ValueError, ZeroDivisionError) as exc:
            raise RegionError(f"{path}:{lineno}: {exc}") from None
    return RectRegion(tuple(verts), interior_only=interior_only)


def write_region(region: RectRegion, path: str | Path) -> None:
    lines = [f"{x} {y}" for x, y in region.vertices]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class DomainMask:
    n: int
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.n + 1, self.n + 1):
            raise ValueError(f"mask shape {mask.shape} does not match scale n={self.n}")
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, n: int) -> "DomainMask":
        return cls(n, np.ones((n + 1, n + 1), dtype=bool))

    @classmethod
    def from_points(cls, n: int, points: Iterable[Point]) -> "DomainMask":
        mask = np.zeros((n + 1, n + 1), dtype=bool)
        for x, y in points:
            mask[x, y] = True
        return cls(n, mask)

    def __contains__(self, p) -> bool:
        x, y = p
        return 0 <= x <= self.n and 0 <= y <= self.n and bool(self.mask[x, y])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def points(self) -> list[Point]:
        xs, ys = np.nonzero(self.mask)
        return list(zip(xs.tolist(), ys.tolist()))

    def issubset(self, other: "DomainMask") -> bool:
        return self.n == other.n and not np.any(self.mask & ~other.mask)

    def is_connected(self) -> bool:
        from scipy import ndimage

        _, count = ndimage.label(self.mask)
        return count <= 1


def rasterize(region: RectRegion, n: int) -> DomainMask:
    """Lattice points of ``{0..n}^2`` lying in the closure of ``n * region``."""
    if n < 1:
        raise ScaleTooSmallError("scale must be a positive integer")
    for a, b in region.edges:
        length = n * (abs(a[0] - b[0]) + abs(a[1] - b[1]))
        if length < 2:
            raise ScaleTooSmallError(
                f"edge {a} -> {b} has length {float(length):g} < 2 at scale n={n}"
            )
    mask = np.zeros((n + 1, n + 1), dtype=bool)
    for x0, y0, x1, y1 in region.inside_cells():
        i0, i1 = math.ceil(n * x0), math.floor(n * x1)
        j0, j1 = math.ceil(n * y0), math.floor(n * y1)
        if i0 <= i1 and j0 <= j1:
            mask[i0 : i1 + 1, j0 : j1 + 1] = True
    return DomainMask(n, mask)


def lattice_boundary(region: RectRegion, n: int, convention: str = "nearest") -> DomainMask:
    """Lattice approximation of ``n * boundary(region)``.

    ``nearest``: ``{[a] : a on the boundary}`` with the tie rule of
    :func:`nearest_lattice_point`; equals the exact lattice frame when the
    edges sit on lattice lines.
    ``inner``: mask vertices with a neighbor outside the rasterized region.
    ``outer``: non-mask vertices with a neighbor inside it.
    ``band``: vertices within Euclidean distance 1 of the scaled boundary.
    """
    if convention not in BOUNDARY_CONVENTIONS:
        raise ValueError(f"unknown boundary convention {convention!r}")
    out = np.zeros((n + 1, n + 1), dtype=bool)
    if convention == "nearest":
        for (ax, ay), (bx, by) in region.edges:
            x0, x1 = sorted((_round_half_down(n * ax), _round_half_down(n * bx)))
            y0, y1 = sorted((_round_half_down(n * ay), _round_half_down(n * by)))
            out[max(x0, 0) : min(x1, n) + 1, max(y0, 0) : min(y1, n) + 1] = True
        return DomainMask(n, out)
    if convention == "band":
        xs, ys = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        d2 = np.full(xs.shape, np.inf)
        for (ax, ay), (bx, by) in region.edges:
            ax, ay, bx, by = (float(n * c) for c in (ax, ay, bx, by))
            cx = np.clip(xs, min(ax, bx), max(ax, bx))
            cy = np.clip(ys, min(ay, by), max(ay, by))
            d2 = np.minimum(d2, (xs - cx) ** 2 + (ys - cy) ** 2)
        return DomainMask(n, d2 <= 1.0)
    inside = rasterize(region, n).mask
    padded = np.pad(inside, 1, constant_values=False)
    nb_out = np.zeros_like(inside)
    nb_in = np.zeros_like(inside)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted = padded[1 + dx : n + 2 + dx, 1 + dy : n + 2 + dy]
        nb_out |= ~shifted
        nb_in |= shifted
    if convention == "inner":
        return DomainMask(n, inside & nb_out)
    return DomainMask(n, ~inside & nb_in)


@dataclass(frozen=True)
class AnnulusSpec:
    """Centered squares of side 1/3 (inner) and 2/3 (outer) at scale ``n``."""

    n: int
    inner: DomainMask
    outer_boundary: DomainMask

    @property
    def inner_points(self) -> list[Point]:
        return self.inner.points()

    @property
    def outer_points(self) -> list[Point]:
        return self.outer_boundary.points()


INNER_SQUARE = RectRegion.centered_square(Fraction(1, 3), interior_only=True)
OUTER_SQUARE = RectRegion.centered_square(Fraction(2, 3), interior_only=True)
HALF_SQUARE = RectRegion.centered_square(Fraction(1, 2), interior_only=True)


def annulus(n: int) -> AnnulusSpec:
    if n < 12:
        raise ScaleTooSmallError(f"annulus needs n >= 12, got {n}")
    inner = rasterize(INNER_SQUARE, n)
    outer = lattice_boundary(OUTER_SQUARE, n, "nearest")
    return AnnulusSpec(n, inner, outer)
