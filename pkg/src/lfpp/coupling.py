"""Coupling of a coarse DGFF with a fine-mesh surrogate of the continuum GFF.

The fine lattice has spacing ``1/m`` in coarse units, i.e. it is
``{0..nm}^2``.  A fine DGFF at scale ``nm`` stands in for the continuum field:
in the units used here ``sqrt(pi/2) * fine`` approximates ``h``.

The coarse field is the orthogonal projection, for the fine-lattice
Dirichlet form, onto the span of coarse hat functions.  Those hats are
piecewise affine on the triangulation obtained by cutting each unit square
along its down-right diagonal (from ``(x, y+1)`` to ``(x+1, y)``).
"""
from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from . import gff
from .errors import BoundaryProximityError, BudgetError, SolverError
from .gff import FieldKind, FieldSample
from .lattice import HALF_SQUARE, RectRegion, rasterize

SQRT_PI_2 = math.sqrt(math.pi / 2)
DEFAULT_BUDGET_NM = 4096
DEFAULT_TOLERANCE = 1e-8
FINE_STREAM = 1


def budget_nm() -> int:
    return int(os.environ.get("LFPP_BUDGET_NM", DEFAULT_BUDGET_NM))


class CouplingMode(str, enum.Enum):
    EXACT_COARSE = "exact-coarse"
    DIRECT_PROJECTION = "direct-projection"


def interpolation_matrix(n: int, m: int) -> sp.csr_matrix:
    """Sparse map from coarse values on ``{0..n}^2`` to the fine lattice.

    Row ``a * (nm+1) + b`` gives the affine interpolant at fine vertex
    ``(a, b)``; columns are coarse vertices in x-major order.
    """
    N = n * m
    a, b = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    a, b = a.ravel(), b.ravel()
    i = np.minimum(a // m, n - 1)
    j = np.minimum(b // m, n - 1)
    s = (a - i * m) / m
    t = (b - j * m) / m
    lower = s + t <= 1.0
    rows = np.arange(a.size)

    def col(di, dj):
        return (i + di) * (n + 1) + (j + dj)

    c00, c10, c01, c11 = col(0, 0), col(1, 0), col(0, 1), col(1, 1)
    # lower-left triangle: f00 + s (f10 - f00) + t (f01 - f00)
    # upper-right triangle: f11 + (1 - s)(f01 - f11) + (1 - t)(f10 - f11)
    w_a = np.where(lower, 1.0 - s - t, s + t - 1.0)
    c_a = np.where(lower, c00, c11)
    w10 = np.where(lower, s, 1.0 - t)
    w01 = np.where(lower, t, 1.0 - s)
    R = np.concatenate([rows, rows, rows])
    C = np.concatenate([c_a, c10, c01])
    W = np.concatenate([w_a, w10, w01])
    keep = W != 0.0
    return sp.csr_matrix((W[keep], (R[keep], C[keep])), shape=(a.size, (n + 1) ** 2))


def _interior_flat(n: int) -> np.ndarray:
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    return idx[1:n, 1:n].ravel()


class ProjectionSolver:
    """Dirichlet-form projection from the fine lattice onto coarse hats.

    Minimizes the fine-lattice energy ``sum over edges (f(a) - f(b))^2`` of
    ``fine - interp(p)`` over coarse fields ``p`` vanishing on the boundary,
    i.e. solves ``K p = P^T L_f f`` with stiffness ``K = P^T L_f P``.
    For ``m = 1`` the stiffness is the coarse 5-point Laplacian.

    ``method="direct"`` factorizes ``K`` once (default); ``"cg"`` runs
    Jacobi-preconditioned conjugate gradients per solve.
    """

    def __init__(self, n: int, m: int, tolerance: float = DEFAULT_TOLERANCE,
                 method: str = "direct", maxiter: int = 20000):
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown projection method {method!r}")
        self.n, self.m = n, m
        self.N = n * m
        self.tolerance = tolerance
        self.method = method
        self.maxiter = maxiter
        full = interpolation_matrix(n, m)
        self._fine_int = _interior_flat(self.N)
        self._coarse_int = _interior_flat(n)
        self.interp_full = full
        # hats of interior coarse vertices vanish on the fine boundary
        self.P = full[self._fine_int][:, self._coarse_int].tocsc()
        self.L_fine = gff.dirichlet_laplacian(self.N)
        self.stiffness = (self.P.T @ self.L_fine @ self.P).tocsc()
        self._diag = self.stiffness.diagonal()
        self._lu = splu(self.stiffness) if method == "direct" else None

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        K = self.stiffness
        if self._lu is not None:
            x = self._lu.solve(rhs)
        else:
            M = sp.diags(1.0 / self._diag)
            x, info = cg(K, rhs, rtol=self.tolerance * 1e-4, atol=0.0, M=M, maxiter=self.maxiter)
            if info != 0:
                raise SolverError(f"conjugate gradients did not converge (info={info})")
        scale = max(np.abs(rhs).max(), 1.0)
        residual = np.abs(K @ x - rhs).max() / scale
        if residual > self.tolerance:
            raise SolverError(f"projection residual {residual:.3e} exceeds {self.tolerance:g}")
        return x

    def energy(self, fine_values: np.ndarray) -> float:
        f = np.asarray(fine_values).ravel()[self._fine_int]
        return float(f @ (self.L_fine @ f))

    def project(self, fine_values: np.ndarray) -> np.ndarray:
        """Coarse ``(n+1, n+1)`` values of the projection of a fine field."""
        N, n = self.N, self.n
        fine_values = np.asarray(fine_values, dtype=np.float64)
        if fine_values.shape != (N + 1, N + 1):
            raise ValueError(f"fine field has shape {fine_values.shape}, expected {(N + 1, N + 1)}")
        f = fine_values.ravel()[self._fine_int]
        rhs = self.P.T @ (self.L_fine @ f)
        out = np.zeros((n + 1) ** 2)
        out[self._coarse_int] = self._solve(rhs)
        return out.reshape(n + 1, n + 1)

    def interpolate(self, coarse_values: np.ndarray) -> np.ndarray:
        """Piecewise-affine extension of coarse values to the fine lattice."""
        c = np.asarray(coarse_values, dtype=np.float64).ravel()
        return (self.interp_full @ c).reshape(self.N + 1, self.N + 1)


@lru_cache(maxsize=8)
def projection_solver(n: int, m: int, tolerance: float = DEFAULT_TOLERANCE,
                      method: str = "direct") -> ProjectionSolver:
    return ProjectionSolver(n, m, tolerance, method)


def project_to_coarse(fine_field: FieldSample, solver: ProjectionSolver) -> FieldSample:
    if fine_field.n != solver.N:
        raise ValueError(f"fine field scale {fine_field.n} != solver scale {solver.N}")
    coarse = solver.project(fine_field.values)
    return FieldSample(solver.n, coarse, FieldKind.COARSE_DGFF, fine_field.seed, 1)


# --- circle averages ------------------------------------------------------

def bilinear(fine: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a lattice array at fine coordinates."""
    N = fine.shape[0] - 1
    i = np.clip(np.floor(x).astype(np.int64), 0, N - 1)
    j = np.clip(np.floor(y).astype(np.int64), 0, N - 1)
    s = x - i
    t = y - j
    return ((1 - s) * (1 - t) * fine[i, j] + s * (1 - t) * fine[i + 1, j]
            + (1 - s) * t * fine[i, j + 1] + s * t * fine[i + 1, j + 1])


@lru_cache(maxsize=16)
def circle_stencil(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact circle-mean weights of the bilinear interpolant, radius ``m``.

    The circle is cut where it crosses fine grid lines; on each arc the
    interpolant is a single bilinear polynomial in ``cos`` and ``sin``,
    integrated in closed form.  Returns offsets ``(dx, dy)`` relative to the
    (lattice) center and weights summing to 1.
    """
    ks = np.arange(-m, m + 1) / m
    angles = np.concatenate([np.arccos(ks), -np.arccos(ks), np.arcsin(ks), np.pi - np.arcsin(ks)])
    angles = np.unique(np.round(np.mod(angles, 2 * np.pi), 14))
    angles = np.append(angles, angles[0] + 2 * np.pi)
    acc: dict[tuple[int, int], float] = {}
    for a, b in zip(angles[:-1], angles[1:]):
        mid = 0.5 * (a + b)
        i = math.floor(m * math.cos(mid))
        j = math.floor(m * math.sin(mid))
        alpha, beta = -i, -j
        I1 = b - a
        Ic = math.sin(b) - math.sin(a)
        Is = math.cos(a) - math.cos(b)
        Ics = 0.5 * (math.sin(b) ** 2 - math.sin(a) ** 2)
        S = alpha * I1 + m * Ic
        T = beta * I1 + m * Is
        ST = alpha * beta * I1 + alpha * m * Is + beta * m * Ic + m * m * Ics
        for key, w in (((i, j), I1 - S - T + ST), ((i + 1, j), S - ST),
                       ((i, j + 1), T - ST), ((i + 1, j + 1), ST)):
            acc[key] = acc.get(key, 0.0) + w / (2 * math.pi)
    keys = sorted(k for k, w in acc.items() if abs(w) > 1e-15)
    dx = np.array([k[0] for k in keys])
    dy = np.array([k[1] for k in keys])
    w = np.array([acc[k] for k in keys])
    return dx, dy, w


def circle_means(fine: np.ndarray, m: int, centers) -> np.ndarray:
    """Unit-circle means (radius ``m`` fine units) at fine-lattice ``centers``.

    ``centers`` is a ``(k, 2)`` integer array of fine coordinates whose
    circles stay inside the lattice.  No normalization factor is applied.
    """
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 2)
    dx, dy, w = circle_stencil(m)
    vals = fine[centers[:, :1] + dx, centers[:, 1:] + dy]
    return vals @ w


def circle_mean_field(fine: np.ndarray, m: int) -> np.ndarray:
    """Circle means at every fine vertex at distance ``>= m`` from the boundary; NaN elsewhere."""
    N = fine.shape[0] - 1
    out = np.full(fine.shape, np.nan)
    if N < 2 * m:
        return out
    acc = np.zeros((N - 2 * m + 1, N - 2 * m + 1))
    for ox, oy, wk in zip(*circle_stencil(m)):
        acc += wk * fine[m + ox : N - m + 1 + ox, m + oy : N - m + 1 + oy]
    out[m : N - m + 1, m : N - m + 1] = acc
    return out


def _circle_field(fine: np.ndarray, n: int, m: int) -> np.ndarray:
    coarse_view = circle_mean_field(fine, m)[::m, ::m]
    return SQRT_PI_2 * coarse_view


@dataclass(frozen=True, eq=False)
class CouplingSample:
    n: int
    m: int
    coarse: FieldSample
    fine: FieldSample
    circ: FieldSample
    mode: CouplingMode
    seed: int
    solver_tolerance: float = DEFAULT_TOLERANCE

    @classmethod
    def from_fields(cls, coarse_values, fine_values, m: int, seed: int = 0,
                    mode: CouplingMode = CouplingMode.EXACT_COARSE,
                    tolerance: float = DEFAULT_TOLERANCE) -> "CouplingSample":
        """Wrap arbitrary (possibly synthetic) coarse and fine arrays."""
        coarse_values = np.asarray(coarse_values, dtype=np.float64)
        n = coarse_values.shape[0] - 1
        coarse = FieldSample(n, coarse_values, FieldKind.COARSE_DGFF, seed, 1)
        fine = FieldSample(n * m, fine_values, FieldKind.COUPLED_FINE, seed, m)
        circ = FieldSample(n, _circle_field(fine.values, n, m), FieldKind.CIRCLE_AVERAGE, seed, m)
        return cls(n, m, coarse, fine, circ, CouplingMode(mode), seed, tolerance)

    def sidecar(self) -> dict:
        return {"n": self.n, "m": self.m, "seed": self.seed, "mode": self.mode.value,
                "solver_tolerance": self.solver_tolerance}


def check_budget(n: int, m: int) -> None:
    limit = budget_nm()
    if n * m > limit:
        raise BudgetError(f"fine scale n*m = {n * m} exceeds budget {limit} (LFPP_BUDGET_NM)")


def coupled_fields(n: int, m: int, seed: int, mode: CouplingMode,
                   solver: ProjectionSolver) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(coarse, fine)`` arrays of a coupling, without circle averages."""
    fine_dgff = gff.sample_dgff(n * m, seed, stream=FINE_STREAM).values
    if mode == CouplingMode.DIRECT_PROJECTION:
        return solver.project(fine_dgff), fine_dgff
    coarse = gff.sample_dgff(n, seed).values
    remainder = fine_dgff - solver.interpolate(solver.project(fine_dgff))
    return coarse, solver.interpolate(coarse) + remainder


def build_coupling(n: int, m: int, seed: int,
                   mode: CouplingMode | str = CouplingMode.EXACT_COARSE,
                   solver: ProjectionSolver | None = None) -> CouplingSample:
    """Sample a coupled (coarse DGFF, fine surrogate) pair.

    ``exact-coarse``: the coarse field is an exact DGFF; an independent fine
    DGFF contributes only its component orthogonal to the coarse hats.
    ``direct-projection``: the fine field is a fine DGFF and the coarse
    field is its projection.
    """
    mode = CouplingMode(mode)
    if n < 12:
        raise ValueError(f"coupling needs n >= 12, got {n}")
    if m < 2:
        raise ValueError(f"coupling needs mesh refinement m >= 2, got {m}")
    check_budget(n, m)
    solver = solver or projection_solver(n, m)
    coarse, fine = coupled_fields(n, m, seed, mode, solver)
    return CouplingSample.from_fields(coarse, fine, m, seed, mode, solver.tolerance)


def circle_average(coupling: CouplingSample, v) -> float:
    """Surrogate for the unit circle average at coarse vertex ``v``."""
    n = coupling.n
    x, y = v
    if min(x, y, n - x, n - y) < 1:
        raise BoundaryProximityError(f"unit circle around {v} leaves [0, {n}]^2")
    m = coupling.m
    return float(SQRT_PI_2 * circle_means(coupling.fine.values, m, [(x * m, y * m)])[0])


def _region_mask_interior(region: RectRegion, n: int) -> np.ndarray:
    mask = rasterize(region, n).mask
    if mask[0, :].any() or mask[n, :].any() or mask[:, 0].any() or mask[:, n].any():
        raise BoundaryProximityError("region must stay at positive distance from the boundary")
    return mask


def discrepancy_stat(coupling: CouplingSample, region: RectRegion | None = None) -> float:
    """``max |h_1(v) - sqrt(pi/2) eta(v)| / log n`` over lattice points of ``n * region``."""
    region = HALF_SQUARE if region is None else region
    n = coupling.n
    mask = _region_mask_interior(region, n)
    diff = np.abs(coupling.circ.values - SQRT_PI_2 * coupling.coarse.values)[mask]
    return float(diff.max() / math.log(n))


def center_circle_sample(n: int, m: int, seed: int, mode: CouplingMode,
                         solver: ProjectionSolver) -> tuple[float, float]:
    """``(circle average, sqrt(pi/2) * coarse)`` at the central vertex of one coupling."""
    coarse, fine = coupled_fields(n, m, seed, mode, solver)
    c = gff.center(n)
    circ = SQRT_PI_2 * circle_means(fine, m, [(c[0] * m, c[1] * m)])[0]
    return float(circ), float(SQRT_PI_2 * coarse[c])


def circle_average_variance_profile(n_list, m: int, samples: int, seed: int = 0,
                                    mode: CouplingMode | str = CouplingMode.EXACT_COARSE) -> list[dict]:
    """Empirical central variances of the circle average and of ``sqrt(pi/2) eta``.

    Residuals are taken against ``log n``.  Replicate ``k`` at scale ``n``
    uses seed ``derive_seed(seed, n, k)``.
    """
    mode = CouplingMode(mode)
    if samples <= 0:
        return []
    rows = []
    for n in n_list:
        check_budget(n, m)
        solver = projection_solver(n, m)
        data = np.array([center_circle_sample(n, m, gff.derive_seed(seed, n, k), mode, solver)
                         for k in range(samples)])
        var_circ, var_coarse = data.var(axis=0, ddof=1)
        rows.append({
            "n": n, "m": m, "samples": samples,
            "var_circle": float(var_circ), "var_coarse": float(var_coarse),
            "resid_circle": float(var_circ - math.log(n)),
            "resid_coarse": float(var_coarse - math.log(n)),
            "var_difference": float(np.var(data[:, 0] - data[:, 1], ddof=1)),
        })
    return rows


def circle_weights(n: int, m: int, v) -> np.ndarray:
    """Fine-lattice weights ``s`` with ``circle mean at v = (s * fine).sum()``."""
    N = n * m
    dx, dy, w = circle_stencil(m)
    out = np.zeros((N + 1, N + 1))
    np.add.at(out, (v[0] * m + dx, v[1] * m + dy), w)
    return out


def circle_average_variance_exact(n: int, m: int, v=None,
                                  mode: CouplingMode | str = CouplingMode.EXACT_COARSE) -> dict:
    """Exact variances of the circle average and of the gap to ``sqrt(pi/2) eta``.

    Everything is a linear functional of Gaussian inputs, so the variances
    reduce to sparse solves against the fine Laplacian, the coarse Laplacian
    and the stiffness matrix.
    """
    mode = CouplingMode(mode)
    v = gff.center(n) if v is None else tuple(v)
    solver = projection_solver(n, m)
    s_full = circle_weights(n, m, v)
    s = s_full.ravel()[solver._fine_int]
    a = solver.P.T @ s  # circle functional pulled back to coarse hats
    Lf_inv_s = splu(solver.L_fine).solve(s)
    K_inv_a = splu(solver.stiffness).solve(a)
    e_v = np.zeros(a.size)
    e_v[(v[0] - 1) * (n - 1) + (v[1] - 1)] = 1.0
    if mode == CouplingMode.EXACT_COARSE:
        Lc_inv_a = splu(gff.dirichlet_laplacian(n)).solve(a)
        Lc_inv_e = splu(gff.dirichlet_laplacian(n)).solve(e_v)
        var_circle = 4.0 * (a @ Lc_inv_a + s @ Lf_inv_s - a @ K_inv_a)
        var_coarse = 4.0 * Lc_inv_e[e_v.argmax()]
        cov = 4.0 * (a @ Lc_inv_e)
    else:
        # fine = eta_f, coarse = K^{-1} P^T L_f eta_f
        K_inv_e = splu(solver.stiffness).solve(e_v)
        var_circle = 4.0 * (s @ Lf_inv_s)
        var_coarse = 4.0 * K_inv_e[e_v.argmax()]
        cov = 4.0 * (a @ K_inv_e)
    pi2 = math.pi / 2
    return {
        "var_circle": pi2 * var_circle,
        "var_coarse": pi2 * var_coarse,
        "var_difference": pi2 * (var_circle + var_coarse - 2 * cov),
    }


# --- persistence ----------------------------------------------------------

BUNDLE_FILES = {"coarse": "coarse.bin", "fine": "fine.bin", "circ": "circ.bin"}
SIDECAR = "coupling.json"


def write_bundle(coupling: CouplingSample, directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for attr, name in BUNDLE_FILES.items():
        paths[attr] = directory / name
        gff.write_snapshot(getattr(coupling, attr), paths[attr])
    paths["sidecar"] = directory / SIDECAR
    paths["sidecar"].write_text(json.dumps(coupling.sidecar(), indent=2, sort_keys=True) + "\n")
    return paths


def read_bundle(directory: str | Path) -> CouplingSample:
    directory = Path(directory)
    meta = json.loads((directory / SIDECAR).read_text())
    fields = {attr: gff.read_snapshot(directory / name) for attr, name in BUNDLE_FILES.items()}
    return CouplingSample(meta["n"], meta["m"], fields["coarse"], fields["fine"], fields["circ"],
                          CouplingMode(meta["mode"]), meta["seed"], meta["solver_tolerance"])
