"""Zero-boundary discrete Gaussian free field on ``{0..n}^2``.

Normalization: the covariance is the Green function of simple random walk
killed on the outer boundary, i.e. ``4 * L^{-1}`` with ``L = 4I - A`` the
Dirichlet Laplacian of the interior vertices.  With this convention the
variance near the center grows like ``(2/pi) log n``.
"""
from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.fft import dstn
from scipy.sparse.linalg import splu

from .errors import BudgetError, SnapshotFormatError

GREEN_MAX_N = 256

SNAPSHOT_MAGIC = b"LFPPFLD1"
_HEADER = struct.Struct("<8sIIBQ")

SEED_MASK = (1 << 64) - 1


class FieldKind(enum.IntEnum):
    COARSE_DGFF = 0
    FINE_DGFF = 1
    COUPLED_FINE = 2
    CIRCLE_AVERAGE = 3


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Real values on ``{0..n}^2``; ``values[x, y]``.

    ``n`` is always the scale of the stored array.  For fine-mesh kinds
    ``m`` is the refinement, so the coarse scale is ``n // m``; for circle
    averages ``m`` records the refinement of the field they were read from.
    """

    n: int
    values: np.ndarray
    kind: FieldKind
    seed: int
    m: int = 1

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.n + 1, self.n + 1):
            raise ValueError(f"values shape {values.shape} does not match n={self.n}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", FieldKind(self.kind))
        object.__setattr__(self, "seed", int(self.seed) & SEED_MASK)

    @property
    def coarse_n(self) -> int:
        if self.kind in (FieldKind.FINE_DGFF, FieldKind.COUPLED_FINE):
            return self.n // self.m
        return self.n

    def checksum(self) -> str:
        return hashlib.sha256(snapshot_bytes(self)).hexdigest()


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Philox draws are a pure function of key and counter, so a given seed
    always yields the same noise regardless of what else ran before.
    """
    key = (int(seed) & SEED_MASK) | (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for replicate ``keys`` of ``seed``."""
    ss = np.random.SeedSequence([int(seed) & SEED_MASK, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@lru_cache(maxsize=32)
def _eigen_scale(n: int) -> np.ndarray:
    k = np.arange(1, n)
    c = 2.0 - 2.0 * np.cos(np.pi * k / n)
    lam = c[:, None] + c[None, :]
    return np.sqrt(4.0 / lam)


def field_from_noise(noise: np.ndarray) -> np.ndarray:
    """Map iid standard normals on the ``(n-1)^2`` interior to a DGFF.

    Uses the sine eigenbasis of the Dirichlet Laplacian (eigenvalues
    ``4 - 2cos(pi j/n) - 2cos(pi k/n)``); the orthonormal DST-I is its own
    inverse, so one transform suffices.  Linear in ``noise``.
    """
    noise = np.asarray(noise, dtype=np.float64)
    n = noise.shape[0] + 1
    out = np.zeros((n + 1, n + 1))
    if n >= 2:
        out[1:n, 1:n] = dstn(noise * _eigen_scale(n), type=1, norm="ortho")
    return out


def sample_dgff(n: int, seed: int, stream: int = 0, kind: FieldKind = FieldKind.COARSE_DGFF,
                m: int = 1) -> FieldSample:
    """Exact zero-boundary DGFF sample at scale ``n``, deterministic in ``seed``."""
    if n < 2:
        raise ValueError(f"DGFF needs n >= 2, got {n}")
    noise = rng_for(seed, stream).standard_normal((n - 1, n - 1))
    return FieldSample(n, field_from_noise(noise), kind, seed, m)


def dirichlet_laplacian(n: int) -> sp.csc_matrix:
    """``4I - A`` on the ``(n-1)^2`` interior vertices, x-major ordering."""
    k = n - 1
    one_d = sp.diags([-np.ones(k - 1), 2 * np.ones(k), -np.ones(k - 1)], [-1, 0, 1])
    eye = sp.identity(k)
    return (sp.kron(one_d, eye) + sp.kron(eye, one_d)).tocsc()


class GreenOracle:
    """Exact Green function of the walk killed on the boundary of ``{0..n}^2``."""

    def __init__(self, n: int):
        if n > GREEN_MAX_N:
            raise BudgetError(f"Green oracle is limited to n <= {GREEN_MAX_N}, got {n}")
        if n < 2:
            raise ValueError("Green oracle needs n >= 2")
        self.n = n
        self.laplacian = dirichlet_laplacian(n)
        self._lu = splu(self.laplacian)

    def _interior_index(self, p) -> int | None:
        x, y = p
        n = self.n
        if not (0 <= x <= n and 0 <= y <= n):
            raise ValueError(f"point {p} outside {{0..{n}}}^2")
        if x in (0, n) or y in (0, n):
            return None
        return (x - 1) * (n - 1) + (y - 1)

    def column(self, v) -> np.ndarray:
        """``G(., v)`` as an ``(n+1, n+1)`` array."""
        n = self.n
        out = np.zeros((n + 1, n + 1))
        j = self._interior_index(v)
        if j is None:
            return out
        rhs = np.zeros((n - 1) ** 2)
        rhs[j] = 4.0
        out[1:n, 1:n] = self._lu.solve(rhs).reshape(n - 1, n - 1)
        return out

    def __call__(self, u, v) -> float:
        if self._interior_index(u) is None:
            self._interior_index(v)
            return 0.0
        return float(self.column(v)[u[0], u[1]])

    def interior_matrix(self) -> np.ndarray:
        """Dense Green matrix over interior vertices (small ``n`` only)."""
        k = (self.n - 1) ** 2
        return self._lu.solve(4.0 * np.eye(k))


@lru_cache(maxsize=8)
def green_oracle(n: int) -> GreenOracle:
    return GreenOracle(n)


def green_function(n: int, u, v) -> float:
    """Expected visits to ``v`` of the walk from ``u`` killed on the boundary."""
    if n > GREEN_MAX_N:
        raise BudgetError(f"Green oracle is limited to n <= {GREEN_MAX_N}, got {n}")
    return green_oracle(n)(tuple(u), tuple(v))


def center(n: int) -> tuple[int, int]:
    return (n // 2, n // 2)


def covariance_log_profile(n_list: Iterable[int]) -> list[tuple[int, float]]:
    """``(n, G(c, c) - (2/pi) log n)`` for the central vertex ``c``."""
    rows = []
    for n in n_list:
        c = center(n)
        rows.append((n, green_function(n, c, c) - 2.0 / math.pi * math.log(n)))
    return rows


def field_max(sample: FieldSample) -> float:
    if sample.kind != FieldKind.COARSE_DGFF:
        raise ValueError(f"field_max expects a coarse DGFF, got {sample.kind.name}")
    return float(sample.values.max())


# --- snapshot files -------------------------------------------------------

def snapshot_bytes(sample: FieldSample) -> bytes:
    header = _HEADER.pack(SNAPSHOT_MAGIC, sample.n, sample.m, int(sample.kind), sample.seed)
    return header + sample.values.astype("<f8").tobytes(order="C")


def write_snapshot(sample: FieldSample, path: str | Path) -> None:
    Path(path).write_bytes(snapshot_bytes(sample))


def parse_snapshot(data: bytes) -> FieldSample:
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("snapshot truncated before end of header")
    magic, n, m, kind, seed = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        if magic[:7] == SNAPSHOT_MAGIC[:7]:
            raise SnapshotFormatError(
                f"unsupported snapshot version {magic[7:].decode(errors='replace')!r}; "
                f"this build reads {SNAPSHOT_MAGIC.decode()} only"
            )
        raise SnapshotFormatError("not an lfpp field snapshot (bad magic)")
    try:
        kind = FieldKind(kind)
    except ValueError:
        raise SnapshotFormatError(f"unknown field kind {kind}") from None
    count = (n + 1) ** 2
    body = data[_HEADER.size :]
    if len(body) != 8 * count:
        raise SnapshotFormatError(f"expected {8 * count} payload bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(n + 1, n + 1)
    return FieldSample(n, values, kind, seed, m)


def read_snapshot(path: str | Path) -> FieldSample:
    return parse_snapshot(Path(path).read_bytes())
