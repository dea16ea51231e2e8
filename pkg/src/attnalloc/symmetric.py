"""Dense symmetric / positive-definite matrix kernel.

All covariance, information and weight matrices in this package are carried
as :class:`SymMatrix` (packed upper triangle, so symmetry cannot drift) or
:class:`SpdMatrix` (a ``SymMatrix`` plus its cached Cholesky factor, which
doubles as a positive-definiteness certificate).  Dimensions here are tiny
(state dimension 3, at most a few dozen landmarks), so everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NotPositiveDefinite",
    "SymMatrix",
    "SpdMatrix",
    "cholesky",
    "logdet",
    "inverse",
    "svec",
    "smat",
    "svec_basis",
    "min_eigenvalue",
    "spd_sqrt",
]

_SQRT2 = np.sqrt(2.0)

DEFAULT_PIVOT_FLOOR = 1e-12


class NotPositiveDefinite(Exception):
    """Cholesky pivot at ``index`` fell at or below the pivot floor."""

    def __init__(self, index: int, pivot: float | None = None):
        self.index = index
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (pivot {index}: {pivot})")


def _packed_len(dim: int) -> int:
    return dim * (dim + 1) // 2


def _dim_from_packed_len(length: int) -> int:
    dim = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if _packed_len(dim) != length:
        raise ValueError(f"vector of length {length} is not a packed triangle")
    return dim


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric matrix stored as its packed upper triangle (row-major).

    Off-diagonal entries exist exactly once, so the two triangles of a
    symmetric quantity cannot drift apart during long Riccati recursions.
    """

    dim: int
    packed: np.ndarray

    def __post_init__(self):
        packed = np.asarray(self.packed, dtype=float)
        if packed.shape != (_packed_len(self.dim),):
            raise ValueError(
                f"packed triangle of a {self.dim}x{self.dim} matrix needs "
                f"{_packed_len(self.dim)} entries, got shape {packed.shape}"
            )
        if not np.all(np.isfinite(packed)):
            raise ValueError("symmetric matrix entries must be finite")
        packed.flags.writeable = False
        object.__setattr__(self, "packed", packed)

    @staticmethod
    def from_full(a) -> "SymMatrix":
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        sym = 0.5 * (a + a.T)
        iu = np.triu_indices(a.shape[0])
        return SymMatrix(a.shape[0], sym[iu])

    @staticmethod
    def zeros(dim: int) -> "SymMatrix":
        return SymMatrix(dim, np.zeros(_packed_len(dim)))

    @staticmethod
    def identity(dim: int) -> "SymMatrix":
        return SymMatrix.from_full(np.eye(dim))

    @staticmethod
    def diagonal(values) -> "SymMatrix":
        return SymMatrix.from_full(np.diag(np.asarray(values, dtype=float)))

    def full(self) -> np.ndarray:
        """Dense ndarray view (freshly allocated, symmetric by construction)."""
        a = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim)
        a[iu] = self.packed
        a.T[iu] = self.packed
        return a

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return SymMatrix(self.dim, self.packed + other.packed)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return SymMatrix(self.dim, self.packed - other.packed)

    def __mul__(self, scale: float) -> "SymMatrix":
        return SymMatrix(self.dim, self.packed * float(scale))

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive-definite matrix with its cached Cholesky factor.

    Construction fails with :class:`NotPositiveDefinite` unless all pivots
    clear the pivot floor, so holding an ``SpdMatrix`` certifies positive
    definiteness.
    """

    base: SymMatrix
    chol: np.ndarray

    @staticmethod
    def from_sym(base: SymMatrix, pivot_floor: float = DEFAULT_PIVOT_FLOOR) -> "SpdMatrix":
        L = cholesky(base, pivot_floor)
        L.flags.writeable = False
        return SpdMatrix(base, L)

    @staticmethod
    def from_full(a, pivot_floor: float = DEFAULT_PIVOT_FLOOR) -> "SpdMatrix":
        return SpdMatrix.from_sym(SymMatrix.from_full(a), pivot_floor)

    @staticmethod
    def identity(dim: int) -> "SpdMatrix":
        return SpdMatrix.from_sym(SymMatrix.identity(dim))

    @staticmethod
    def diagonal(values) -> "SpdMatrix":
        return SpdMatrix.from_sym(SymMatrix.diagonal(values))

    @property
    def dim(self) -> int:
        return self.base.dim

    def full(self) -> np.ndarray:
        return self.base.full()


def _as_full(m) -> np.ndarray:
    if isinstance(m, SpdMatrix):
        return m.full()
    if isinstance(m, SymMatrix):
        return m.full()
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def cholesky(m, pivot_floor: float = DEFAULT_PIVOT_FLOOR) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == m.

    Raises :class:`NotPositiveDefinite` with the offending pivot index when
    a diagonal residual falls at or below ``pivot_floor``.  The floor
    separates genuinely singular information matrices (zero attention on an
    unobservable mode) from roundoff.
    """
    a = _as_full(m)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= pivot_floor:
            raise NotPositiveDefinite(j, float(d))
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def logdet(m: SpdMatrix) -> float:
    """Natural-log determinant, read off the cached Cholesky diagonal."""
    L = m.chol if isinstance(m, SpdMatrix) else cholesky(m)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def inverse(m: SpdMatrix, pivot_floor: float = DEFAULT_PIVOT_FLOOR) -> SpdMatrix:
    """SPD inverse via the Cholesky factor."""
    L = m.chol if isinstance(m, SpdMatrix) else cholesky(m, pivot_floor)
    n = L.shape[0]
    Linv = np.linalg.solve(L, np.eye(n))
    inv = Linv.T @ Linv
    return SpdMatrix.from_full(inv, pivot_floor)


def svec(m) -> np.ndarray:
    """Half-vectorization with sqrt(2)-scaled off-diagonals (row-major upper
    triangle), so that ``svec(a) @ svec(b) == trace(a @ b)``."""
    a = _as_full(m)
    iu = np.triu_indices(a.shape[0])
    scale = np.where(iu[0] == iu[1], 1.0, _SQRT2)
    return a[iu] * scale


def smat(v) -> SymMatrix:
    """Inverse of :func:`svec`; exact on any vector that svec produced.

    fl(fl(x*sqrt2)/sqrt2) can land one ulp off x, so the off-diagonal
    unscaling is corrected to the unique preimage when one exists.
    """
    v = np.asarray(v, dtype=float)
    n = _dim_from_packed_len(v.shape[0])
    iu = np.triu_indices(n)
    off = iu[0] != iu[1]
    entries = v.copy()
    y = v[off]
    z = y / _SQRT2
    bad = (z * _SQRT2) != y
    for direction in (np.inf, -np.inf):
        if not np.any(bad):
            break
        zc = np.nextafter(z, direction)
        fix = bad & ((zc * _SQRT2) == y)
        z = np.where(fix, zc, z)
        bad &= ~fix
    entries[off] = z
    a = np.zeros((n, n))
    a[iu] = entries
    a.T[iu] = entries
    return SymMatrix(n, a[iu])


_BASIS_CACHE: dict[int, np.ndarray] = {}


def svec_basis(dim: int) -> np.ndarray:
    """Orthonormal symmetric basis stacked as shape (dim*(dim+1)/2, dim, dim).

    Entry j satisfies ``trace(E_j @ X) == svec(X)[j]`` for symmetric X.
    """
    cached = _BASIS_CACHE.get(dim)
    if cached is not None:
        return cached
    basis = np.zeros((_packed_len(dim), dim, dim))
    idx = 0
    for i in range(dim):
        for j in range(i, dim):
            if i == j:
                basis[idx, i, i] = 1.0
            else:
                basis[idx, i, j] = basis[idx, j, i] = 1.0 / _SQRT2
            idx += 1
    basis.flags.writeable = False
    _BASIS_CACHE[dim] = basis
    return basis


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(_as_full(m))[0])


def spd_sqrt(m) -> np.ndarray:
    """Symmetric square root of an SPD/PSD matrix via eigendecomposition."""
    a = _as_full(m)
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T
