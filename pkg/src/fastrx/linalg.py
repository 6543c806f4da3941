"""Image-as-matrix data model and the small set of dense linear-algebra
primitives the detectors are built on (centering, covariance, SPD solves and
the symmetric pseudoinverse).

All arrays are float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import InvalidData, NonFiniteData, NotPositiveDefinite, ShapeMismatch

__all__ = [
    "DataMatrix",
    "CenteringStats",
    "SpdSolver",
    "PinvFactor",
    "GramSolver",
    "ShiftedSolver",
    "as_matrix",
    "center_columns",
    "covariance",
    "default_ridge",
    "spd_solve_prepare",
    "pseudo_inverse",
    "row_quadratic",
]


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce ``X`` (array-like or :class:`DataMatrix`) to a finite 2-D float64 array."""
    if isinstance(X, DataMatrix):
        return X.values
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D (pixels x bands), got ndim={A.ndim}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidData(f"{name} is empty: shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteData(f"{name} contains non-finite values")
    return A


@dataclass(frozen=True)
class DataMatrix:
    """An image reshaped to ``n`` pixels by ``d`` bands.

    ``shape`` is the spatial ``(height, width)``; ``height * width == n``.
    """

    values: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        values = as_matrix(self.values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        h, w = (int(s) for s in self.shape)
        if h < 1 or w < 1 or h * w != values.shape[0]:
            raise ShapeMismatch(
                f"spatial shape {h}x{w} does not match {values.shape[0]} pixels"
            )
        object.__setattr__(self, "shape", (h, w))

    @classmethod
    def from_array(cls, X, shape: tuple[int, int] | None = None) -> "DataMatrix":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            h, w, d = X.shape
            return cls(X.reshape(h * w, d), (h, w))
        X = as_matrix(X)
        return cls(X, shape if shape is not None else (X.shape[0], 1))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def band_count(self) -> int:
        return self.values.shape[1]

    def cube(self) -> np.ndarray:
        """Return the data as a ``(height, width, bands)`` array."""
        return self.values.reshape(*self.shape, self.band_count)


@dataclass(frozen=True)
class CenteringStats:
    column_means: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.column_means.shape[0]:
            raise ShapeMismatch(
                f"expected {self.column_means.shape[0]} bands, got {X.shape[1]}"
            )
        return X - self.column_means


def center_columns(X) -> tuple[np.ndarray, CenteringStats]:
    """Subtract column means; return the centered matrix and the means used."""
    A = as_matrix(X)
    mu = A.mean(axis=0)
    return A - mu, CenteringStats(mu)


def covariance(Xc) -> np.ndarray:
    """``(1/n) Xc^T Xc`` for an already centered ``n x d`` matrix."""
    A = as_matrix(Xc, "Xc")
    C = (A.T @ A) / A.shape[0]
    return 0.5 * (C + C.T)


def default_ridge(A: np.ndarray, scale: float = 1e-8) -> float:
    """Ridge of ``scale * trace(A) / m``."""
    m = A.shape[0]
    return scale * float(np.trace(A)) / m


def _check_symmetric(A: np.ndarray, name: str = "A", rtol: float = 1e-10) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteData(f"{name} contains non-finite values")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale > 0 and np.max(np.abs(A - A.T)) > rtol * scale:
        raise InvalidData(f"{name} is not symmetric")
    return A


def row_quadratic(B: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``sum(B * Y, axis=1)`` -- row-wise inner products."""
    return np.einsum("ij,ij->i", B, Y)


class SpdSolver:
    """Cholesky factorization of ``A + ridge * I``.

    Parameters
    ----------
    A : (m, m) ndarray
        Symmetric positive (semi)definite matrix.
    ridge : float
        Nonnegative diagonal loading actually applied.
    """

    def __init__(self, A, ridge: float = 0.0):
        A = _check_symmetric(A)
        if ridge < 0 or not np.isfinite(ridge):
            raise InvalidData(f"ridge must be finite and >= 0, got {ridge}")
        self.dim = A.shape[0]
        self.ridge = float(ridge)
        A_reg = 0.5 * (A + A.T)
        A_reg[np.diag_indices_from(A_reg)] += self.ridge
        try:
            self._L = sla.cholesky(A_reg, lower=True, check_finite=False)
        except sla.LinAlgError as exc:
            raise NotPositiveDefinite(
                f"matrix of size {self.dim} is not positive definite with ridge "
                f"{self.ridge:.3g}; increase the ridge"
            ) from exc
        self._L.setflags(write=False)

    def solve(self, b) -> np.ndarray:
        """Apply ``(A + ridge I)^{-1}`` to a vector or to the columns of a matrix."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.dim:
            raise ShapeMismatch(f"right-hand side has {b.shape[0]} rows, expected {self.dim}")
        return sla.cho_solve((self._L, True), b, check_finite=False)

    def whiten(self, B: np.ndarray) -> np.ndarray:
        """Rows ``b`` mapped to ``L^{-1} b`` so that ``|L^{-1} b|^2 = b^T A^{-1} b``."""
        return sla.solve_triangular(self._L, B.T, lower=True, check_finite=False).T

    def quad(self, B) -> np.ndarray:
        """Row-wise quadratic forms ``b_i^T (A + ridge I)^{-1} b_i``."""
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if B.shape[1] != self.dim:
            raise ShapeMismatch(f"expected vectors of length {self.dim}, got {B.shape[1]}")
        Y = self.whiten(B)
        return row_quadratic(Y, Y)


class GramSolver:
    """``(Z^T Z + ridge I)^{-1}`` for a wide ``n x m`` matrix ``Z`` (``m > n``).

    Uses the thin SVD ``Z = U S V^T``: on the row space of ``Z`` the inverse
    is ``V (S^2 + ridge)^{-1} V^T``; its orthogonal complement is scaled by
    ``1/ridge``.  Storage is ``O(n m)`` instead of ``O(m^2)``.
    """

    def __init__(self, Z, ridge: float):
        Z = np.asarray(Z, dtype=np.float64)
        if ridge <= 0 or not np.isfinite(ridge):
            raise NotPositiveDefinite(f"a wide Gram matrix needs a positive ridge, got {ridge}")
        self.dim = Z.shape[1]
        self.ridge = float(ridge)
        _, s, Vt = np.linalg.svd(Z, full_matrices=False)
        self._V = Vt.T
        self._scale = 1.0 / np.sqrt(s * s + self.ridge)
        self._V.setflags(write=False)

    def quad(self, B) -> np.ndarray:
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if B.shape[1] != self.dim:
            raise ShapeMismatch(f"expected vectors of length {self.dim}, got {B.shape[1]}")
        C = B @ self._V
        resid = B - C @ self._V.T
        Y = C * self._scale
        return row_quadratic(Y, Y) + row_quadratic(resid, resid) / self.ridge

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        c = self._V.T @ b
        inner = self._V @ (c.T * self._scale**2).T
        return inner + (b - self._V @ c) / self.ridge


class ShiftedSolver:
    """Quadratic forms in ``(M^2 + ridge I)^{-1}`` for a symmetric ``M``.

    Uses ``M^2 + mu^2 I = (M + i mu I)(M - i mu I)`` with ``mu = sqrt(ridge)``:
    one complex LU of ``M + i mu I`` gives ``b^T (M^2 + mu^2)^{-1} b =
    |(M + i mu I)^{-1} b|^2``.  The squared matrix is never formed, so the
    conditioning is that of ``M`` shifted by ``mu`` rather than its square.
    """

    def __init__(self, M, ridge: float):
        M = _check_symmetric(M, "M")
        if ridge < 0 or not np.isfinite(ridge):
            raise InvalidData(f"ridge must be finite and >= 0, got {ridge}")
        self.dim = M.shape[0]
        self.ridge = float(ridge)
        if self.ridge > 0:
            A = M.astype(np.complex128)
            A[np.diag_indices_from(A)] += 1j * np.sqrt(self.ridge)
        else:
            A = M.copy()
        self._lu = sla.lu_factor(A, overwrite_a=True, check_finite=False)
        u = np.abs(np.diag(self._lu[0]))
        if u.min() <= self.dim * np.finfo(np.float64).eps * u.max():
            raise NotPositiveDefinite(
                f"matrix of size {self.dim} is singular with ridge {self.ridge:.3g}; "
                "increase the ridge or use a pseudoinverse")

    def quad(self, B) -> np.ndarray:
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if B.shape[1] != self.dim:
            raise ShapeMismatch(f"expected vectors of length {self.dim}, got {B.shape[1]}")
        Y = sla.lu_solve(self._lu, B.T.astype(self._lu[0].dtype), check_finite=False)
        return np.einsum("ij,ij->j", Y.real, Y.real) + np.einsum("ij,ij->j", Y.imag, Y.imag)


def spd_solve_prepare(A, ridge: float | None = None) -> SpdSolver:
    """Factor ``A + ridge I``; ``ridge=None`` selects ``1e-8 * trace(A) / m``."""
    A = _check_symmetric(A)
    if ridge is None:
        ridge = default_ridge(A)
    return SpdSolver(A, ridge)


class PinvFactor:
    """Truncated eigendecomposition ``A = V diag(w) V^T`` of a symmetric PSD matrix.

    Eigenvalues ``<= tol`` (absolute, already scaled by the largest
    eigenvalue) are discarded; the retained pairs define ``A^+``.
    """

    def __init__(self, eigvals: np.ndarray, eigvecs: np.ndarray, tol: float, dim: int):
        self.eigvals = eigvals
        self.eigvecs = eigvecs
        self.tol = float(tol)
        self.dim = dim
        # rows projected through this factor satisfy |y|^2 = b^T A^+ b
        self._whitener = eigvecs / np.sqrt(eigvals)
        for arr in (self.eigvals, self.eigvecs, self._whitener):
            arr.setflags(write=False)

    @property
    def effective_rank(self) -> int:
        return int(self.eigvals.shape[0])

    def matrix(self) -> np.ndarray:
        return (self.eigvecs / self.eigvals) @ self.eigvecs.T

    def apply(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        return self.eigvecs @ ((self.eigvecs.T @ b).T / self.eigvals).T

    def whiten(self, B: np.ndarray) -> np.ndarray:
        return B @ self._whitener

    def quad(self, B) -> np.ndarray:
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if B.shape[1] != self.dim:
            raise ShapeMismatch(f"expected vectors of length {self.dim}, got {B.shape[1]}")
        Y = self.whiten(B)
        return row_quadratic(Y, Y)


def pseudo_inverse(A, tol: float | None = None) -> PinvFactor:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    ``tol`` is relative to the largest eigenvalue; the default is
    ``m * eps``.  Eigenvalues at or below ``tol * lambda_max`` are treated as
    zero.
    """
    A = _check_symmetric(A, rtol=1e-8)
    m = A.shape[0]
    if tol is None:
        tol = m * np.finfo(np.float64).eps
    if tol < 0:
        raise InvalidData(f"tol must be >= 0, got {tol}")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    lam_max = max(float(w[-1]), 0.0)
    cutoff = tol * lam_max
    keep = w > cutoff
    if lam_max == 0.0:
        keep[:] = False
    return PinvFactor(w[keep].copy(), V[:, keep].copy(), cutoff, m)
