"""RBF kernel evaluation, Gram matrices and implicit feature-space centering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateData, InvalidData, ShapeMismatch
from .linalg import as_matrix

__all__ = [
    "RbfKernelParams",
    "LinearKernel",
    "KernelCenteringStats",
    "rbf",
    "kernel_matrix",
    "sq_distances",
    "center_kernel_train",
    "center_kernel_test",
    "median_heuristic_sigma",
]


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows, clamped at zero."""
    D = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :]
    D -= 2.0 * (A @ B.T)
    np.maximum(D, 0.0, out=D)
    return D


@dataclass(frozen=True)
class RbfKernelParams:
    """Gaussian kernel ``exp(-|x - y|^2 / (2 sigma^2))``."""

    sigma: float

    def __post_init__(self):
        s = float(self.sigma)
        if not np.isfinite(s) or s <= 0:
            raise InvalidData(f"sigma must be finite and > 0, got {self.sigma}")
        object.__setattr__(self, "sigma", s)

    def gram(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        D = sq_distances(A, B)
        D *= -0.5 / (self.sigma * self.sigma)
        return np.exp(D, out=D)


@dataclass(frozen=True)
class LinearKernel:
    """``x^T y``.  Only used to check that kernel RX collapses to linear RX."""

    def gram(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return A @ B.T


def rbf(x, y, params: RbfKernelParams) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeMismatch(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    return float(np.exp(-(diff @ diff) / (2.0 * params.sigma**2)))


def kernel_matrix(A, B, params) -> np.ndarray:
    """Kernel between every row of ``A`` and every row of ``B`` (``a x b``)."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return params.gram(A, B)


@dataclass(frozen=True)
class KernelCenteringStats:
    """Row means of the training kernel and its grand mean.

    ``row_means[i]`` is ``<phi(x_i), mu>`` and ``grand_mean`` is ``|mu|^2``
    where ``mu`` is the feature-space mean of the training set.
    """

    row_means: np.ndarray
    grand_mean: float

    @property
    def n(self) -> int:
        return self.row_means.shape[0]


def center_kernel_train(K) -> tuple[np.ndarray, KernelCenteringStats]:
    """Double-center a symmetric training kernel, ``H K H``."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeMismatch(f"kernel matrix must be square, got {K.shape}")
    row_means = K.mean(axis=1)
    grand = float(row_means.mean())
    Kc = K - row_means[:, None]
    Kc -= K.mean(axis=0)[None, :]
    Kc += grand
    return Kc, KernelCenteringStats(row_means, grand)


def center_kernel_test(k_star, stats: KernelCenteringStats) -> np.ndarray:
    """Center test kernel vector(s) against the training feature mean.

    ``k_star`` is a length-``n`` vector or a ``b x n`` block (one test pixel
    per row).  Row ``j`` of the training kernel maps to row ``j`` of the
    centered training kernel.
    """
    k = np.asarray(k_star, dtype=np.float64)
    single = k.ndim == 1
    k = np.atleast_2d(k)
    if k.shape[1] != stats.n:
        raise ShapeMismatch(f"test kernel has length {k.shape[1]}, expected {stats.n}")
    out = k - stats.row_means[None, :]
    out -= k.mean(axis=1, keepdims=True)
    out += stats.grand_mean
    return out[0] if single else out


def median_heuristic_sigma(X, sample_size: int = 1000, seed: int = 0) -> RbfKernelParams:
    """Median pairwise distance over a seeded subsample of rows."""
    A = as_matrix(X)
    if sample_size < 2:
        raise InvalidData(f"sample_size must be >= 2, got {sample_size}")
    if A.shape[0] > sample_size:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(A.shape[0], size=sample_size, replace=False))
        A = A[idx]
    if A.shape[0] < 2:
        raise DegenerateData("need at least two points for the median heuristic")
    med = float(np.median(pdist(A)))
    if med <= 0.0:
        raise DegenerateData("median pairwise distance is zero (too few distinct points)")
    return RbfKernelParams(med)
