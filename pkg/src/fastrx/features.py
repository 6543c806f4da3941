"""Data-independent random feature maps for the RBF kernel.

Two frequency samplers are provided: plain random Fourier features (i.i.d.
Gaussian frequencies) and orthogonal random features, where each block of
``d`` frequencies is a scaled Haar-random orthogonal matrix.  Both feed the
same explicit cos/sin map.

Random numbers come from numpy's ``PCG64`` bit generator
(``np.random.default_rng(seed)``), which is stable across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidData, ShapeMismatch
from .linalg import as_matrix

__all__ = [
    "FrequencyMatrix",
    "FeatureMappedData",
    "sample_rff",
    "sample_orf",
    "sample_frequencies",
    "haar_orthogonal",
    "feature_map",
]


@dataclass(frozen=True)
class FrequencyMatrix:
    """``D x d`` matrix whose rows are the sampled frequencies."""

    W: np.ndarray
    sigma: float
    kind: str
    seed: int

    @property
    def n_frequencies(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class FeatureMappedData:
    Z: np.ndarray
    kind: str
    seed: int


def _check(d: int, D: int, sigma: float) -> None:
    if int(d) < 1 or int(D) < 1:
        raise InvalidData(f"d and D must be >= 1, got d={d}, D={D}")
    if not np.isfinite(sigma) or sigma <= 0:
        raise InvalidData(f"sigma must be finite and > 0, got {sigma}")


def sample_rff(d: int, D: int, sigma: float, seed: int = 0) -> FrequencyMatrix:
    """Frequencies drawn i.i.d. from ``N(0, sigma^-2 I)``, the RBF spectral density."""
    _check(d, D, sigma)
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((int(D), int(d))) / sigma
    W.setflags(write=False)
    return FrequencyMatrix(W, float(sigma), "rff", int(seed))


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed ``d x d`` orthogonal matrix (QR with sign fix)."""
    G = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs[None, :]


def sample_orf(d: int, D: int, sigma: float, seed: int = 0) -> FrequencyMatrix:
    """Orthogonal random features ``(1/sigma) S Q``.

    ``ceil(D/d)`` independent blocks are stacked and the result truncated to
    ``D`` rows.  Within a block the rows are mutually orthogonal, and each row
    norm is chi-distributed with ``d`` degrees of freedom (divided by sigma),
    matching the row-norm law of Gaussian frequencies.
    """
    _check(d, D, sigma)
    d, D = int(d), int(D)
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(-(-D // d)):
        Q = haar_orthogonal(d, rng)
        s = np.sqrt(rng.chisquare(d, size=d))
        blocks.append(s[:, None] * Q)
    W = np.vstack(blocks)[:D] / sigma
    W.setflags(write=False)
    return FrequencyMatrix(W, float(sigma), "orf", int(seed))


def sample_frequencies(kind: str, d: int, D: int, sigma: float, seed: int = 0) -> FrequencyMatrix:
    if kind == "rff":
        return sample_rff(d, D, sigma, seed)
    if kind == "orf":
        return sample_orf(d, D, sigma, seed)
    raise InvalidData(f"unknown frequency kind {kind!r}")


def feature_map(X, W: FrequencyMatrix) -> FeatureMappedData:
    """Explicit map ``z(x) = D^{-1/2} [cos(w_1.x), sin(w_1.x), ..., cos(w_D.x), sin(w_D.x)]``.

    With the ``1/sqrt(D)`` scaling ``z(x).z(x) = 1 = k(x, x)`` exactly and
    ``z(x).z(y)`` is an unbiased estimate of ``k(x, y)``.
    """
    A = as_matrix(X)
    if A.shape[1] != W.dim:
        raise ShapeMismatch(f"data has {A.shape[1]} bands, frequencies expect {W.dim}")
    D = W.n_frequencies
    P = A @ W.W.T
    Z = np.empty((A.shape[0], 2 * D))
    np.cos(P, out=Z[:, 0::2])
    np.sin(P, out=Z[:, 1::2])
    Z *= 1.0 / np.sqrt(D)
    return FeatureMappedData(Z, W.kind, W.seed)
