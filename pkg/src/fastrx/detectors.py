"""Global RX anomaly detectors: linear RX, kernel RX and its scalable
approximations.

Every detector follows the same two-step life cycle::

    det = rrx_fit(X, D=200, params=RbfKernelParams(2.0), seed=0)
    field = det.score(X)            # or rrx_score(det, X)

``fit`` freezes a background model; ``score`` evaluates squared Mahalanobis
distances (in input space, kernel feature space or an explicit random
feature space) for blocks of test pixels.

========  ==========================================  ======================
variant   background model                            score of a test pixel
========  ==========================================  ======================
RX        Cholesky of the band covariance             x^T Sigma^-1 x
KRX       complex LU of Kc + i sqrt(ridge) I      kc^T (Kc Kc)^-1 kc
SRX       KRX on ``r`` sampled pixels                 as KRX
RRX/ORX   Cholesky of Zc^T Zc + ridge                 zc^T (Zc^T Zc)^-1 zc
NRX       pseudoinverse of Rc Rc^T (``r x r``)        kc^T (Rc Rc^T)^+ kc
========  ==========================================  ======================
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvalidData, ShapeMismatch, TooLarge
from .features import FrequencyMatrix, feature_map, sample_frequencies
from .kernels import (
    KernelCenteringStats,
    RbfKernelParams,
    center_kernel_test,
    center_kernel_train,
    median_heuristic_sigma,
)
from .linalg import (
    CenteringStats,
    DataMatrix,
    GramSolver,
    PinvFactor,
    ShiftedSolver,
    SpdSolver,
    as_matrix,
    center_columns,
    covariance,
    pseudo_inverse,
    spd_solve_prepare,
)

__all__ = [
    "VARIANTS",
    "ScoreField",
    "FittedDetector",
    "RXDetector",
    "KernelRXDetector",
    "FeatureRXDetector",
    "NystromRXDetector",
    "DetectorConfig",
    "rx_fit",
    "rx_score",
    "krx_fit",
    "krx_score",
    "srx_fit",
    "srx_score",
    "rrx_fit",
    "rrx_score",
    "orx_fit",
    "orx_score",
    "nrx_fit",
    "nrx_score",
    "lrx_score",
    "nrx_score_unsimplified",
    "fit_detector",
    "subsample_indices",
]

VARIANTS = ("rx", "krx", "srx", "rrx", "orx", "nrx")
DEFAULT_BLOCK = 2048
DEFAULT_MAX_N = 10_000


@dataclass(frozen=True)
class ScoreField:
    """Per-pixel anomaly scores; ``shape`` is set when the test pixels form an image."""

    scores: np.ndarray
    shape: tuple[int, int] | None = None

    def image(self) -> np.ndarray:
        if self.shape is None:
            raise ShapeMismatch("score field has no spatial shape")
        return self.scores.reshape(self.shape)

    def __len__(self) -> int:
        return self.scores.shape[0]


def _test_matrix(X_test, dim: int) -> tuple[np.ndarray, tuple[int, int] | None]:
    shape = X_test.shape if isinstance(X_test, DataMatrix) else None
    A = as_matrix(X_test, "X_test")
    if A.shape[1] != dim:
        raise ShapeMismatch(f"test pixels have {A.shape[1]} bands, detector expects {dim}")
    return A, shape


def _blockwise(A: np.ndarray, fn: Callable[[np.ndarray], np.ndarray], block: int) -> np.ndarray:
    block = max(int(block), 1)
    out = np.empty(A.shape[0])
    for start in range(0, A.shape[0], block):
        out[start:start + block] = fn(A[start:start + block])
    # quadratic forms in PSD matrices; negatives are roundoff
    np.maximum(out, 0.0, out=out)
    return out


def subsample_indices(n: int, r: int, seed: int) -> np.ndarray:
    """``r`` distinct indices out of ``n``, sorted so that ``r == n`` is the identity."""
    if not 1 <= r <= n:
        raise InvalidData(f"subsample size r={r} must be in [1, {n}]")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=r, replace=False))


class FittedDetector:
    """Frozen background model.  Subclasses implement :meth:`_score_block`."""

    variant: str = ""

    def __init__(self, dim: int):
        self.dim = dim

    def _score_block(self, A: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score(self, X_test, block_size: int = DEFAULT_BLOCK) -> ScoreField:
        A, shape = _test_matrix(X_test, self.dim)
        return ScoreField(_blockwise(A, self._score_block, block_size), shape)


class RXDetector(FittedDetector):
    variant = "RX"

    def __init__(self, stats: CenteringStats, solver: SpdSolver):
        super().__init__(stats.column_means.shape[0])
        self.centering = stats
        self.solver = solver

    def _score_block(self, A):
        return self.solver.quad(A - self.centering.column_means)


class KernelRXDetector(FittedDetector):
    """Exact kernel RX on ``X_train`` (the whole image for KRX, a subsample for SRX)."""

    variant = "KRX"

    def __init__(self, X_train, kernel, stats: KernelCenteringStats | None, inverse,
                 indices: np.ndarray | None = None):
        super().__init__(X_train.shape[1])
        self.X_train = X_train
        self.kernel = kernel
        self.centering = stats
        self.inverse = inverse  # ShiftedSolver or PinvFactor
        self.indices = indices

    def _score_block(self, A):
        k = self.kernel.gram(A, self.X_train)
        if self.centering is not None:
            k = center_kernel_test(k, self.centering)
        return self.inverse.quad(k)


class FeatureRXDetector(FittedDetector):
    """Linear RX on explicit random features (RRX with Gaussian, ORX with orthogonal frequencies)."""

    def __init__(self, frequencies: FrequencyMatrix, feature_means: np.ndarray, solver):
        super().__init__(frequencies.dim)
        self.frequencies = frequencies
        self.feature_means = feature_means
        self.solver = solver
        self.variant = "ORX" if frequencies.kind == "orf" else "RRX"

    def _score_block(self, A):
        Z = feature_map(A, self.frequencies).Z
        Z -= self.feature_means
        return self.solver.quad(Z)


class NystromRXDetector(FittedDetector):
    """Low-rank kernel RX from ``r`` landmark pixels.

    ``R`` holds the (centered) landmark-by-pixel kernel; it is kept only for
    :func:`nrx_score_unsimplified`.
    """

    variant = "NRX"

    def __init__(self, landmarks, kernel, landmark_means: np.ndarray | None, pinv: PinvFactor,
                 indices: np.ndarray, R: np.ndarray):
        super().__init__(landmarks.shape[1])
        self.landmarks = landmarks
        self.kernel = kernel
        self.landmark_means = landmark_means
        self.pinv = pinv
        self.indices = indices
        self.R = R

    def landmark_kernel(self, A: np.ndarray) -> np.ndarray:
        """Centered similarities of test rows to the landmarks (``b x r``)."""
        k = self.kernel.gram(A, self.landmarks)
        if self.landmark_means is not None:
            k -= self.landmark_means
            k -= k.mean(axis=1, keepdims=True)
        return k

    def _score_block(self, A):
        return self.pinv.quad(self.landmark_kernel(A))


# --------------------------------------------------------------------- RX


def rx_fit(X, ridge: float | None = None) -> RXDetector:
    """Linear RX: squared Mahalanobis distance to the background mean.

    The covariance is ``(1/n) Xc^T Xc``; ``ridge=None`` loads the diagonal
    with ``1e-8 * trace / d``.
    """
    A = as_matrix(X)
    n, d = A.shape
    if n <= d:
        warnings.warn(f"RX fit with n={n} pixels <= d={d} bands; covariance is singular",
                      RuntimeWarning, stacklevel=2)
    Xc, stats = center_columns(A)
    return RXDetector(stats, spd_solve_prepare(covariance(Xc), ridge))


def rx_score(det: RXDetector, X_test, block_size: int = DEFAULT_BLOCK) -> ScoreField:
    return det.score(X_test, block_size)


# -------------------------------------------------------------- kernel RX


def _resolve_kernel(X: np.ndarray, params, seed: int = 0):
    if params is None:
        return median_heuristic_sigma(X, seed=seed)
    if isinstance(params, (int, float)):
        return RbfKernelParams(float(params))
    return params


def krx_fit(X, params=None, ridge: float | None = None, *, inverse: str = "solve",
            pinv_tol: float | None = None, center: bool = True,
            max_n: int | None = DEFAULT_MAX_N) -> KernelRXDetector:
    """Kernel RX with the full ``n x n`` kernel matrix.

    Parameters
    ----------
    X : array-like, (n, d)
        Background pixels.
    params : RbfKernelParams, LinearKernel, float or None
        Kernel; a float is an RBF bandwidth, ``None`` uses the median heuristic.
    ridge : float, optional
        Diagonal loading of ``Kc Kc``; default ``1e-8 * trace / n``.
    inverse : {"solve", "pinv"}
        Ridge-regularized solve of ``(Kc Kc + ridge I)`` through one
        factorization of ``Kc``, or a spectral pseudoinverse of
        ``Kc Kc`` (``ridge`` is then ignored).
    center : bool
        Center the kernel in feature space.
    max_n : int or None
        Refuse to build kernels larger than this; ``None`` disables the cap.
    """
    A = as_matrix(X)
    n = A.shape[0]
    if max_n is not None and n > max_n:
        raise TooLarge(f"KRX needs an {n}x{n} kernel matrix, above the cap of {max_n}; "
                       "raise max_n to override")
    kernel = _resolve_kernel(A, params)
    K = kernel.gram(A, A)
    stats = None
    if center:
        K, stats = center_kernel_train(K)
    if inverse == "solve":
        if ridge is None:
            # 1e-8 * trace(Kc Kc) / n without forming the product
            ridge = 1e-8 * float(np.einsum("ij,ij->", K, K)) / n
        inv = ShiftedSolver(K, ridge)
    elif inverse == "pinv":
        KK = K @ K
        inv = pseudo_inverse(0.5 * (KK + KK.T), pinv_tol)
    else:
        raise InvalidData(f"inverse must be 'solve' or 'pinv', got {inverse!r}")
    return KernelRXDetector(A, kernel, stats, inv)


def krx_score(det: KernelRXDetector, X_test, block_size: int = DEFAULT_BLOCK) -> ScoreField:
    return det.score(X_test, block_size)


def srx_fit(X, r: int, seed: int = 0, params=None, ridge: float | None = None,
            **kwargs) -> KernelRXDetector:
    """Kernel RX on ``r`` pixels drawn uniformly without replacement."""
    A = as_matrix(X)
    idx = subsample_indices(A.shape[0], int(r), seed)
    kernel = _resolve_kernel(A, params, seed)
    det = krx_fit(A[idx], kernel, ridge, **kwargs)
    det.variant = "SRX"
    det.indices = idx
    return det


srx_score = krx_score


# --------------------------------------------------------- random features


def _feature_fit(kind, X, D, params, seed, ridge, frequencies):
    A = as_matrix(X)
    if frequencies is None:
        if int(D) < 1:
            raise InvalidData(f"number of frequencies D must be >= 1, got {D}")
        kernel = _resolve_kernel(A, params, seed)
        if not isinstance(kernel, RbfKernelParams):
            raise InvalidData("random Fourier features require an RBF kernel")
        frequencies = sample_frequencies(kind, A.shape[1], int(D), kernel.sigma, seed)
    Z = feature_map(A, frequencies).Z
    means = Z.mean(axis=0)
    Z -= means
    m = Z.shape[1]
    if m > Z.shape[0]:
        # more features than pixels: never form the m x m Gram matrix
        if ridge is None:
            ridge = 1e-8 * float(np.einsum("ij,ij->", Z, Z)) / m
        return FeatureRXDetector(frequencies, means, GramSolver(Z, ridge))
    ZtZ = Z.T @ Z
    del Z
    return FeatureRXDetector(frequencies, means, spd_solve_prepare(0.5 * (ZtZ + ZtZ.T), ridge))


def rrx_fit(X, D: int, params=None, seed: int = 0, ridge: float | None = None, *,
            frequencies: FrequencyMatrix | None = None) -> FeatureRXDetector:
    """Linear RX on ``2D`` random Fourier features.

    ``frequencies`` overrides sampling (``D``, ``params`` and ``seed`` are
    then unused).
    """
    return _feature_fit("rff", X, D, params, seed, ridge, frequencies)


def orx_fit(X, D: int, params=None, seed: int = 0, ridge: float | None = None, *,
            frequencies: FrequencyMatrix | None = None) -> FeatureRXDetector:
    """Linear RX on ``2D`` orthogonal random features."""
    return _feature_fit("orf", X, D, params, seed, ridge, frequencies)


rrx_score = orx_score = krx_score


# ---------------------------------------------------------------- Nystrom


def nrx_fit(X, r: int, seed: int = 0, params=None, pinv_tol: float | None = None, *,
            center: bool = True, indices=None) -> NystromRXDetector:
    """Nystrom low-rank kernel RX with ``r`` landmarks.

    With ``Rc`` the centered ``r x n`` landmark-by-pixel kernel, the score
    of ``x`` is ``kc(x)^T (Rc Rc^T)^+ kc(x)``.  Pixel columns are centered by
    the training feature mean and landmark rows by the landmark mean, so
    that ``r == n`` reproduces kernel RX with a pseudoinverse exactly.

    ``indices`` fixes the landmark rows instead of sampling them.
    """
    A = as_matrix(X)
    n = A.shape[0]
    if indices is None:
        idx = subsample_indices(n, int(r), seed)
    else:
        idx = np.asarray(indices, dtype=np.intp)
        if idx.ndim != 1 or idx.size < 1 or idx.min() < 0 or idx.max() >= n:
            raise InvalidData("landmark indices out of range")
    kernel = _resolve_kernel(A, params, seed)
    landmarks = A[idx]
    R = kernel.gram(landmarks, A)
    means = None
    if center:
        means = R.mean(axis=1)
        R -= means[:, None]
        R -= R.mean(axis=0)[None, :]
    RRt = R @ R.T
    pinv = pseudo_inverse(0.5 * (RRt + RRt.T), pinv_tol)
    return NystromRXDetector(landmarks, kernel, means, pinv, idx, R)


nrx_score = lrx_score = krx_score


def nrx_score_unsimplified(det: NystromRXDetector, X_test, ridge: float | None = None,
                           pinv_tol: float | None = None) -> ScoreField:
    """Reference evaluation of NRX before the pseudoinverse simplification.

    ``k^T Kh^-1 R (R^T M R)^+ R^T Kh^-1 k`` with ``M = Kh^-1 R R^T Kh^-1`` and
    ``Kh`` the (uncentered, ridge-loaded) landmark kernel.  Builds ``n x n``
    matrices; only meant as a test oracle.
    """
    A, shape = _test_matrix(X_test, det.dim)
    Kh = det.kernel.gram(det.landmarks, det.landmarks)
    solver = spd_solve_prepare(0.5 * (Kh + Kh.T), ridge)
    R = det.R
    KiR = solver.solve(R)                       # Kh^-1 R           (r x n)
    G = R.T @ KiR                               # R^T Kh^-1 R       (n x n)
    G = 0.5 * (G + G.T)
    RtMR = G @ G                                # R^T M R
    pinv = pseudo_inverse(0.5 * (RtMR + RtMR.T), pinv_tol)
    k = det.landmark_kernel(A)
    V = solver.solve(k.T).T @ R                 # k^T Kh^-1 R       (b x n)
    return ScoreField(np.maximum(pinv.quad(V), 0.0), shape)


# ------------------------------------------------------------- dispatch


@dataclass(frozen=True)
class DetectorConfig:
    """Everything needed to fit one detector.

    ``sigma=None`` selects the median heuristic (seeded by ``seed``);
    ``rank`` is ``D`` for RRX/ORX and ``r`` for SRX/NRX.
    """

    detector: str
    sigma: float | None = None
    rank: int | None = None
    ridge: float | None = None
    pinv_tol: float | None = None
    seed: int = 0
    max_n: int | None = DEFAULT_MAX_N
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        name = self.detector.lower()
        if name not in VARIANTS:
            raise InvalidData(f"unknown detector {self.detector!r}; choose from {VARIANTS}")
        object.__setattr__(self, "detector", name)
        if name in ("srx", "rrx", "orx", "nrx") and (self.rank is None or self.rank < 1):
            raise InvalidData(f"detector {name} needs a positive rank")

    def with_(self, **changes) -> "DetectorConfig":
        return replace(self, **changes)


def fit_detector(cfg: DetectorConfig, X) -> FittedDetector:
    A = as_matrix(X)
    name = cfg.detector
    if name == "rx":
        return rx_fit(A, cfg.ridge)
    params = RbfKernelParams(cfg.sigma) if cfg.sigma is not None else median_heuristic_sigma(
        A, seed=cfg.seed)
    if name == "krx":
        return krx_fit(A, params, cfg.ridge, max_n=cfg.max_n, **cfg.extra)
    if name == "srx":
        return srx_fit(A, cfg.rank, cfg.seed, params, cfg.ridge, max_n=cfg.max_n, **cfg.extra)
    if name == "rrx":
        return rrx_fit(A, cfg.rank, params, cfg.seed, cfg.ridge)
    if name == "orx":
        return orx_fit(A, cfg.rank, params, cfg.seed, cfg.ridge)
    return nrx_fit(A, cfg.rank, cfg.seed, params, cfg.pinv_tol, **cfg.extra)

