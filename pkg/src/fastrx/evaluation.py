"""ROC/AUC, detection maps, threshold selection and grid search."""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .detectors import DetectorConfig, ScoreField, fit_detector
from .errors import InvalidData, RXError, ShapeMismatch

__all__ = [
    "EvalReport",
    "GridPoint",
    "GridResult",
    "check_truth",
    "roc_curve",
    "roc_auc",
    "auc_rank",
    "auc_trapezoid",
    "detection_map",
    "best_threshold",
    "evaluate",
    "grid_search",
]

log = logging.getLogger(__name__)

RANDOMIZED = frozenset({"srx", "rrx", "orx", "nrx"})


def _scores(scores) -> np.ndarray:
    s = scores.scores if isinstance(scores, ScoreField) else scores
    s = np.asarray(s, dtype=np.float64).ravel()
    if not np.all(np.isfinite(s)):
        raise InvalidData("scores contain non-finite values")
    return s


def check_truth(truth, n: int) -> np.ndarray:
    t = np.asarray(truth).ravel()
    if t.shape[0] != n:
        raise ShapeMismatch(f"mask has {t.shape[0]} pixels, scores have {n}")
    t = t != 0
    if t.all() or not t.any():
        raise InvalidData("ground truth must contain both anomalous and background pixels")
    return t


@dataclass
class EvalReport:
    """ROC points (false/true positive rates), AUC and bookkeeping for one run."""

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    params: dict = field(default_factory=dict)
    fit_seconds: float = 0.0
    score_seconds: float = 0.0

    @property
    def roc_points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores, truth) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC over all distinct thresholds (a pixel is flagged when ``score >= t``).

    Returns ``fpr``, ``tpr`` (both starting at 0 and ending at 1) and the
    thresholds, the first of which is ``+inf``.
    """
    s = _scores(scores)
    t = check_truth(truth, s.shape[0])
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    hits = t[order]
    # last index of every run of equal scores
    ends = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.shape[0] - 1]
    tp = np.cumsum(hits)[ends]
    fp = (ends + 1) - tp
    P, N = tp[-1], fp[-1]
    fpr = np.r_[0.0, fp / N]
    tpr = np.r_[0.0, tp / P]
    thresholds = np.r_[np.inf, s_sorted[ends]]
    return fpr, tpr, thresholds


def auc_trapezoid(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)


def auc_rank(scores, truth) -> float:
    """Mann-Whitney AUC with ties counted one half."""
    s = _scores(scores)
    t = check_truth(truth, s.shape[0])
    ranks = rankdata(s)
    n_pos = int(t.sum())
    n_neg = t.shape[0] - n_pos
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(scores, truth, params: dict | None = None) -> EvalReport:
    fpr, tpr, _ = roc_curve(scores, truth)
    return EvalReport(fpr, tpr, auc_rank(scores, truth), dict(params or {}))


def detection_map(scores, threshold: float) -> np.ndarray:
    """Binary map, 1 where ``score >= threshold``; shaped like the image when known."""
    s = _scores(scores)
    m = (s >= threshold).astype(np.uint8)
    if isinstance(scores, ScoreField) and scores.shape is not None:
        m = m.reshape(scores.shape)
    return m


def best_threshold(scores, truth) -> float:
    """Threshold maximizing Youden's J (TPR - FPR).

    The midpoint between the lowest flagged score and the next lower
    distinct score is returned, so the threshold sits inside the gap.
    """
    s = _scores(scores)
    fpr, tpr, thr = roc_curve(s, truth)
    k = int(np.argmax(tpr - fpr))
    k = max(k, 1)
    if k == len(thr) - 1:
        return float(thr[k])
    return float(0.5 * (thr[k] + thr[k + 1]))


def evaluate(cfg: DetectorConfig, X, truth, X_test=None) -> EvalReport:
    """Fit on ``X``, score ``X_test`` (default: ``X``), and report AUC and timings."""
    t0 = time.perf_counter()
    det = fit_detector(cfg, X)
    t1 = time.perf_counter()
    field_ = det.score(X if X_test is None else X_test)
    t2 = time.perf_counter()
    rep = roc_auc(field_, truth, params=_params(cfg))
    rep.fit_seconds, rep.score_seconds = t1 - t0, t2 - t1
    return rep


def _params(cfg: DetectorConfig) -> dict:
    return {"detector": cfg.detector, "sigma": cfg.sigma, "rank": cfg.rank,
            "ridge": cfg.ridge, "seed": cfg.seed}


@dataclass
class GridPoint:
    sigma: float | None
    rank: int | None
    auc: float
    aucs: list[float]
    error: str | None = None


@dataclass
class GridResult:
    points: list[GridPoint]
    best: GridPoint

    @property
    def best_params(self) -> dict:
        return {"sigma": self.best.sigma, "rank": self.best.rank}


def grid_search(cfg: DetectorConfig, sigma_grid, rank_grid, X, truth, seeds=(0,)) -> GridResult:
    """Evaluate every ``(sigma, rank)`` pair and return the AUC maximizer.

    AUC is averaged over ``seeds`` for randomized detectors.  A fit failure
    is recorded on its grid point and does not stop the search.  Ties go to
    the smaller rank, then the smaller sigma.

    The search is supervised by the ground truth: it reproduces a
    parameter-selection protocol, it is not a deployable tuning method.
    """
    sigma_grid = list(sigma_grid) if cfg.detector != "rx" else [None]
    rank_grid = list(rank_grid) if cfg.detector in RANDOMIZED else [cfg.rank]
    seeds = list(seeds) if cfg.detector in RANDOMIZED else list(seeds)[:1]
    if not sigma_grid or not rank_grid or not seeds:
        raise InvalidData("grid_search needs non-empty grids and seeds")

    points = []
    for sigma, rank in itertools.product(sigma_grid, rank_grid):
        aucs, err = [], None
        for seed in seeds:
            try:
                rep = evaluate(cfg.with_(sigma=sigma, rank=rank, seed=seed), X, truth)
            except RXError as exc:
                err = f"{type(exc).__name__}: {exc}"
                log.warning("grid point sigma=%s rank=%s failed: %s", sigma, rank, err)
                break
            aucs.append(rep.auc)
        mean = float(np.mean(aucs)) if err is None else float("nan")
        points.append(GridPoint(sigma, rank, mean, aucs, err))

    ok = [p for p in points if p.error is None]
    if not ok:
        raise InvalidData("every grid point failed")

    def key(p):
        return (-p.auc, p.rank if p.rank is not None else -1,
                p.sigma if p.sigma is not None else -1.0)

    return GridResult(points, min(ok, key=key))
