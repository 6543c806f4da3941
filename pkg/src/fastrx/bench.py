"""Timing, memory and scaling measurements for the detectors."""

from __future__ import annotations

import csv
import statistics
import time
import tracemalloc
from contextlib import nullcontext
from dataclasses import asdict, dataclass, fields

import numpy as np
from threadpoolctl import threadpool_limits

from .detectors import DetectorConfig, fit_detector
from .errors import InvalidData
from .evaluation import auc_rank
from .linalg import as_matrix
from .scenes import synth_scene

__all__ = [
    "TimingRecord",
    "CSV_COLUMNS",
    "time_detector",
    "peak_memory",
    "loglog_slope",
    "scaling_sweep",
    "rank_sweep",
    "write_records",
    "read_records",
    "thread_limit",
]

CSV_COLUMNS = ("detector", "n", "d", "rank", "seed", "fit_s", "score_s", "auc")


@dataclass
class TimingRecord:
    detector: str
    n: int
    d: int
    rank: int | None
    seed: int
    fit_s: float
    score_s: float
    auc: float | None = None
    repeats: int = 1
    peak_bytes: int | None = None

    @property
    def total_s(self) -> float:
        return self.fit_s + self.score_s


def thread_limit(threads: int | None):
    """Context manager capping BLAS/OpenMP threads (``None`` leaves them alone)."""
    return nullcontext() if threads is None else threadpool_limits(limits=int(threads))


def _run_once(cfg, X, X_test):
    t0 = time.perf_counter()
    det = fit_detector(cfg, X)
    t1 = time.perf_counter()
    field = det.score(X_test)
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1, field


def time_detector(cfg: DetectorConfig, X, X_test=None, repeats: int = 3, truth=None,
                  threads: int | None = 1, warmup: bool = True) -> TimingRecord:
    """Median fit and score wall-clock times over ``repeats`` runs.

    A warm-up run (excluded) precedes the timed runs.  With ``truth`` the
    AUC of the last run is recorded.
    """
    if repeats < 1:
        raise InvalidData(f"repeats must be >= 1, got {repeats}")
    A = as_matrix(X)
    T = A if X_test is None else as_matrix(X_test)
    fits, scores = [], []
    with thread_limit(threads):
        if warmup:
            _run_once(cfg, A, T)
        for _ in range(repeats):
            f, s, field = _run_once(cfg, A, T)
            fits.append(f)
            scores.append(s)
    auc = auc_rank(field, truth) if truth is not None else None
    return TimingRecord(cfg.detector, A.shape[0], A.shape[1], cfg.rank, cfg.seed,
                        statistics.median(fits), statistics.median(scores), auc, repeats)


def peak_memory(cfg: DetectorConfig, X, X_test=None) -> int:
    """Peak bytes traced by ``tracemalloc`` while fitting and scoring.

    Input arrays already allocated are not counted, so the figure is the
    footprint of the detector's own working set.
    """
    A = as_matrix(X)
    T = A if X_test is None else as_matrix(X_test)
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    try:
        det = fit_detector(cfg, A)
        det.score(T)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not was_tracing:
            tracemalloc.stop()
    return int(peak - base)


def loglog_slope(n_values, times) -> float:
    """Least-squares slope of ``log(time)`` against ``log(n)``."""
    x = np.log(np.asarray(n_values, dtype=np.float64))
    y = np.log(np.asarray(times, dtype=np.float64))
    if x.shape != y.shape or x.shape[0] < 2:
        raise InvalidData("need at least two (n, time) pairs")
    return float(np.polyfit(x, y, 1)[0])


def scaling_sweep(cfg: DetectorConfig, n_values, d: int = 20, seed: int = 0,
                  repeats: int = 1, threads: int | None = 1) -> list[TimingRecord]:
    """Time fit and score (on the fitted pixels) for each image size in ``n_values``.

    Data are Gaussian ``n x d`` scenes from :func:`synth_scene`.
    """
    n_values = [int(n) for n in n_values]
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise InvalidData("n_values must be strictly increasing")
    out = []
    for n in n_values:
        X = synth_scene(n, 1, d, anomaly_fraction=min(0.1, max(1.0 / n, 0.01)),
                        nonlinearity="none", seed=seed).image.values
        out.append(time_detector(cfg, X, repeats=repeats, threads=threads))
    return out


def rank_sweep(cfg: DetectorConfig, rank_values, X, truth, seeds=(0,), repeats: int = 1,
               threads: int | None = 1) -> list[TimingRecord]:
    """Time and AUC for every ``(rank, seed)`` pair; one record each."""
    out = []
    for rank in rank_values:
        for seed in seeds:
            out.append(time_detector(cfg.with_(rank=int(rank), seed=int(seed)), X,
                                     repeats=repeats, truth=truth, threads=threads))
    return out


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = asdict(r)
            w.writerow(["" if row[c] is None else
                        (f"{row[c]:.6g}" if isinstance(row[c], float) else row[c])
                        for c in CSV_COLUMNS])


def read_records(path) -> list[TimingRecord]:
    names = {f.name for f in fields(TimingRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {k: v for k, v in row.items() if k in names}
            out.append(TimingRecord(
                kw["detector"], int(kw["n"]), int(kw["d"]),
                int(kw["rank"]) if kw["rank"] else None, int(kw["seed"]),
                float(kw["fit_s"]), float(kw["score_s"]),
                float(kw["auc"]) if kw["auc"] else None))
    return out

