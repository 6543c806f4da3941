"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before
asserting, so a failing criterion is still reported with its measurement.
Run with ``pytest tests/test_acceptance.py -v``.
"""

import json
import time

import numpy as np
import pytest
from scipy.stats import rankdata, spearmanr

from fastrx.bench import loglog_slope, scaling_sweep, time_detector
from fastrx.cli import main
from fastrx.detectors import (
    DetectorConfig,
    fit_detector,
    krx_fit,
    nrx_fit,
    nrx_score_unsimplified,
    orx_fit,
    rrx_fit,
    rx_fit,
    srx_fit,
)
from fastrx.evaluation import auc_rank, auc_trapezoid, roc_curve
from fastrx.features import feature_map, sample_orf, sample_rff
from fastrx.kernels import LinearKernel, RbfKernelParams, median_heuristic_sigma
from fastrx.scenes import synth_scene

pytestmark = pytest.mark.acceptance


def relerr(a, b):
    return float(np.abs(a - b).max() / np.abs(b).max())


def record(log, name, ok, detail):
    log.append((name, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok


class TestOracleEquivalences:
    def test_1a_nrx_full_rank_is_krx_pinv(self, acceptance_log):
        worst = 0.0
        for i in range(20):
            rng = np.random.default_rng(1000 + i)
            n = int(rng.integers(100, 301))
            X = rng.standard_normal((n, 5))
            # bandwidth below the median keeps the kernel spectrum well above
            # the truncation level, where the pseudoinverse is well posed
            p = RbfKernelParams(0.3 * median_heuristic_sigma(X).sigma)
            T = np.vstack([X, rng.standard_normal((20, 5))])
            a = nrx_fit(X, 0, params=p, pinv_tol=1e-14, indices=rng.permutation(n)).score(T).scores
            b = krx_fit(X, p, inverse="pinv", pinv_tol=1e-14).score(T).scores
            worst = max(worst, relerr(a, b))
        assert record(acceptance_log, "1a NRX(r=n) == KRX-pinv", worst <= 1e-6,
                      f"max relative error {worst:.2e} over 20 instances (tol 1e-6)")

    def test_1b_unsimplified_nrx(self, acceptance_log):
        worst = 0.0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((100, 3))
            det = nrx_fit(X, 20, seed=seed, params=1.0)
            worst = max(worst, relerr(nrx_score_unsimplified(det, X).scores, det.score(X).scores))
        assert record(acceptance_log, "1b unsimplified NRX == compact NRX", worst <= 1e-5,
                      f"max relative error {worst:.2e} (tol 1e-5)")

    def test_1c_srx_full_sample(self, acceptance_log):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((250, 4))
        a = srx_fit(X, 250, seed=3, params=1.5).score(X).scores
        b = krx_fit(X, 1.5).score(X).scores
        err = relerr(a, b)
        assert record(acceptance_log, "1c SRX(r=n) == KRX", err <= 1e-8,
                      f"max relative error {err:.2e} (tol 1e-8)")

    def test_1d_linear_kernel_is_rx(self, acceptance_log):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((150, 6)) @ rng.standard_normal((6, 6))
        T = np.vstack([X, 3 * rng.standard_normal((30, 6))])
        k = krx_fit(X, LinearKernel(), inverse="pinv").score(T).scores
        r = rx_fit(X, ridge=0.0).score(T).scores
        same_ranks = np.array_equal(rankdata(k), rankdata(r))
        ratio = r / k
        spread = float(ratio.std() / ratio.mean())
        ok = same_ranks and spread < 1e-8
        assert record(acceptance_log, "1d linear-kernel KRX == RX up to scale", ok,
                      f"identical ranks {same_ranks}, scale {ratio.mean():.6g} (rel. spread {spread:.1e})")


class TestConvergence:
    def test_2_approximations_converge_to_krx(self, acceptance_log):
        t0 = time.perf_counter()
        scene = synth_scene(15, 20, 20, 0.01, 4.0, "none", seed=0)
        X = scene.image.values
        p = median_heuristic_sigma(X)
        ref = krx_fit(X, p).score(X).scores
        rho = {}
        for name, fit in (("RRX", rrx_fit), ("ORX", orx_fit)):
            rho[name] = [spearmanr(fit(X, D, p, seed=0).score(X).scores, ref)[0]
                         for D in (64, 256, 1024, 4096)]
        feat_ok = all(r[-1] > 0.99 and np.all(np.diff(r) > 0) for r in rho.values())

        scene = synth_scene(20, 25, 20, 0.01, 4.0, "none", seed=0)
        X = scene.image.values
        p = median_heuristic_sigma(X)
        ref = krx_fit(X, p, inverse="pinv").score(X).scores
        ranks = (25, 50, 100, 250, 500)
        med = []
        for r in ranks:
            errs = [np.mean(np.abs(nrx_fit(X, r, seed=s, params=p).score(X).scores - ref)
                            / np.abs(ref)) for s in range(20)]
            med.append(float(np.median(errs)))
        nrx_ok = all(b <= a for a, b in zip(med, med[1:]))
        elapsed = time.perf_counter() - t0
        ok = feat_ok and nrx_ok and elapsed < 120
        detail = (f"rho@4096 RRX {rho['RRX'][-1]:.4f} ORX {rho['ORX'][-1]:.4f}; "
                  f"NRX median rel. error {', '.join(f'{m:.3f}' for m in med)}; "
                  f"{elapsed:.0f}s")
        assert record(acceptance_log, "2 approximations converge to KRX", ok, detail)


def test_3_orf_beats_rff(acceptance_log):
    parts, ok = [], True
    for d in (4, 16):
        rng = np.random.default_rng(d)
        X = rng.standard_normal((200, d))
        Y = X + rng.standard_normal((200, d))
        sigma = np.sqrt(d)
        exact = np.exp(-((X - Y) ** 2).sum(axis=1) / (2 * sigma**2))
        mse = {}
        for name, sampler in (("rff", sample_rff), ("orf", sample_orf)):
            errs = []
            for seed in range(100):
                W = sampler(d, d, sigma, seed)
                approx = (feature_map(X, W).Z * feature_map(Y, W).Z).sum(axis=1)
                errs.append(np.mean((approx - exact) ** 2))
            mse[name] = float(np.mean(errs))
        ok &= mse["orf"] <= mse["rff"]
        parts.append(f"d={d}: ORF {mse['orf']:.4f} vs RFF {mse['rff']:.4f}")
    assert record(acceptance_log, "3 ORF error <= RFF error", ok, "; ".join(parts))


@pytest.mark.slow
def test_4_complexity(acceptance_log):
    t0 = time.perf_counter()
    ns = [1000, 2000, 4000, 8000]
    slopes = {}
    for name in ("rrx", "orx", "nrx", "krx"):
        recs = scaling_sweep(DetectorConfig(name, sigma=5.0, rank=200), ns, d=20, repeats=1)
        slopes[name] = loglog_slope(ns, [r.score_s for r in recs])
    X = synth_scene(3000, 1, 20, 0.01, nonlinearity="none", seed=0).image.values
    totals = {name: time_detector(DetectorConfig(name, sigma=5.0, rank=200), X,
                                  repeats=3).total_s
              for name in ("rx", "krx", "srx", "rrx", "orx", "nrx")}
    fastest = min(totals, key=totals.get)
    elapsed = time.perf_counter() - t0
    ok = (all(slopes[k] <= 1.4 for k in ("rrx", "orx", "nrx")) and slopes["krx"] >= 1.8
          and fastest == "rx" and all(v > totals["rx"] for k, v in totals.items() if k != "rx")
          and elapsed < 600)
    detail = (", ".join(f"{k.upper()} {v:.2f}" for k, v in slopes.items())
              + f"; fastest at n=3000: {fastest.upper()} ({totals['rx'] * 1e3:.1f} ms); "
              + f"{elapsed:.0f}s")
    assert record(acceptance_log, "4 scaling exponents and RX fastest", ok, detail)


@pytest.mark.slow
def test_5_mixture_scene_ordering(acceptance_log):
    aucs = {k: [] for k in ("rx", "rrx", "nrx")}
    oracle = []
    for seed in range(20):
        scene = synth_scene(100, 100, 20, 0.01, 4.0, "mixture", seed=seed)
        X = scene.image
        for name in aucs:
            det = fit_detector(DetectorConfig(name, rank=50, seed=seed), X)
            aucs[name].append(auc_rank(det.score(X), scene.truth))
        if seed < 3:
            # exact kernel model on a 3000-pixel background sample
            det = srx_fit(X.values, 3000, seed=seed, params=median_heuristic_sigma(X.values))
            oracle.append(auc_rank(det.score(X), scene.truth))
    med = {k: float(np.median(v)) for k, v in aucs.items()}
    ok = med["nrx"] >= med["rrx"] > med["rx"] and med["nrx"] - med["rx"] >= 0.05
    ok &= min(oracle) - med["rx"] >= 0.05
    detail = (f"median AUC RX {med['rx']:.3f}, RRX {med['rrx']:.3f}, NRX {med['nrx']:.3f}; "
              f"KRX oracle {', '.join(f'{a:.3f}' for a in oracle)}")
    assert record(acceptance_log, "5 mixture scene NRX >= RRX > RX", ok, detail)


def test_6_cli_replay_is_bit_exact(acceptance_log, tmp_path):
    scene_dir = tmp_path / "scene"
    assert main(["synth", "--height", "20", "--width", "25", "--bands", "10", "--seed", "4",
                 "--out", str(scene_dir)]) == 0
    mismatched = []
    for name in ("rx", "krx", "srx", "rrx", "orx", "nrx"):
        first = tmp_path / f"{name}_a"
        argv = ["detect", str(scene_dir / "scene.bsq"), "--mask",
                str(scene_dir / "scene_mask.pgm"), "--detector", name, "--seed", "9",
                "--out", str(first)]
        if name != "rx" and name != "krx":
            argv += ["--rank", "40"]
        assert main(argv) == 0
        second = tmp_path / f"{name}_b"
        assert main(["replay", str(first / "run.json"), "--out", str(second)]) == 0
        rec = json.loads((first / "run.json").read_text())
        for out in rec["outputs"]:
            if (first / out).read_bytes() != (second / out).read_bytes():
                mismatched.append(f"{name}/{out}")
    ok = not mismatched
    assert record(acceptance_log, "6 CLI replay bit-exact", ok,
                  "all score and map files identical" if ok else f"differ: {mismatched}")


def test_7_auc_correctness(acceptance_log):
    worst, invariant = 0.0, True
    rng = np.random.default_rng(77)
    for _ in range(100):
        n = int(rng.integers(2, 10_001))
        s = np.round(rng.random(n) * 10, int(rng.integers(0, 4)))
        t = np.zeros(n, dtype=int)
        t[rng.choice(n, int(rng.integers(1, n)), replace=False)] = 1
        fpr, tpr, _ = roc_curve(s, t)
        base = auc_rank(s, t)
        worst = max(worst, abs(auc_trapezoid(fpr, tpr) - base))
        invariant &= auc_rank(2 * s + 1, t) == base and auc_rank(s**3, t) == base
    ok = worst <= 1e-12 and invariant
    assert record(acceptance_log, "7 AUC rank == trapezoid, transform invariant", ok,
                  f"max |difference| {worst:.1e} over 100 instances; invariance {invariant}")
