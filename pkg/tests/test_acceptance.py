"""Acceptance criteria, one test each.

Every test records a one-line verdict; the lines are printed at the end of
the pytest run (see ``conftest.py``) and when this file is run directly with
``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from drcov.applications import RobustEstimator, SampleEstimator, rolling_backtest
from drcov.calibration import CrossValidate, default_radius_grid
from drcov.cli import run
from drcov.datasets import read_labeled_csv
from drcov.divergences import (
    ALL_KINDS,
    cross_deriv_numeric,
    epsilon_max,
    gen_curv,
    gen_deriv,
    gen_value,
    matrix_divergence,
)
from drcov.experiments import classification, consistency, radius_sweep, synthetic_risk
from drcov.shrinkage import big_f, eigenvalue_map, eigenvalue_map_numeric, estimate, gamma_upper_bound
from drcov.spectral import condition_number, eigendecompose
from drcov.synthetic import gaussian_samples, make_rng, spectral_factor, spiked_covariance

from conftest import FIXTURES, ROOT, random_orthogonal

KINDS = [s.name for s in ALL_KINDS]
DRO_KINDS = ("kl", "wasserstein", "fisher-rao")
RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[n]


# --------------------------------------------------------------------------- 1


def test_c01_closed_form_maps_match_bisection():
    gammas = np.geomspace(1e-3, 1e3, 20)
    bs = np.geomspace(1e-2, 1e2, 20)
    g, b = np.meshgrid(gammas, bs, indexing="ij")
    t0 = time.perf_counter()
    worst = 0.0
    for kind in KINDS:
        closed = np.asarray(eigenvalue_map(kind, g, b))
        numeric = np.asarray(eigenvalue_map_numeric(kind, g, b))
        worst = max(worst, float(np.max(np.abs(closed - numeric) / np.maximum(1.0, b))))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-9 and elapsed < 1.0, f"max |closed - bisection| / max(1, b) = {worst:.2e}, {elapsed:.2f} s")


# --------------------------------------------------------------------- 2, 3, 6


def _instances():
    """100 random nominals per divergence with a random valid radius, solved once."""
    rng = np.random.default_rng(20240601)
    out = []
    t0 = time.perf_counter()
    for spec in ALL_KINDS:
        for i in range(100):
            p = int(rng.integers(1, 31))
            e = np.exp(rng.uniform(-3.0, 3.0, p))
            if not spec.requires_pd_nominal and i % 4 == 0 and p > 1:
                e[rng.integers(p)] = 0.0
            q = random_orthogonal(rng, p)
            nominal = (q * e) @ q.T
            nominal = 0.5 * (nominal + nominal.T)
            d = eigendecompose(nominal)
            cap = epsilon_max(spec, d.eigenvalues)
            if math.isfinite(cap):
                eps = float(cap * rng.uniform(1e-4, 0.999))
            else:
                eps = float(np.exp(rng.uniform(math.log(1e-4), math.log(10.0 * p))))
            out.append((spec, nominal, d, eps, estimate(nominal, spec, eps, decomposition=d)))
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def solved():
    return _instances()


def test_c02_root_residual_and_radius_attained(solved):
    instances, elapsed = solved
    worst_f = worst_d = 0.0
    for spec, nominal, d, eps, sol in instances:
        f = big_f(spec, sol.gamma_star, d.eigenvalues, eps)
        achieved = matrix_divergence(spec, sol.estimator, nominal)
        worst_f = max(worst_f, abs(f) / max(1.0, eps))
        worst_d = max(worst_d, abs(achieved - eps) / max(1.0, eps))
    ok = worst_f <= 1e-8 and worst_d <= 1e-6 and elapsed < 30.0
    report(2, ok, f"{len(instances)} instances, max |F|/max(1,eps) = {worst_f:.1e}, max |D - eps|/max(1,eps) = {worst_d:.1e}, {elapsed:.1f} s")


def test_c03_structural_invariants(solved):
    instances, _ = solved
    failures = []
    singular = 0
    for spec, nominal, d, eps, sol in instances:
        x, xhat = sol.shrunk_eigenvalues, d.eigenvalues
        pos = xhat > 0
        singular += int(not pos.all())
        if not (np.all(x[pos] > 0) and np.all(x[pos] < xhat[pos]) and np.all(x[~pos] == 0)):
            failures.append((spec.name, "ordering"))
        X = sol.estimator
        comm = np.linalg.norm(X @ nominal - nominal @ X)
        if comm > 1e-8 * np.linalg.norm(nominal) * np.linalg.norm(X):
            failures.append((spec.name, "commutation"))
        if condition_number(sol.decomposition) > condition_number(d) * (1 + 1e-10):
            failures.append((spec.name, "condition number"))
    report(3, not failures, f"{len(instances)} instances ({singular} singular nominals), failures: {failures[:3] or 'none'}")


def test_c06_gamma_bounds(solved):
    instances, _ = solved
    checked = violations = 0
    for spec, _, d, eps, sol in instances:
        bound = gamma_upper_bound(spec, d.eigenvalues, eps)
        if bound is None:
            continue
        checked += 1
        violations += int(not sol.gamma_star <= bound)
    report(6, checked == 300 and violations == 0, f"{checked} KL/W/FR instances, {violations} above the closed-form bound")


# --------------------------------------------------------------------------- 4


def test_c04_monotone_paths():
    res = radius_sweep([1.0, 2.0, 3.0], DRO_KINDS, num=50)
    ok = True
    notes = []
    for kind in DRO_KINDS:
        rows = res.select(kind=kind)
        eps = sorted({r["epsilon"] for r in rows})
        paths = np.array([[r["shrunk_eigenvalue"] for r in rows if r["index"] == i] for i in (1, 2, 3)])
        ok &= len(eps) == 50 and bool(np.all(np.diff(paths, axis=1) <= 1e-12))
        if kind == "wasserstein":
            ok &= eps[-1] == pytest.approx(6 * (1 - 1e-6), rel=1e-12) and bool(np.all(paths[:, -1] < 1e-3))
            notes.append(f"W at eps_bar(1-1e-6): max {paths[:, -1].max():.1e}")
        else:
            ok &= bool(np.all(paths > 0))
            notes.append(f"{kind} min {paths.min():.3f}")
    report(4, ok, "; ".join(notes))


# --------------------------------------------------------------------------- 5


def _divergence_2x2(kind, sig, nom):
    """Matrix divergence D(Sigma, nominal) for a grid of 2 x 2 Sigma, from trace/determinant formulas.

    ``sig`` holds the entries (a, b, c) of [[a, b], [b, c]] as broadcastable arrays.
    """
    a, b, c = sig
    na, nb, nc = nom[0, 0], nom[0, 1], nom[1, 1]
    det = a * c - b * b
    ndet = na * nc - nb * nb
    with np.errstate(invalid="ignore", divide="ignore"):
        tr_ninv_s = (nc * a - 2 * nb * b + na * c) / ndet
        tr_sinv_n = (c * na - 2 * b * nb + a * nc) / det
        if kind == "kl":
            return 0.5 * (tr_ninv_s - 2 + np.log(ndet) - np.log(det))
        if kind == "inverse-stein":
            return 0.5 * (tr_sinv_n - 2 + np.log(det) - np.log(ndet))
        if kind == "symmetrized-stein":
            return 0.5 * (tr_ninv_s + tr_sinv_n) - 2
        if kind == "quadratic":
            return (a - na) ** 2 + 2 * (b - nb) ** 2 + (c - nc) ** 2
        if kind == "weighted-quadratic":
            da, db, dc = a - na, b - nb, c - nc
            # (S - N)^2 then times N^{-1}
            sa, sb, sc = da * da + db * db, db * (da + dc), db * db + dc * dc
            return (nc * sa - 2 * nb * sb + na * sc) / ndet
        if kind == "wasserstein":
            # tr sqrt(N^{1/2} S N^{1/2}) = sqrt(tr(NS) + 2 sqrt(det N det S)) for 2 x 2 PSD matrices
            tr_ns = na * a + 2 * nb * b + nc * c
            return a + c + na + nc - 2 * np.sqrt(tr_ns + 2 * np.sqrt(np.maximum(ndet * det, 0.0)))
        if kind == "fisher-rao":
            # eigenvalues of N^{-1} S from its trace and determinant
            t, dd = tr_ninv_s, det / ndet
            root = np.sqrt(np.maximum(t * t - 4 * dd, 0.0))
            l1, l2 = 0.5 * (t + root), 0.5 * (t - root)
            return np.log(l1) ** 2 + np.log(l2) ** 2
    raise ValueError(kind)


def test_c05_dual_matches_brute_force_grid():
    t0 = time.perf_counter()
    phi = math.radians(30.0)
    c, s = math.cos(phi), math.sin(phi)
    R = np.array([[c, -s], [s, c]])
    nominal = R @ np.diag([1.0, 3.0]) @ R.T
    thetas = np.radians(np.arange(0.0, 90.0, 1.0))
    d_theta = thetas[1] - thetas[0]
    levels = np.arange(0.02, 3.0001, 0.02)
    d_e = levels[1] - levels[0]
    T, E1, E2 = np.meshgrid(thetas, levels, levels, indexing="ij")
    ct, st = np.cos(T), np.sin(T)
    # R(theta) diag(e1, e2) R(theta)^T
    sig = (E1 * ct * ct + E2 * st * st, (E1 - E2) * ct * st, E1 * st * st + E2 * ct * ct)
    norm2 = E1 * E1 + E2 * E2
    eps = 0.05
    worst = []
    for kind in KINDS:
        feasible = _divergence_2x2(kind, sig, nominal) <= eps
        obj = np.where(feasible, norm2, np.inf)
        i, j, k = np.unravel_index(int(np.argmin(obj)), obj.shape)
        sol = estimate(nominal, kind, eps)
        # X* keeps the nominal eigenvectors: angle phi, with the shrunk values on the 1 and 3 axes
        x1, x2 = sol.shrunk_eigenvalues
        cells = (abs(thetas[i] - phi) / d_theta, abs(levels[j] - x1) / d_e, abs(levels[k] - x2) / d_e)
        worst.append((kind, max(cells)))
    elapsed = time.perf_counter() - t0
    far = max(w for _, w in worst)
    report(5, far <= 2.0 and elapsed < 120.0, f"largest offset {far:.2f} grid cells ({max(worst, key=lambda w: w[1])[0]}), {elapsed:.1f} s")


# --------------------------------------------------------------------------- 7


def test_c07_consistency_slopes():
    t0 = time.perf_counter()
    sizes = [64 * 2**i for i in range(7)]
    res = consistency(p=10, sizes=sizes, c=5.0, populations=("identity", "banded"), trials=10, seed=0, kinds=KINDS)
    elapsed = time.perf_counter() - t0
    bad = []
    worst_r2, worst_slope = 1.0, -math.inf
    for pop in ("identity", "banded"):
        for kind in KINDS:
            slope = res.select("summary", population=pop, estimator=kind, statistic="loglog_slope")[0]["value"]
            r2 = res.select("summary", population=pop, estimator=kind, statistic="loglog_r2")[0]["value"]
            worst_r2, worst_slope = min(worst_r2, r2), max(worst_slope, slope)
            if not (slope < 0 and r2 >= 0.9):
                bad.append((pop, kind, round(slope, 3), round(r2, 3)))
    ok = not bad and elapsed < 300.0
    report(7, ok, f"14 curves, max slope {worst_slope:.3f}, min R^2 {worst_r2:.3f}, {elapsed:.1f} s, failures: {bad or 'none'}")


# --------------------------------------------------------------------------- 8


def test_c08_synthetic_risk_u_shape():
    t0 = time.perf_counter()
    res = synthetic_risk(p=50, spikes=5, magnitudes=[10.0, 100.0], sizes=[50, 100], trials=10, seed=0, kinds=DRO_KINDS)
    elapsed = time.perf_counter() - t0
    u_counts = {}
    beat = {}
    for M in (10.0, 100.0):
        for n in (50, 100):
            for kind in DRO_KINDS:
                hits = 0
                for seed in range(10):
                    rows = res.select(seed=seed, M=M, n=n, estimator=kind, metric="frobenius_loss")
                    losses = [r["value"] for r in sorted(rows, key=lambda r: r["hyperparameter_value"])]
                    hits += int(min(losses[1:-1]) < min(losses[0], losses[-1]))
                u_counts[(M, n, kind)] = hits
            if M == 100.0:
                wins = 0
                for seed in range(10):
                    best_dro = min(r["value"] for k in DRO_KINDS for r in res.select(seed=seed, M=M, n=n, estimator=k, metric="frobenius_loss"))
                    best_lin = min(r["value"] for r in res.select(seed=seed, M=M, n=n, estimator="linear", metric="frobenius_loss"))
                    wins += int(best_dro <= best_lin)
                beat[n] = wins
    ok = min(u_counts.values()) >= 8 and min(beat.values()) >= 6 and elapsed < 300.0
    report(8, ok, f"U-shape in >= {min(u_counts.values())}/10 seeds for every (M, n, kind); DRO <= linear at M=100 in {beat} seeds; {elapsed:.1f} s")


# --------------------------------------------------------------------------- 9


def test_c09_derivatives_and_assumptions():
    grid = np.geomspace(0.01, 100.0, 15)
    worst_fd = 0.0
    convex_ok = ineq_ok = True
    for kind in KINDS:
        for b in grid:
            for a in grid:
                h = 1e-5 * a
                fd1 = (gen_value(kind, a + h, b) - gen_value(kind, a - h, b)) / (2 * h)
                fd2 = (gen_deriv(kind, a + h, b) - gen_deriv(kind, a - h, b)) / (2 * h)
                d1, d2 = gen_deriv(kind, a, b), gen_curv(kind, a, b)
                # errors relative to each quantity's natural size, which stays positive where d1 = 0
                worst_fd = max(worst_fd, abs(fd1 - d1) / max(abs(d1), abs(d2) * a), abs(fd2 - d2) / max(abs(d2), abs(d1) / a))
            left = b * np.linspace(1e-3, 1.0, 100)
            convex_ok &= bool(np.all(gen_curv(kind, left, b) >= -1e-12))
            for a in b * np.linspace(0.02, 0.98, 20):
                lhs = a * gen_curv(kind, a, b) + b * cross_deriv_numeric(kind, a, b) - gen_deriv(kind, a, b)
                ineq_ok &= lhs >= -1e-9 * max(1.0, abs(gen_deriv(kind, a, b)))
    ok = worst_fd <= 1e-6 and convex_ok and ineq_ok
    report(9, ok, f"max relative finite-difference error {worst_fd:.1e}, convexity {'ok' if convex_ok else 'violated'}, differential inequality {'ok' if ineq_ok else 'violated'}")


# -------------------------------------------------------------------------- 10


def _golden_matches(tmp: Path, monkeypatch) -> tuple[bool, str]:
    monkeypatch.chdir(ROOT)
    config = FIXTURES / "configs" / "portfolio_kl.json"
    runs = []
    for name in ("a", "b"):
        assert run(["portfolio", "--config", str(config), "--out", str(tmp / name)]) == 0
        runs.append(tmp / name)
    same = True
    for fname in ("portfolio.json", "portfolio_returns.csv"):
        golden = (FIXTURES / "golden" / "portfolio_kl" / fname).read_bytes()
        same &= all((r / fname).read_bytes() == golden for r in runs)
    return same, "golden portfolio bytes reproduced twice" if same else "golden portfolio bytes differ"


def _spiked_market() -> tuple[bool, str]:
    # 48 assets on a 50-period window, as in the 48-industry backtest; 4 factors of variance 100
    p, window, holding, blocks = 48, 50, 12, 6
    truth = spiked_covariance(p, 4, 100.0)
    factor = spectral_factor(truth)
    markets = [gaussian_samples(truth, window + holding * blocks, make_rng(seed), factor) for seed in range(10)]
    base = [rolling_backtest(r, SampleEstimator(), window, holding).std_return for r in markets]
    counts = {}
    for kind in DRO_KINDS:
        schedule = lambda seed, k=kind: CrossValidate(tuple(default_radius_grid(k)), "loo", seed=seed)
        stds = [rolling_backtest(r, RobustEstimator(kind, schedule(seed)), window, holding).std_return for seed, r in enumerate(markets)]
        counts[kind] = sum(s <= b for s, b in zip(stds, base))
    return min(counts.values()) >= 7, f"robust std <= sample std in {counts} of 10 seeds"


def _classifier_fixture() -> tuple[bool, str]:
    d = read_labeled_csv(FIXTURES / "two_gaussians.csv")
    res = classification(d.x, d.y, estimators=KINDS, permutations=3, seed=0)
    worst = min(r["value"] for r in res.select(metric="accuracy"))
    return worst >= 0.95, f"lowest LDA/QDA accuracy over seven kinds {worst:.3f}"


def test_c10_applications(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    parts = [_golden_matches(tmp_path, monkeypatch), _spiked_market(), _classifier_fixture()]
    elapsed = time.perf_counter() - t0
    report(10, all(ok for ok, _ in parts), "; ".join(msg for _, msg in parts) + f"; {elapsed:.1f} s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
