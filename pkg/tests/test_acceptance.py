"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line (run with -s to watch them stream).

The sweeps pin their own sample counts so every Monte-Carlo row clears the
10x-CI usability rule at the observed error levels; seeds are fixed.
"""

import math
import time

import numpy as np
import pytest

from lodisc.analysis import (ScalingFit, fit_power_law, rows_to_csv,
                             run_validators, SweepRow)
from lodisc.config import RunConfig
from lodisc.engine import exact_error_probability, mc_error_probability
from lodisc.fock import basis_pair, cat_pair, inner_product, FockVector, \
    make_orthogonal_pair, qubit_plus_minus_pair
from lodisc.operators import displacement_matrix, step_kraus
from lodisc.receiver import orthogonal_decomposition

CFG = RunConfig()
SEED = 20250808


def report(num: int, ok: bool, detail: str):
    print(f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {detail}")


def generic_sweep(seed: int):
    """Criterion-2 sweep: exact through N=16, tuned MC above."""
    pair = cat_pair(1.0, CFG.cutoff)
    rows = []
    for N in (8, 16, 32, 64, 128):
        if N <= CFG.n_exact_max:
            est = exact_error_probability(pair, N, CFG)
        else:
            est = mc_error_probability(pair, N, 1600 * N, seed, CFG)
        margin = est.beta_margin_min
        rows.append(SweepRow(
            N=N, p_err=est.p_err, ci_low=est.ci_low, ci_high=est.ci_high,
            p_fail=est.p_fail, mode=est.method, samples=est.samples,
            trunc_deficit=0.0,
            beta_cap_margin=0.0 if math.isinf(margin) else margin))
    fit = fit_power_law(rows, -1.0, CFG.slope_tol_generic, CFG)
    return rows, fit, rows_to_csv(rows, fit).encode()


@pytest.fixture(scope="module")
def crit2(request):
    t0 = time.time()
    rows, fit, blob = generic_sweep(SEED)
    elapsed = time.time() - t0
    return rows, fit, blob, elapsed


def test_criterion_1_exact_zero_discrimination():
    t0 = time.time()
    pair = basis_pair(CFG.cutoff)
    worst_err = worst_fail = 0.0
    for N in (2, 4, 8, 16):
        est = exact_error_probability(pair, N, CFG)
        worst_err = max(worst_err, est.p_err)
        worst_fail = max(worst_fail, est.p_fail)
    elapsed = time.time() - t0
    ok = worst_err <= 1e-10 and worst_fail <= 1e-10 and elapsed < 5.0
    report(1, ok, f"basis pair p_err<={worst_err:.2e} p_fail<={worst_fail:.2e} "
                  f"in {elapsed:.1f}s (<5s)")
    assert worst_err <= 1e-10
    assert worst_fail <= 1e-10
    assert elapsed < 5.0


def test_criterion_2_generic_inverse_scaling(crit2):
    rows, fit, _, elapsed = crit2
    lo, hi = fit.slope_ci()
    ok = (-1.3 <= fit.slope <= -0.7) and hi < 0.0 and lo > -2.0 \
        and elapsed < 600.0
    report(2, ok, f"cat-pair slope {fit.slope:.3f} (CI [{lo:.3f}, {hi:.3f}]) "
                  f"over N=8..128 in {elapsed:.0f}s (<600s)")
    assert fit.n_used == len(rows)
    assert -1.3 <= fit.slope <= -0.7
    assert hi < 0.0 and lo > -2.0  # slope CI excludes 0 and -2
    assert elapsed < 600.0


def test_criterion_3_degenerate_cube_root_scaling():
    t0 = time.time()
    pair = qubit_plus_minus_pair(CFG.cutoff)
    rows = []
    for N in (27, 125, 343, 729):
        est = mc_error_probability(pair, N, 30_000, SEED, CFG)
        rows.append(SweepRow(
            N=N, p_err=est.p_err, ci_low=est.ci_low, ci_high=est.ci_high,
            p_fail=est.p_fail, mode=est.method, samples=est.samples,
            trunc_deficit=0.0, beta_cap_margin=est.beta_margin_min))
    fit = fit_power_law(rows, -1.0 / 3.0, CFG.slope_tol_degenerate, CFG)
    elapsed = time.time() - t0
    ok = -0.48 <= fit.slope <= -0.18 and elapsed < 900.0
    report(3, ok, f"perturbed qubit pair slope {fit.slope:.3f} over "
                  f"N=27..729 in {elapsed:.0f}s (<900s)")
    assert fit.n_used == len(rows)
    assert -0.48 <= fit.slope <= -0.18
    assert elapsed < 900.0


def test_criterion_4_failure_scaling(crit2):
    rows, _, _, _ = crit2
    fit = fit_power_law(rows, -1.0, 0.4, CFG, value=lambda r: r.p_fail)
    ok = -1.4 <= fit.slope <= -0.6
    report(4, ok, f"p_fail slope {fit.slope:.3f} over N=8..128")
    assert -1.4 <= fit.slope <= -0.6


def test_criterion_5_kraus_completeness():
    t0 = time.time()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        r = 1e-3 + (0.125 - 1e-3) * rng.random()
        beta = (2 * rng.random() - 1) + 1j * (2 * rng.random() - 1)
        if abs(beta) > 1.0:
            beta /= abs(beta)
        fam = step_kraus(r, beta, 4, 24)
        worst = max(worst, fam.completeness_deficit)
    elapsed = time.time() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    report(5, ok, f"worst completeness deficit {worst:.2e} over 100 draws "
                  f"in {elapsed:.1f}s (<10s)")
    assert worst <= 1e-9
    assert elapsed < 10.0


def test_criterion_6_displacement_oracle_equivalence():
    from test_operators import series_expm_displacement
    t0 = time.time()
    rng = np.random.default_rng(SEED)
    M = 24
    worst = 0.0
    for _ in range(20):
        xi = (2 * rng.random() - 1) * 0.8 + 1j * (2 * rng.random() - 1) * 0.8
        if abs(xi) > 0.8:
            xi *= 0.8 / abs(xi)
        D = displacement_matrix(xi, M).entries
        O = series_expm_displacement(xi, M, pad=10)
        interior = slice(0, M - 4)  # oracle padding controls the corner
        worst = max(worst, float(np.max(np.abs(D[interior, interior]
                                               - O[interior, interior]))))
    elapsed = time.time() - t0
    ok = worst <= 1e-10 and elapsed < 30.0
    report(6, ok, f"interior-block deviation {worst:.2e} over 20 draws "
                  f"in {elapsed:.1f}s (<30s)")
    assert worst <= 1e-10
    assert elapsed < 30.0


def test_criterion_7_bound_validation_grids():
    t0 = time.time()
    rep = run_validators(CFG)
    elapsed = time.time() - t0
    ok = rep["violations"] == 0 and elapsed < 60.0
    report(7, ok, f"{rep['violations']} violations across "
                  f"{sorted(rep['sections'])} in {elapsed:.1f}s (<60s)")
    assert rep["violations"] == 0
    assert elapsed < 60.0


def test_criterion_8_orthogonality_identity():
    rng = np.random.default_rng(SEED)
    M = CFG.cutoff
    m = np.arange(M + 1)
    worst = 0.0
    for trial in range(200):
        rate = 0.6 + 0.8 * rng.random()
        a = (rng.normal(size=M + 1) + 1j * rng.normal(size=M + 1)) * np.exp(-0.5 * rate * m)
        b = (rng.normal(size=M + 1) + 1j * rng.normal(size=M + 1)) * np.exp(-0.5 * rate * m)
        pair = make_orthogonal_pair(FockVector(a), FockVector(b))
        for N in (4, 32, 256):
            d = orthogonal_decomposition(pair, N)
            val = abs(inner_product(d.eta0, d.nu0)
                      + inner_product(d.eta1, d.nu1) / N)
            worst = max(worst, val)
    ok = worst <= 1e-10
    report(8, ok, f"identity residual <= {worst:.2e} over 200 pairs x 3 N")
    assert worst <= 1e-10


def test_criterion_9_estimator_coherence():
    pair = cat_pair(1.0, CFG.cutoff)
    exact = exact_error_probability(pair, 8, CFG)
    mc = mc_error_probability(pair, 8, 100_000, SEED, CFG)
    ok = mc.ci_low <= exact.p_err <= mc.ci_high
    report(9, ok, f"exact {exact.p_err:.5f} inside MC CI "
                  f"[{mc.ci_low:.5f}, {mc.ci_high:.5f}] (1e5 samples)")
    assert mc.ci_low <= exact.p_err <= mc.ci_high


def test_criterion_10_determinism(crit2):
    _, _, blob, _ = crit2
    _, _, blob2 = generic_sweep(SEED)
    ok = blob == blob2
    report(10, ok, f"identical CSV bytes across reruns ({len(blob)} bytes)")
    assert blob == blob2
