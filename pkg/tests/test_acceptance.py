"""Headline acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (visible even under output capture)
before asserting, so ``pytest tests/test_acceptance.py`` doubles as a report.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from spinreadout import analytic, cli
from spinreadout.ensemble import DisorderConfig, build_realization, inhomogeneity_errors, snr_map
from spinreadout.model import (
    TWO_PI,
    derive_couplings,
    desk_scale,
    homogeneous_ensemble,
    measurement_quality,
    reference_params,
)
from spinreadout.oracle import (
    TrajectoryConfig,
    convergence_sweep,
    joint_z_sampler_from_oat,
    mc_curves,
    oat_moments,
    oat_state,
    oriented_oat_state,
)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        return ok
    return emit


def best_time(fn, repeats=5):
    """Fastest of several wall-clock runs, and the last result."""
    elapsed = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        elapsed = min(elapsed, time.perf_counter() - t0)
    return elapsed, out


def test_criterion_01_coupling_constants(report):
    p = reference_params()
    p63 = reference_params(g_hz=63.0)

    def compute():
        ens = derive_couplings(p, [0.0])
        lam = measurement_quality(p, chi=TWO_PI * 5e-4, gamma=TWO_PI * 1.0)
        lam63 = measurement_quality(p63)
        return ens, lam, lam63

    elapsed, (ens, lam, lam63) = best_time(compute)
    chi_err = abs(ens.chi_j[0] / (TWO_PI * 5e-4) - 1)
    gamma_err = abs(ens.gamma_j[0] / (TWO_PI * (1 + 1e-5)) - 1)
    ok = (chi_err <= 1e-12 and gamma_err <= 1e-12 and abs(lam - 4) <= 1e-12
          and abs(lam63 - 10.08) <= 0.01 and elapsed < 1e-3)
    report(1, ok, f"chi rel err {chi_err:.1e}, gamma rel err {gamma_err:.1e}, lambda {lam!r}, "
                  f"lambda(g=63 Hz) {lam63:.4f}, {elapsed * 1e3:.3f} ms")
    assert ok


def test_criterion_02_noise_crossing(report):
    t0 = time.perf_counter()
    base = reference_params()
    x = np.geomspace(1e-3, 50.0, 4001)

    def ratio_curve(n_bar):
        p = base.with_(n_bar=n_bar)
        ens = homogeneous_ensemble(p)
        t = x / p.gamma
        spin = analytic.spin_noise(t, ens, p)
        shot = analytic.shot_noise(t, p)
        return measurement_quality(p), spin / shot

    lam1, ratio1 = ratio_curve(2.5e4)
    crossings = np.flatnonzero(np.diff(np.sign(ratio1 - 1.0)))

    def closed(xx):
        return lam1 * analytic.homogeneous_bracket(xx) / xx - 1.0

    closed_root = None
    if crossings.size:
        i = crossings[0]
        if np.sign(closed(x[i])) != np.sign(closed(x[i + 1])):
            closed_root = brentq(closed, x[i], x[i + 1])

    lam40, ratio40 = ratio_curve(1e6)
    peak40 = float(np.max(1.0 + ratio40))
    elapsed = time.perf_counter() - t0

    first_ok = crossings.size > 0 and closed_root is not None and \
        abs(x[crossings[0]] / closed_root - 1) <= 0.02
    second_ok = peak40 > 20
    ok = first_ok and second_ok and elapsed < 0.1
    report(2, ok, f"lambda={lam1:.5f}: max spin/shot {ratio1.max():.4f} at gamma*T "
                  f"{x[np.argmax(ratio1)]:.3f}, crossings of 1: {crossings.size}; "
                  f"lambda={lam40:.2f}: peak total/shot {peak40:.2f}; {elapsed * 1e3:.1f} ms")
    assert ok


def test_criterion_03_saturation(report):
    p = reference_params()
    ens = homogeneous_ensemble(p)
    lam = measurement_quality(p)
    spin = float(analytic.spin_noise(50.0 / p.gamma, ens, p))
    target = 3 * lam / p.gamma
    rel = abs(spin / target - 1)
    printed = analytic.saturation_limit_kappa_numerator(p) / p.kappa ** 2
    rel_printed = abs(printed / analytic.saturation_limit(p) - 1)
    ok = rel <= 1e-6 and rel_printed <= 1e-12
    report(3, ok, f"spin noise / (3 lambda / gamma) - 1 = {rel:.1e}; kappa-numerator form / "
                  f"kappa^2 matches to {rel_printed:.1e}")
    assert ok


def test_criterion_04_snr_optimum(report):
    t0 = time.perf_counter()
    rows, ok = [], True
    for lam in (1.0, 10.0, 100.0):
        opt = analytic.snr_optimum(lam)
        t_err = abs(opt.gamma_T_numeric / opt.gamma_T_approx - 1)
        s_err = abs(opt.snr_numeric / opt.snr_approx - 1)
        ok &= t_err <= 0.15
        if lam >= 10:
            ok &= s_err <= 0.05
        rows.append(f"lambda {lam:g}: gamma*T {opt.gamma_T_numeric:.4f} vs "
                    f"{opt.gamma_T_approx:.4f} ({t_err:.1%}), SNR {opt.snr_numeric:.4f} vs "
                    f"{opt.snr_approx:.4f} ({s_err:.1%})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 0.1
    report(4, ok, "; ".join(rows) + f"; {elapsed * 1e3:.1f} ms")
    assert ok


@pytest.mark.slow
def test_criterion_05_snr_map_shape(report):
    p = desk_scale(reference_params(), 10 ** 4)
    cfg = DisorderConfig.gaussian(p.sigma_delta, n_realizations=10, master_seed=2024)
    ratios = np.geomspace(0.2, 50.0, 30)
    t = np.geomspace(1e-2, 1e2, 30) / p.gamma_minus
    t0 = time.perf_counter()
    m = snr_map(p, cfg, t, ratios * p.sigma_delta)
    elapsed = time.perf_counter() - t0
    grid_max = np.nanmax(m.snr_mean)
    by_delta = np.nanmax(m.snr_mean, axis=0)
    low, high = by_delta[0] / grid_max, by_delta[-1] / grid_max
    best = int(np.argmax(by_delta))
    ok = low < 0.5 and high < 0.5 and 0 < best < ratios.size - 1 and elapsed < 60
    report(5, ok, f"max SNR/sqrt(N) {grid_max:.4f} at Delta/sigma {ratios[best]:.3f}; "
                  f"at 0.2: {low:.1%} of max; at 50: {high:.1%} of max; {elapsed:.1f} s")
    assert ok


def test_criterion_06_inhomogeneity_errors(report):
    p = desk_scale(reference_params(), 10 ** 4)
    sigma = p.sigma_delta

    def errors(width, delta):
        q = p.with_(sigma_delta=width, delta_res=delta)
        ens = build_realization(q, DisorderConfig.gaussian(width, master_seed=6), 0)
        return inhomogeneity_errors(1.0 / q.gamma_minus, ens, q)

    near, far = errors(sigma, 0.5 * sigma), errors(sigma, 5 * sigma)
    ratio = near[1] / far[1]
    # narrow line at the same absolute detunings
    near_n, far_n = errors(sigma * 1e-4, 0.5 * sigma), errors(sigma * 1e-4, 5 * sigma)
    small = max(*near_n, *far_n)
    ok = ratio > 100 and small < 1e-3
    report(6, ok, f"err_spin_noise(0.5 sigma)/err_spin_noise(5 sigma) = {ratio:.0f}; "
                  f"largest error with sigma/1e4: {small:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_07_oracle_equivalence(report):
    p = desk_scale(reference_params(), 100)
    ens = homogeneous_ensemble(p)
    t = np.linspace(0.1, 4.0, 8) / p.gamma
    t0 = time.perf_counter()
    means, variances = mc_curves(t, ens, p, TrajectoryConfig(100000, 20240607))
    elapsed = time.perf_counter() - t0
    worst_mean = max(r.n_sigma for r in means)
    worst_var = max(r.n_sigma for r in variances)
    ok = worst_mean <= 5 and worst_var <= 5 and elapsed < 30
    report(7, ok, f"lambda {measurement_quality(p):.3f}, N=100, 1e5 trajectories: max n_sigma "
                  f"mean {worst_mean:.2f}, variance {worst_var:.2f}; {elapsed:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_08_squeezing(report):
    worst = 0.0
    for n in (2, 4, 8, 16, 32):
        for t in (0.1, 0.5, 1.0):
            m = oat_moments(oat_state(n, t))
            vp, vm = analytic.oat_variances(n, t)
            worst = max(worst, abs(m.v_plus - vp), abs(m.v_minus - vm))

    p = desk_scale(reference_params(g_hz=63.0), 16)
    ens = homogeneous_ensemble(p)
    lam = measurement_quality(p)
    t = np.array([0.5, 1.25, 2.5]) / p.gamma
    sampler = joint_z_sampler_from_oat(oriented_oat_state(16, 0.5))
    _, squeezed = mc_curves(t, ens, p, TrajectoryConfig(100000, 81), sampler)
    _, plain = mc_curves(t, ens, p, TrajectoryConfig(100000, 82))
    shift_sigma = []
    for sq, pl, T in zip(squeezed, plain, t):
        expected = float(analytic.squeezing_delta(T, sampler.xi2, lam, p.gamma))
        est = sq.mc_estimate - pl.mc_estimate
        se = math.hypot(sq.mc_stderr, pl.mc_stderr)
        shift_sigma.append(abs(est - expected) / se)
    mc_ok = max(shift_sigma) <= 5 and all(r.n_sigma <= 5 for r in squeezed)

    x = np.linspace(0.2, 4.0, 38001)
    col = np.abs(analytic.squeezing_delta(x, 0.5, 10.0, 1.0)) / x
    peak = float(x[np.argmax(col)])
    ok = worst <= 1e-10 and mc_ok and abs(peak - 1.25) <= 0.05
    report(8, ok, f"max |V_exact - V_closed| {worst:.1e}; N=16 xi2={sampler.xi2:.4f} shift "
                  f"n_sigma {max(shift_sigma):.2f}, total-variance n_sigma "
                  f"{max(r.n_sigma for r in squeezed):.2f}; |delta|/T peak at gamma*T {peak:.4f}")
    assert ok


def test_criterion_09_eigen_oracle(report):
    base = reference_params()
    # far detuning so that the kappa^2/(4 d^2) correction stays below (g/d)^2
    points = convergence_sweep([1e-1, 1e-2, 1e-3], TWO_PI * 5e8, base.kappa, base.gamma_minus)
    parts = []
    for q in points:
        s, d = q.relative_errors()
        parts.append(f"g/d={q.ratio:g}: shift {s / q.ratio ** 2:.2f}, decay {d / q.ratio ** 2:.2f}")
    ok = all(q.within(3.0) for q in points)
    report(9, ok, "relative errors in units of (g/d)^2: " + "; ".join(parts))
    assert ok


def test_criterion_10_run_thresholds(report):
    ok, parts = True, []
    for lam in (1.0, 10.0, 100.0):
        opt = analytic.nruns_optimum(lam)
        exact = float(analytic.nruns_threshold(opt.gamma_T, lam, 1.0))
        at_21 = float(analytic.nruns_threshold(2.1, lam, 1.0))
        ok &= abs(opt.gamma_T - 2.1) <= 0.05
        ok &= abs(opt.n_runs / exact - 1) <= 0.01 and abs(opt.n_runs / at_21 - 1) <= 0.01
        approx_err = abs(opt.n_runs_approx / opt.n_runs - 1)
        if lam >= 10:
            ok &= approx_err <= 0.02
        parts.append(f"lambda {lam:g}: min at {opt.gamma_T:.4f}, value {opt.n_runs:.5f}, "
                     f"(1+1.2/lambda)^2 off by {approx_err:.2%}")
    report(10, ok, "; ".join(parts))
    assert ok


def _outputs(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.mark.slow
def test_criterion_11_determinism(report, tmp_path):
    runs = {
        "snr-map": ["snr-map", "--seed", "77", "--desk-spins", "5000", "--n-realizations", "4",
                    "--t-points", "6", "--delta-grid", "0.2:50:6"],
        "oracle": ["oracle", "variance", "--seed", "77", "--n-traj", "30000"],
    }
    same = {}
    for name, args in runs.items():
        trees = []
        for k, workers in enumerate(("1", "1", "4")):
            out = tmp_path / f"{name}-{k}"
            code = cli.main(args + ["--workers", workers, "--out", str(out)])
            assert code == 0
            trees.append(_outputs(out))
        same[name] = trees[0] == trees[1] == trees[2]
    ok = all(same.values())
    report(11, ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'} bytes over 2 serial "
                             f"runs and 4 workers" for k, v in same.items()))
    assert ok
