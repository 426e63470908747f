"""Command-line front end producing plot-ready CSV files.

Every command writes its files plus ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 usage or configuration error, 2 regime warning or
an oracle comparison beyond 5 standard errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic, oracle
from .ensemble import DisorderConfig, sample_frequencies, snr_map
from .errors import SpinReadoutError
from .io import RunManifest, csv_text, write_csv, write_json, write_text
from .model import (
    TWO_PI,
    SystemParams,
    check_regime,
    derive_couplings,
    desk_scale,
    homogeneous_ensemble,
    load_params,
    measurement_quality,
    reference_params,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_WARN = 2
REGIME_THRESHOLD = 10.0
N_SIGMA_LIMIT = 5.0

CURVES_HEADER = ("n_bar", "lambda", "gamma_T", "T", "spin_noise", "shot_noise", "total",
                 "total_over_shot")
SNR_HEADER = ("lambda", "gamma_T", "snr_over_sqrtN")
SNR_OPTIMA_HEADER = ("lambda", "gamma_T_opt", "snr_opt", "gamma_T_approx", "snr_approx")
SQUEEZE_HEADER = ("xi2", "xi2_db", "gamma_T", "delta_variance_over_shot")
SQUEEZE_PEAK_HEADER = ("xi2", "xi2_db", "gamma_T_peak", "peak_abs_delta_over_shot")
RUNS_HEADER = ("lambda", "xi2", "gamma_T", "nruns_plain", "nruns_squeezing")
RUNS_OPTIMA_HEADER = ("lambda", "xi2", "gamma_T_opt", "nruns_min", "nruns_approx",
                      "gamma_T_min_squeezing", "gamma_T_min_total")
ORACLE_HEADER = ("T", "quantity", "analytic", "mc", "stderr", "n_sigma")
CORRELATOR_HEADER = ("sz0", "t", "t_prime", "analytic", "mc", "stderr", "n_sigma")
DISPERSIVE_HEADER = ("ratio", "shift", "chi", "shift_rel_err", "decay", "gamma",
                     "decay_rel_err")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected min:max:points")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from exc


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _grid(lo: float, hi: float, n: int, scale: str) -> np.ndarray:
    if n < 1 or not (0 <= lo <= hi):
        raise UsageError("time grid needs 0 <= min <= max and at least one point")
    if n == 1:
        return np.array([lo])
    if scale == "log":
        if lo <= 0:
            raise UsageError("a log-spaced grid needs a positive minimum")
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def _time_grid(args, lo: float, hi: float, n: int, scale: str) -> np.ndarray:
    return _grid(args.t_min if args.t_min is not None else lo,
                 args.t_max if args.t_max is not None else hi,
                 args.t_points if args.t_points is not None else n,
                 args.t_scale or scale)


def _params(args) -> SystemParams:
    return load_params(args.config) if args.config else reference_params()


def _manifest(args, params: SystemParams, options: dict) -> RunManifest:
    config = {"params": params.to_hz(), "options": options}
    return RunManifest(args.command, config, seed=getattr(args, "seed", None))


def _finish(args, manifest: RunManifest, files: dict[str, str]) -> None:
    out = Path(args.out)
    for name, text in files.items():
        manifest.add(write_text(out / name, text))
    manifest.write(out)


# ---------------------------------------------------------------------------
# commands


def cmd_regime(args) -> int:
    params = _params(args)
    delta_j = (sample_frequencies(DisorderConfig.gaussian(params.sigma_delta,
                                                          master_seed=args.seed or 0),
                                  0, params.n_spins)
               if params.sigma_delta > 0 else np.zeros(params.n_spins))
    ens = derive_couplings(params, delta_j, require_retained=False)
    report = check_regime(params, ens)
    rows = [(k, v) for k, v in report.margins().items()]
    rows.append(("retained_fraction", report.retained_fraction))
    manifest = _manifest(args, params, {"threshold": REGIME_THRESHOLD})
    _finish(args, manifest, {"regime.csv": csv_text(("quantity", "value"), rows)})
    for k, v in rows:
        print(f"{k} {v:.6g}")
    if report.all_above(REGIME_THRESHOLD):
        return EXIT_OK
    print(f"warning: a regime margin is <= {REGIME_THRESHOLD:g}", file=sys.stderr)
    return EXIT_WARN


def cmd_curves(args) -> int:
    params = _params(args)
    gamma_t = _time_grid(args, 1e-2, 1e2, 61, "log")
    n_bars = args.n_bar or [params.n_bar]
    rows = []
    for n_bar in n_bars:
        p = params.with_(n_bar=n_bar)
        ens = homogeneous_ensemble(p)
        lam = measurement_quality(p)
        t = gamma_t / p.gamma
        spin = analytic.spin_noise(t, ens, p)
        shot = analytic.shot_noise(t, p)
        total = spin + shot
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(shot > 0, total / shot, 1.0)
        rows.extend(zip([n_bar] * t.size, [lam] * t.size, gamma_t, t, spin, shot, total, ratio))
        print(f"n_bar {n_bar:g} lambda {lam:.6g}")
    manifest = _manifest(args, params, {"gamma_T": gamma_t, "n_bar": n_bars})
    _finish(args, manifest, {"curves.csv": csv_text(CURVES_HEADER, rows)})
    return EXIT_OK


def _lambdas(args, params: SystemParams) -> list[float]:
    lams = args.lambda_ or [measurement_quality(params)]
    if any(not lam > 0 for lam in lams):
        raise UsageError("lambda values must be > 0")
    return lams


def cmd_snr(args) -> int:
    params = _params(args)
    gamma_t = _time_grid(args, 1e-3, 20.0, 81, "log")
    if np.any(gamma_t <= 0):
        raise UsageError("SNR grid must exclude gamma*T = 0")
    lams = _lambdas(args, params)
    rows, optima = [], []
    for lam in lams:
        values = analytic.snr_homogeneous(gamma_t, lam)
        rows.extend(zip([lam] * gamma_t.size, gamma_t, values))
        opt = analytic.snr_optimum(lam)
        optima.append((lam, opt.gamma_T_numeric, opt.snr_numeric, opt.gamma_T_approx,
                       opt.snr_approx))
        print(f"lambda {lam:g} gamma_T_opt {opt.gamma_T_numeric:.6g} "
              f"snr_opt {opt.snr_numeric:.6g}")
    manifest = _manifest(args, params, {"gamma_T": gamma_t, "lambda": lams})
    _finish(args, manifest, {"snr.csv": csv_text(SNR_HEADER, rows),
                             "snr_optima.csv": csv_text(SNR_OPTIMA_HEADER, optima)})
    return EXIT_OK


def cmd_snr_map(args) -> int:
    if args.seed is None:
        raise UsageError("snr-map needs --seed")
    params = _params(args)
    if args.desk_spins:
        params = desk_scale(params, args.desk_spins)
    gamma_t = _time_grid(args, 1e-2, 1e2, 30, "log")
    lo, hi, n = args.delta_grid or (0.2, 50.0, 30)
    delta_over_sigma = _grid(lo, hi, n, "log")
    config = DisorderConfig.gaussian(params.sigma_delta, n_realizations=args.n_realizations,
                                     master_seed=args.seed)
    result = snr_map(params, config, gamma_t / params.gamma_minus,
                     delta_over_sigma * params.sigma_delta, workers=args.workers)
    rows = [(t * params.gamma_minus, d / params.sigma_delta, m, s, f)
            for t, d, m, s, f in result.rows()]
    header = ("gamma_minus_T", "Delta_over_sigma") + result.HEADER[2:]
    doc = result.to_json()
    doc["gamma_minus_T"] = gamma_t
    doc["Delta_over_sigma"] = delta_over_sigma
    manifest = _manifest(args, params, {"gamma_minus_T": gamma_t,
                                        "Delta_over_sigma": delta_over_sigma,
                                        "n_realizations": args.n_realizations})
    out = Path(args.out)
    manifest.add(write_csv(out / "snr_map.csv", header, rows))
    manifest.add(write_json(out / "snr_map.json", doc))
    manifest.write(out)
    best = np.unravel_index(np.nanargmax(result.snr_mean), result.snr_mean.shape)
    print(f"max snr_over_sqrtN {result.snr_mean[best]:.6g} at gamma_minus_T "
          f"{gamma_t[best[0]]:.4g} Delta/sigma {delta_over_sigma[best[1]]:.4g}")
    return EXIT_OK


def _squeezing_levels(args, n_spins: int) -> list[float]:
    if args.xi2 and args.t_sqz:
        raise UsageError("give either --xi2 or --t-sqz, not both")
    if args.t_sqz:
        return [analytic.SqueezingSpec.oat(t).resolve_xi2(n_spins) for t in args.t_sqz]
    levels = args.xi2 or [0.5]
    if any(not x > 0 for x in levels):
        raise UsageError("xi2 must be > 0")
    return levels


def cmd_squeeze(args) -> int:
    params = _params(args)
    gamma_t = _time_grid(args, 1e-2, 10.0, 200, "log")
    lam = _lambdas(args, params)[0]
    levels = _squeezing_levels(args, params.n_spins)
    rows, peaks = [], []
    for xi2 in levels:
        # gamma = 1 so that T is measured in units of 1/gamma
        column = analytic.squeezing_delta(gamma_t, xi2, lam, 1.0) / gamma_t
        db = float(analytic.squeezing_db(xi2))
        rows.extend(zip([xi2] * gamma_t.size, [db] * gamma_t.size, gamma_t, column))
        i = int(np.argmax(np.abs(column)))
        peaks.append((xi2, db, gamma_t[i], abs(column[i])))
        print(f"xi2 {xi2:.6g} ({db:.3f} dB) |delta|/T peak at gamma_T {gamma_t[i]:.4g}")
    manifest = _manifest(args, params, {"gamma_T": gamma_t, "lambda": lam, "xi2": levels})
    _finish(args, manifest, {"squeeze.csv": csv_text(SQUEEZE_HEADER, rows),
                             "squeeze_peaks.csv": csv_text(SQUEEZE_PEAK_HEADER, peaks)})
    return EXIT_OK


def cmd_runs(args) -> int:
    params = _params(args)
    gamma_t = _time_grid(args, 1e-2, 20.0, 200, "log")
    lams = _lambdas(args, params)
    xi2 = args.xi2[0] if args.xi2 else None
    if xi2 is not None and xi2 == 1.0:
        raise UsageError("squeezing-resolution threshold diverges at xi2 = 1")
    rows, optima = [], []
    for lam in lams:
        plain = analytic.nruns_threshold(gamma_t, lam, 1.0)
        sq = (analytic.nruns_squeezing(gamma_t, lam, xi2, 1.0) if xi2 is not None
              else np.full(gamma_t.shape, np.nan))
        rows.extend(zip([lam] * gamma_t.size, [xi2 if xi2 else math.nan] * gamma_t.size,
                        gamma_t, plain, sq))
        opt = analytic.nruns_optimum(lam)
        t_sq, t_tot = (analytic.nruns_squeezing_optima(lam, xi2) if xi2 is not None
                       else (math.nan, math.nan))
        optima.append((lam, xi2 if xi2 else math.nan, opt.gamma_T, opt.n_runs,
                       opt.n_runs_approx, t_sq, t_tot))
        print(f"lambda {lam:g} gamma_T_opt {opt.gamma_T:.6g} nruns_min {opt.n_runs:.6g}")
    manifest = _manifest(args, params, {"gamma_T": gamma_t, "lambda": lams, "xi2": xi2})
    _finish(args, manifest, {"runs.csv": csv_text(RUNS_HEADER, rows),
                             "runs_optima.csv": csv_text(RUNS_OPTIMA_HEADER, optima)})
    return EXIT_OK


def _report_rows(reports):
    return [(r.T, r.quantity, r.analytic_value, r.mc_estimate, r.mc_stderr, r.n_sigma)
            for r in reports]


def cmd_oracle(args) -> int:
    if args.seed is None:
        raise UsageError("oracle runs need --seed for reproducibility")
    if args.n_traj < 2:
        raise UsageError("n_traj must be >= 2 for a standard error")
    params = _params(args)
    which = args.which
    options = {"which": which, "n_traj": args.n_traj}
    worst = 0.0
    if which in ("variance", "squeeze"):
        n = args.desk_spins or (100 if which == "variance" else 16)
        p = desk_scale(params, n)
        ens = homogeneous_ensemble(p)
        gamma_t = _time_grid(args, 0.1, 4.0, 8, "linear")
        cfg = oracle.TrajectoryConfig(args.n_traj, args.seed, workers=args.workers)
        sampler = None
        if which == "squeeze":
            t_sqz = args.t_sqz[0] if args.t_sqz else 0.5
            options["t_sqz"] = t_sqz
            sampler = oracle.joint_z_sampler_from_oat(oracle.oriented_oat_state(n, t_sqz))
        means, variances = oracle.mc_curves(gamma_t / p.gamma, ens, p, cfg, sampler)
        reports = means + variances
        worst = max(r.n_sigma for r in reports)
        options.update(desk_spins=n, gamma_T=gamma_t, **{"lambda": measurement_quality(p)})
        text = csv_text(ORACLE_HEADER, _report_rows(reports))
    elif which == "correlator":
        p = desk_scale(params, args.desk_spins or 100)
        gamma = p.gamma
        grid = np.array([0.25, 0.5, 1.0, 2.0]) / gamma
        rows = []
        for k, sz0 in enumerate((0.0, 0.5)):
            mc, se = oracle.mc_two_time_corr(grid, gamma, sz0, args.n_traj, args.seed + k)
            ens = derive_couplings(p, [0.0]).with_polarization(sz0)
            for a, t in enumerate(grid):
                for b, tp in enumerate(grid):
                    ref = analytic.two_time_corr(t, tp, 0, 0, ens)
                    rep = oracle.OracleReport.compare(ref, mc[a, b], se[a, b])
                    worst = max(worst, rep.n_sigma)
                    rows.append((sz0, t, tp, ref, mc[a, b], se[a, b], rep.n_sigma))
        text = csv_text(CORRELATOR_HEADER, rows)
    else:
        detuning = TWO_PI * args.sweep_detuning_hz
        points = oracle.convergence_sweep([1e-1, 1e-2, 1e-3], detuning, params.kappa,
                                          params.gamma_minus)
        rows = []
        for q in points:
            shift_err, decay_err = q.relative_errors()
            rows.append((q.ratio, q.shift, q.chi, shift_err, q.decay, q.gamma, decay_err))
        slope = oracle.convergence_slope(points)
        options["sweep_detuning_hz"] = args.sweep_detuning_hz
        print(f"convergence slope {slope:.4f}")
        text = csv_text(DISPERSIVE_HEADER, rows)
        # a slope outside 2 +- 0.2 is reported like an oracle mismatch
        worst = 0.0 if abs(slope - 2.0) <= 0.2 else math.inf
    manifest = _manifest(args, params, options)
    _finish(args, manifest, {f"oracle_{which}.csv": text})
    if which != "dispersive":
        print(f"max n_sigma {worst:.4g}")
    return EXIT_OK if worst <= N_SIGMA_LIMIT else EXIT_WARN


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help="JSON parameter file in cyclic Hz (default: reference device)")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    if seed:
        p.add_argument("--seed", type=_seed)


def _add_time(p: argparse.ArgumentParser, unit: str) -> None:
    p.add_argument("--t-min", type=float, help=f"first grid time, in units of {unit}")
    p.add_argument("--t-max", type=float, help=f"last grid time, in units of {unit}")
    p.add_argument("--t-points", type=int)
    p.add_argument("--t-scale", choices=("log", "linear"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinreadout",
                     description="Dispersive spin-ensemble readout: SNR, noise and oracle checks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("regime", help="validity margins of the dispersive model")
    _add_common(p)
    p.set_defaults(func=cmd_regime)

    p = sub.add_parser("curves", help="spin, shot and total noise versus collection time")
    _add_common(p, seed=False)
    _add_time(p, "1/gamma")
    p.add_argument("--n-bar", type=_floats, help="comma-separated photon numbers")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("snr", help="homogeneous SNR/sqrt(N) curves and optima")
    _add_common(p, seed=False)
    _add_time(p, "1/gamma")
    p.add_argument("--lambda", dest="lambda_", type=_floats, help="comma-separated lambda values")
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("snr-map", help="disorder-averaged SNR over (T, Delta)")
    _add_common(p)
    _add_time(p, "1/gamma_minus")
    p.add_argument("--delta-grid", type=_range, help="Delta/sigma_delta as min:max:points (log)")
    p.add_argument("--n-realizations", type=int, default=10)
    p.add_argument("--desk-spins", type=int, help="shrink N holding N*chi^2 fixed")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_snr_map)

    p = sub.add_parser("squeeze", help="variance change from initial squeezing")
    _add_common(p, seed=False)
    _add_time(p, "1/gamma")
    p.add_argument("--lambda", dest="lambda_", type=_floats)
    p.add_argument("--xi2", type=_floats, help="comma-separated squeezing parameters")
    p.add_argument("--t-sqz", type=_floats, help="comma-separated one-axis-twisting times")
    p.set_defaults(func=cmd_squeeze)

    p = sub.add_parser("runs", help="run-count thresholds versus collection time")
    _add_common(p, seed=False)
    _add_time(p, "1/gamma")
    p.add_argument("--lambda", dest="lambda_", type=_floats)
    p.add_argument("--xi2", type=_floats, help="squeezing level for the resolution threshold")
    p.set_defaults(func=cmd_runs)

    p = sub.add_parser("oracle", help="Monte Carlo and eigenvalue cross-checks")
    p.add_argument("which", choices=("variance", "squeeze", "dispersive", "correlator"))
    _add_common(p)
    _add_time(p, "1/gamma")
    p.add_argument("--n-traj", type=int, default=20000)
    p.add_argument("--desk-spins", type=int)
    p.add_argument("--t-sqz", type=_floats)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--sweep-detuning-hz", type=float, default=5e8,
                   help="resonator detuning of the dispersive sweep (default 5e8)")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("spinreadout: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, SpinReadoutError) as exc:
        print(f"spinreadout {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
