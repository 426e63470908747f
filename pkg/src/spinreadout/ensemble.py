"""Disordered spin ensembles and disorder-averaged SNR maps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import analytic
from .errors import AllSpinsDiscardedError, InvalidParameterError, UndefinedRatioError
from .io import csv_text
from .model import SpinEnsemble, SystemParams, derive_couplings

DISTRIBUTIONS = ("gaussian", "lorentzian")


@dataclass(frozen=True)
class DisorderConfig:
    """Inhomogeneous broadening: Gaussian sigma or Lorentzian half-width, rad/s."""

    distribution: str
    width: float
    n_realizations: int = 1
    master_seed: int = 0
    recenter: bool = False

    def __post_init__(self) -> None:
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidParameterError(f"distribution must be one of {DISTRIBUTIONS}")
        if not (math.isfinite(self.width) and self.width > 0):
            raise InvalidParameterError("disorder width must be > 0")
        if self.n_realizations < 1:
            raise InvalidParameterError("n_realizations must be >= 1")
        if self.master_seed < 0:
            raise InvalidParameterError("master_seed must be a non-negative integer")

    @classmethod
    def gaussian(cls, sigma: float, **kw) -> "DisorderConfig":
        return cls("gaussian", sigma, **kw)

    @classmethod
    def lorentzian(cls, hwhm: float, **kw) -> "DisorderConfig":
        return cls("lorentzian", hwhm, **kw)


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(index,)))


def sample_frequencies(config: DisorderConfig, realization_index: int, n_spins: int) -> np.ndarray:
    rng = realization_rng(config.master_seed, realization_index)
    if config.distribution == "gaussian":
        delta = rng.normal(0.0, config.width, n_spins)
    else:
        # inverse CDF of the Cauchy distribution
        delta = config.width * np.tan(math.pi * (rng.random(n_spins) - 0.5))
    if config.recenter:
        delta -= delta.mean()
    return delta


def build_realization(params: SystemParams, config: DisorderConfig, index: int) -> SpinEnsemble:
    """Sample spin frequencies and derive the retained ensemble with g_j = g."""
    return derive_couplings(params, sample_frequencies(config, index, params.n_spins))


# ---------------------------------------------------------------------------
# SNR maps


@dataclass(frozen=True, eq=False)
class SnrMap:
    """Disorder-averaged SNR/sqrt(N) on a (T, Delta) grid; NaN marks invalid cells."""

    t_grid: np.ndarray
    delta_grid: np.ndarray
    snr_mean: np.ndarray
    snr_stderr: np.ndarray
    retained_fraction: np.ndarray
    per_realization: np.ndarray

    HEADER = ("T", "Delta", "snr_mean", "snr_stderr", "retained_fraction")

    def rows(self):
        for i, t in enumerate(self.t_grid):
            for k, d in enumerate(self.delta_grid):
                yield (t, d, self.snr_mean[i, k], self.snr_stderr[i, k],
                       self.retained_fraction[i, k])

    def to_csv(self) -> str:
        return csv_text(self.HEADER, self.rows())

    def to_json(self) -> dict:
        return {
            "t_grid": self.t_grid,
            "delta_grid": self.delta_grid,
            "snr_mean": self.snr_mean,
            "snr_stderr": self.snr_stderr,
            "retained_fraction": self.retained_fraction,
            "per_realization": self.per_realization,
        }


def _realization_row(args) -> tuple[np.ndarray, np.ndarray]:
    params, config, index, t_grid, delta_grid = args
    delta_j = sample_frequencies(config, index, params.n_spins)
    snr = np.full((t_grid.size, delta_grid.size), np.nan)
    kept = np.zeros(delta_grid.size)
    norm = math.sqrt(params.n_spins)
    for k, d in enumerate(delta_grid):
        p = replace(params, delta_res=float(d))
        try:
            ens = derive_couplings(p, delta_j)
        except AllSpinsDiscardedError:
            continue
        kept[k] = ens.retained_fraction
        snr[:, k] = analytic.snr(t_grid, ens, p) / norm
    return snr, kept


def _grid(values, name: str) -> np.ndarray:
    g = np.atleast_1d(np.asarray(values, dtype=float))
    if g.ndim != 1 or g.size == 0:
        raise InvalidParameterError(f"{name} must be a non-empty 1-D grid")
    if g.size > 1 and not (np.all(np.diff(g) > 0) or np.all(np.diff(g) < 0)):
        raise InvalidParameterError(f"{name} must be strictly monotone")
    return g


def snr_map(params: SystemParams, config: DisorderConfig, t_grid, delta_grid,
            workers: int = 1) -> SnrMap:
    """Average SNR/sqrt(N) over disorder realizations for every (T, Delta) cell.

    Each realization keeps its sampled frequencies across the Delta sweep.
    Realizations whose retained set is empty at some Delta contribute NaN
    there and are left out of that cell's average.
    """
    t = _grid(t_grid, "t_grid")
    d = _grid(delta_grid, "delta_grid")
    if np.any(t <= 0):
        raise InvalidParameterError("t_grid must be > 0 for SNR")
    jobs = [(params, config, r, t, d) for r in range(config.n_realizations)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_realization_row, jobs))
    else:
        parts = [_realization_row(j) for j in jobs]
    per = np.stack([p[0] for p in parts])
    kept = np.stack([p[1] for p in parts]).mean(axis=0)
    valid = np.isfinite(per)
    count = valid.sum(axis=0)
    filled = np.where(valid, per, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, filled.sum(axis=0) / count, np.nan)
        dev = np.where(valid, per - mean, 0.0)
        var = np.where(count > 1, (dev ** 2).sum(axis=0) / (count - 1), 0.0)
        stderr = np.where(count > 0, np.sqrt(var / np.maximum(count, 1)), np.nan)
    retained = np.broadcast_to(kept, mean.shape).copy()
    return SnrMap(t, d, mean, stderr, retained, per)


# ---------------------------------------------------------------------------
# inhomogeneity errors


def homogenized(ensemble: SpinEnsemble) -> SpinEnsemble:
    """Same spins with chi and gamma replaced by their retained-spin means."""
    chi_bar, gamma_bar = ensemble.mean_couplings()
    n = len(ensemble)
    return replace(ensemble, chi_j=np.full(n, chi_bar), gamma_j=np.full(n, gamma_bar))


def inhomogeneity_errors(T: float, ensemble: SpinEnsemble, params: SystemParams
                         ) -> tuple[float, float]:
    """Relative deviation of signal and spin noise from the homogenized ensemble."""
    ref = homogenized(ensemble)
    sig, sig_ref = analytic.signal_mean(T, ensemble, params), analytic.signal_mean(T, ref, params)
    var, var_ref = analytic.spin_noise(T, ensemble, params), analytic.spin_noise(T, ref, params)
    if sig_ref == 0 or var_ref == 0:
        raise UndefinedRatioError("homogenized signal or spin noise is zero")
    return float(abs(sig / sig_ref - 1.0)), float(abs(var / var_ref - 1.0))
