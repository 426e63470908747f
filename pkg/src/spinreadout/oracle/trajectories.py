"""Monte Carlo sampling of the integrated homodyne record.

The z-projection of each spin is a two-state Markov chain: it starts up with
probability 1/2 + sz0 and an up spin flips down once, at an exponential time
with rate gamma_j.  The time integral of z is then exact event by event, and
white shot noise integrated over [0, T] is a Wiener increment.  Trajectories
are generated in fixed-size blocks, each seeded from (seed, block index), so
results do not depend on how blocks are scheduled over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import analytic
from ..errors import InvalidParameterError
from ..model import SpinEnsemble, SystemParams, phase_noise_factor

DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class TrajectoryConfig:
    n_traj: int
    seed: int
    include_shot_noise: bool = True
    block_size: int = DEFAULT_BLOCK
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_traj < 1:
            raise InvalidParameterError("n_traj must be >= 1")
        if self.block_size < 1:
            raise InvalidParameterError("block_size must be >= 1")
        if self.workers < 1:
            raise InvalidParameterError("workers must be >= 1")

    def blocks(self) -> list[tuple[int, int]]:
        """(block index, block length) pairs covering n_traj."""
        full, rest = divmod(self.n_traj, self.block_size)
        out = [(i, self.block_size) for i in range(full)]
        if rest:
            out.append((full, rest))
        return out


@dataclass(frozen=True)
class OracleReport:
    analytic_value: float
    mc_estimate: float
    mc_stderr: float
    n_sigma: float
    T: float = math.nan
    quantity: str = ""

    @classmethod
    def compare(cls, analytic_value: float, estimate: float, stderr: float,
                T: float = math.nan, quantity: str = "") -> "OracleReport":
        diff = abs(analytic_value - estimate)
        if stderr > 0:
            n_sigma = diff / stderr
        else:
            n_sigma = 0.0 if diff == 0 else math.inf
        return cls(float(analytic_value), float(estimate), float(stderr), float(n_sigma),
                   float(T), quantity)

    @property
    def passed(self) -> bool:
        return self.n_sigma <= 5.0


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _initial_up(rng, size: int, sz0: np.ndarray, joint_z_sampler) -> np.ndarray:
    if joint_z_sampler is not None:
        return joint_z_sampler.sample(size, rng) > 0
    return rng.random((size, sz0.size)) < 0.5 + sz0


def _flip_times(rng, size: int, gamma: np.ndarray) -> np.ndarray:
    unit = rng.standard_exponential((size, gamma.size))
    with np.errstate(divide="ignore"):
        return unit / gamma


def _sample_block(args) -> np.ndarray:
    (seed, block, size, t_grid, chi, gamma, sz0, prefactor, shot_scale,
     include_shot, joint_z_sampler) = args
    rng = block_rng(seed, block)
    up = _initial_up(rng, size, sz0, joint_z_sampler)
    tau = _flip_times(rng, size, gamma)
    out = np.empty((size, t_grid.size))
    for i, T in enumerate(t_grid):
        integral = np.where(up, np.minimum(tau, T), 0.0) - 0.5 * T
        out[:, i] = prefactor * (integral @ chi)
    if include_shot:
        dt = np.diff(t_grid, prepend=0.0)
        steps = rng.standard_normal((size, t_grid.size)) * np.sqrt(dt * shot_scale)
        out += np.cumsum(steps, axis=1)
    return out


def sample_records(t_grid, ensemble: SpinEnsemble, params: SystemParams,
                   cfg: TrajectoryConfig, joint_z_sampler=None) -> np.ndarray:
    """Integrated records M(T), shape (n_traj, len(t_grid)); one shot-noise path per row."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.ndim != 1 or np.any(t < 0) or np.any(np.diff(t) < 0):
        raise InvalidParameterError("t_grid must be non-negative and non-decreasing")
    chi, gamma, sz0 = ensemble.active()
    if joint_z_sampler is not None and joint_z_sampler.n_spins != chi.size:
        raise InvalidParameterError(
            f"sampler has {joint_z_sampler.n_spins} spins, ensemble retains {chi.size}")
    prefactor = analytic._signal_prefactor(params)
    shot_scale = phase_noise_factor(params)
    jobs = [(cfg.seed, b, size, t, chi, gamma, sz0, prefactor, shot_scale,
             cfg.include_shot_noise, joint_z_sampler) for b, size in cfg.blocks()]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_sample_block, jobs))
    else:
        parts = [_sample_block(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def mean_and_stderr(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    mean = x.mean(axis=0)
    if n < 2:
        return mean, np.full(mean.shape, math.nan)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(n)


def variance_and_stderr(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased sample variance and its large-sample standard error."""
    n = x.shape[0]
    if n < 2:
        return np.zeros(x.shape[1:]), np.full(x.shape[1:], math.nan)
    centred = x - x.mean(axis=0)
    var = (centred ** 2).sum(axis=0) / (n - 1)
    m4 = (centred ** 4).mean(axis=0)
    return var, np.sqrt(np.maximum(m4 - var ** 2 * (n - 3) / (n - 1), 0.0) / n)


def _analytic_curves(t, ensemble, params, cfg, joint_z_sampler):
    """Analytic mean and variance of M at each time, matching what is sampled."""
    if joint_z_sampler is not None:
        n = joint_z_sampler.n_spins
        ens = ensemble.with_polarization(joint_z_sampler.mean_sz / n)
        squeezing = analytic.SqueezingSpec.from_xi2(joint_z_sampler.xi2)
    else:
        ens, squeezing = ensemble, None
    mean = np.atleast_1d(analytic.signal_mean(t, ens, params))
    var = np.atleast_1d(analytic.spin_noise(t, ens, params))
    if squeezing is not None and squeezing.xi2 != 1.0:
        lam = analytic.ensemble_lambda(params, ens) * params.eta
        _, gamma_bar = ens.mean_couplings()
        var = var + np.atleast_1d(analytic.squeezing_delta(t, squeezing.xi2, lam, gamma_bar))
    if cfg.include_shot_noise:
        var = var + np.atleast_1d(analytic.shot_noise(t, params))
    return mean, var


def mc_curves(t_grid, ensemble: SpinEnsemble, params: SystemParams, cfg: TrajectoryConfig,
              joint_z_sampler=None) -> tuple[list[OracleReport], list[OracleReport]]:
    """Mean and variance reports of M at every time of the grid."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    records = sample_records(t, ensemble, params, cfg, joint_z_sampler)
    mc_mean, se_mean = mean_and_stderr(records)
    mc_var, se_var = variance_and_stderr(records)
    an_mean, an_var = _analytic_curves(t, ensemble, params, cfg, joint_z_sampler)
    means = [OracleReport.compare(a, m, s, T, "mean")
             for a, m, s, T in zip(an_mean, mc_mean, se_mean, t)]
    variances = [OracleReport.compare(a, m, s, T, "variance")
                 for a, m, s, T in zip(an_var, mc_var, se_var, t)]
    return means, variances


def classical_decay_oracle(ensemble: SpinEnsemble, T: float, cfg: TrajectoryConfig,
                           params: SystemParams, joint_z_sampler=None
                           ) -> tuple[OracleReport, OracleReport]:
    means, variances = mc_curves([T], ensemble, params, cfg, joint_z_sampler)
    return means[0], variances[0]


def mc_variance_curve(t_grid, ensemble: SpinEnsemble, params: SystemParams,
                      cfg: TrajectoryConfig, squeezing: analytic.SqueezingSpec | None = None
                      ) -> list[OracleReport]:
    """Variance of M per time point against the closed form.

    With an OAT squeezing spec the initial z configurations are drawn from the
    exact oriented OAT state of the retained spins (at most 64 of them).
    """
    sampler = None
    if squeezing is not None:
        if squeezing.t_sqz is None:
            raise InvalidParameterError("trajectory sampling needs an OAT squeezing spec")
        from .oat import joint_z_sampler_from_oat, oriented_oat_state
        state = oriented_oat_state(ensemble.n_retained, squeezing.t_sqz, squeezing.which_axis)
        sampler = joint_z_sampler_from_oat(state)
    return mc_curves(t_grid, ensemble, params, cfg, sampler)[1]


def mc_two_time_corr(times, gamma: float, sz0: float, n_traj: int, seed: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Empirical <z(t) z(t')> of one decaying spin and its standard error."""
    t = np.asarray(times, dtype=float)
    rng = block_rng(seed, 0)
    up = rng.random(n_traj) < 0.5 + sz0
    tau = rng.standard_exponential(n_traj) / gamma
    z = np.where(up[:, None] & (tau[:, None] > t[None, :]), 0.5, -0.5)
    prod = z[:, :, None] * z[:, None, :]
    mean = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(n_traj)
    return mean, se
