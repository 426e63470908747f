"""Closed-form signal, noise and SNR of the time-integrated homodyne record.

Functions take collection times as scalars or 1-D arrays and return matching
shapes.  Per-spin sums run over retained spins only and are evaluated in
chunks so that an ensemble of 10**6 spins never materialises a full
(time x spin) matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DivergentThresholdError, InvalidParameterError, UndefinedSNRError
from .model import (
    SpinEnsemble,
    SystemParams,
    ensemble_lambda,
    phase_noise_factor,
)

# exp(-x) is clamped to zero beyond this; the dropped value is < 1e-304.
EXP_CUTOFF = 700.0
# Below this argument the cancellation-prone brackets switch to Taylor series.
SERIES_CUTOFF = 0.05
_CHUNK_ELEMENTS = 1 << 22

INHOMOGENEOUS_SQUEEZING = "squeezing shift evaluated with ensemble-mean chi and gamma"


def _exp_neg(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > EXP_CUTOFF, 0.0, np.exp(-np.minimum(x, EXP_CUTOFF)))


def _phi1(x):
    """(1 - exp(-x)) / x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = -np.expm1(-np.minimum(x, EXP_CUTOFF)) / x
    return np.where(x == 0, 1.0, out)


# 2(1 - e^-x) - 2x e^-x = sum_{k>=2} 2(-1)^k (k-1) x^k / k!
_F_SERIES = np.array([2.0 * (-1) ** k * (k - 1) / math.factorial(k) for k in range(2, 14)])


def _decay_bracket(x):
    """[2(1 - e^-x) - 2x e^-x] / x**2, stable at small x and equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    small = x < SERIES_CUTOFF
    xs = np.where(small, x, 0.0)
    series = np.polynomial.polynomial.polyval(xs, _F_SERIES)
    xl = np.where(small, 1.0, x)
    e = _exp_neg(xl)
    direct = (2.0 * (-np.expm1(-np.minimum(xl, EXP_CUTOFF))) - 2.0 * xl * e) / xl ** 2
    return np.where(small, series, direct)


def homogeneous_bracket(x):
    """(1 - e^-x)(3 + e^-x) - 4x e^-x, the homogeneous equator spin-noise shape."""
    x = np.asarray(x, dtype=float)
    return x ** 2 * (2.0 * _decay_bracket(x) - _phi1(x) ** 2)


def _times(T) -> np.ndarray:
    t = np.asarray(T, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise InvalidParameterError("collection times must be finite and >= 0")
    return t


def _all_equal(a: np.ndarray) -> bool:
    return bool(np.all(a == a[0]))


def _spin_sum(T, ensemble: SpinEnsemble, kernel) -> np.ndarray:
    """sum_j kernel(T[:, None], chi_j, gamma_j, sz0_j) over retained spins, chunked."""
    t = _times(T)
    flat = np.atleast_1d(t).ravel()
    chi, gamma, sz0 = ensemble.active()
    if chi.size and _all_equal(chi) and _all_equal(gamma) and _all_equal(sz0):
        # identical spins: one kernel evaluation times the count
        total = chi.size * kernel(flat, chi[0], gamma[0], sz0[0])
        return total.reshape(t.shape) if t.ndim else total[0]
    total = np.zeros(flat.shape)
    step = max(1, _CHUNK_ELEMENTS // max(1, flat.size))
    tt = flat[:, None]
    for start in range(0, chi.size, step):
        sl = slice(start, start + step)
        total += kernel(tt, chi[None, sl], gamma[None, sl], sz0[None, sl]).sum(axis=1)
    return total.reshape(t.shape) if t.ndim else total[0]


def _signal_prefactor(params: SystemParams) -> float:
    return 8.0 * math.sqrt(params.n_bar / params.kappa) * math.sqrt(params.eta)


# ---------------------------------------------------------------------------
# single-spin dynamics


def sz_mean(t, sz0: float, gamma: float):
    """<s^z(t)> of a spin relaxing at rate ``gamma`` from polarisation ``sz0``."""
    t = _times(t)
    return -0.5 + 0.5 * _exp_neg(gamma * t) * (1.0 + 2.0 * sz0)


def integrated_sz(T, sz0: float, gamma: float):
    """Time integral of :func:`sz_mean` from 0 to T; exact limit sz0*T at gamma = 0."""
    T = _times(T)
    return (sz0 + 0.5) * T * _phi1(gamma * T) - 0.5 * T


def two_time_corr(t: float, t_prime: float, j: int, j_prime: int,
                  ensemble: SpinEnsemble, init_corr: float | None = None) -> float:
    """<s_j^z(t) s_j'^z(t')> from the regression solution.

    ``init_corr`` is the initial <s_j^z s_j'^z>; it defaults to the separable
    product of initial polarisations (and is always 1/4 for j == j').
    """
    if t < 0 or t_prime < 0:
        raise InvalidParameterError("times must be >= 0")
    if t > t_prime:
        t, t_prime, j, j_prime = t_prime, t, j_prime, j
    a, b = float(ensemble.sz0_j[j]), float(ensemble.sz0_j[j_prime])
    ga, gb = float(ensemble.gamma_j[j]), float(ensemble.gamma_j[j_prime])
    if j == j_prime:
        return 0.5 * (a + 0.5) * (math.exp(-ga * t_prime) - math.exp(-ga * t)) + 0.25
    c0 = a * b if init_corr is None else init_corr
    ea, eb = math.exp(-ga * t), math.exp(-gb * t_prime)
    return (ea * eb * c0 - 0.5 * ea * (1.0 - eb) * a - 0.5 * eb * (1.0 - ea) * b
            + 0.25 * (1.0 - ea) * (1.0 - eb))


def integrated_two_point(T: float, j: int, j_prime: int, ensemble: SpinEnsemble,
                         init_corr: float | None = None) -> float:
    """Connected double time integral of the z-z correlator over [0, T]^2."""
    T = float(_times(T))
    a, b = float(ensemble.sz0_j[j]), float(ensemble.sz0_j[j_prime])
    ga, gb = float(ensemble.gamma_j[j]), float(ensemble.gamma_j[j_prime])
    if j == j_prime:
        p = a + 0.5
        x = ga * T
        return float(T ** 2 * p * (_decay_bracket(x) - p * _phi1(x) ** 2))
    c0 = a * b if init_corr is None else init_corr
    return float(T * _phi1(ga * T) * T * _phi1(gb * T) * (c0 - a * b))


# ---------------------------------------------------------------------------
# ensemble observables


def signal_mean(T, ensemble: SpinEnsemble, params: SystemParams):
    """Mean integrated homodyne record <M(T)>, units sqrt(s)."""
    def kernel(t, chi, gamma, sz0):
        return chi * ((sz0 + 0.5) * t * _phi1(gamma * t) - 0.5 * t)
    return _signal_prefactor(params) * _spin_sum(T, ensemble, kernel)


def differential_signal_slope(T, ensemble: SpinEnsemble, params: SystemParams):
    """d<M_signal(T)>/d(theta) at theta = 0 for a tilt sz0 = sin(theta)/2."""
    def kernel(t, chi, gamma, sz0):
        return chi * 0.5 * t * _phi1(gamma * t)
    return _signal_prefactor(params) * _spin_sum(T, ensemble, kernel)


def spin_noise(T, ensemble: SpinEnsemble, params: SystemParams):
    """Spin-projection contribution to Var M(T) for a separable initial state."""
    def kernel(t, chi, gamma, sz0):
        p = sz0 + 0.5
        x = gamma * t
        return chi ** 2 * t ** 2 * p * (_decay_bracket(x) - p * _phi1(x) ** 2)
    pref = 64.0 * params.n_bar / params.kappa * params.eta
    return pref * _spin_sum(T, ensemble, kernel)


def shot_noise(T, params: SystemParams):
    """Integrated drive shot noise, inflated by resonator phase noise."""
    return _times(T) * phase_noise_factor(params)


def snr(T, ensemble: SpinEnsemble, params: SystemParams):
    """|d<M_signal>/d theta| / Delta M at theta -> 0.

    The noise is that of ``ensemble`` as given (normally the equator state).
    """
    t = _times(T)
    if np.any(t == 0):
        raise UndefinedSNRError("SNR is 0/0 at zero collection time")
    slope = differential_signal_slope(t, ensemble, params)
    noise = spin_noise(t, ensemble, params) + shot_noise(t, params)
    return np.abs(slope) / np.sqrt(noise)


def snr_homogeneous(gamma_T, lam: float):
    """SNR / sqrt(N) for homogeneous couplings, as a function of gamma*T and lambda."""
    x = np.asarray(gamma_T, dtype=float)
    if np.any(x <= 0):
        raise UndefinedSNRError("SNR is 0/0 at zero collection time")
    if lam <= 0:
        raise InvalidParameterError("lambda must be > 0")
    # numerator and denominator both scale as x**2 at small x; divide it out
    num = _phi1(x)
    den = 2.0 * _decay_bracket(x) - _phi1(x) ** 2 + 1.0 / (lam * x)
    return num / np.sqrt(den)


@dataclass(frozen=True)
class SNROptimum:
    gamma_T_approx: float
    snr_approx: float
    gamma_T_numeric: float
    snr_numeric: float


def snr_optimum(lam: float) -> SNROptimum:
    """Optimal collection time: large-lambda approximations and a bounded scalar search."""
    if lam <= 0:
        raise InvalidParameterError("lambda must be > 0")
    approx_t = math.sqrt(1.5 / lam)
    approx_snr = 1.0 - math.sqrt(2.0 / (3.0 * lam))
    # the optimum sits between ~1/lambda and ~2; search in log(gamma*T)
    res = minimize_scalar(lambda u: -float(snr_homogeneous(math.exp(u), lam)),
                          bounds=(math.log(1e-8), math.log(20.0)), method="bounded",
                          options={"xatol": 1e-12})
    best = math.exp(res.x)
    return SNROptimum(approx_t, approx_snr, best, float(snr_homogeneous(best, lam)))


def saturation_limit(params: SystemParams, chi: float | None = None,
                     gamma: float | None = None) -> float:
    """T -> infinity value of the homogeneous equator spin noise, 3 lambda / gamma."""
    chi = params.chi if chi is None else chi
    gamma = params.gamma if gamma is None else gamma
    if gamma <= 0:
        raise InvalidParameterError("gamma must be > 0")
    return 48.0 * params.n_bar * params.n_spins * chi ** 2 / (params.kappa * gamma ** 2)


def saturation_limit_kappa_numerator(params: SystemParams, chi: float | None = None,
                                     gamma: float | None = None) -> float:
    """kappa * 48 n_bar N chi^2 / gamma^2.

    A dimensionally inconsistent variant with kappa in the numerator; it
    exceeds :func:`saturation_limit` by exactly kappa**2.  Kept so the
    discrepancy can be checked rather than silently absorbed.
    """
    chi = params.chi if chi is None else chi
    gamma = params.gamma if gamma is None else gamma
    return params.kappa * 48.0 * params.n_bar * params.n_spins * chi ** 2 / gamma ** 2


# ---------------------------------------------------------------------------
# squeezed initial states


@dataclass(frozen=True)
class SqueezingSpec:
    """Initial squeezing, either as xi^2 directly or as a one-axis-twisting time.

    For the OAT form ``which_axis`` picks the minimal (``"squeezed"``) or
    maximal (``"anti_squeezed"``) variance orientation.
    """

    xi2: float | None = None
    t_sqz: float | None = None
    which_axis: str = "squeezed"

    def __post_init__(self) -> None:
        if (self.xi2 is None) == (self.t_sqz is None):
            raise InvalidParameterError("give exactly one of xi2 or t_sqz")
        if self.xi2 is not None and not self.xi2 > 0:
            raise InvalidParameterError("xi2 must be > 0")
        if self.t_sqz is not None and self.t_sqz < 0:
            raise InvalidParameterError("t_sqz must be >= 0")
        if self.which_axis not in ("squeezed", "anti_squeezed"):
            raise InvalidParameterError("which_axis must be 'squeezed' or 'anti_squeezed'")

    @classmethod
    def from_xi2(cls, xi2: float) -> "SqueezingSpec":
        return cls(xi2=xi2)

    @classmethod
    def oat(cls, t_sqz: float, which_axis: str = "squeezed") -> "SqueezingSpec":
        return cls(t_sqz=t_sqz, which_axis=which_axis)

    def resolve_xi2(self, n_spins: int) -> float:
        """xi^2 = 4 <S_z^2> / N; exact Dicke-basis calculus up to 64 spins."""
        if self.xi2 is not None:
            return self.xi2
        if n_spins <= 64:
            from .oracle.oat import oat_moments, oat_state
            m = oat_moments(oat_state(n_spins, self.t_sqz, 0.0))
            return m.xi2_sq if self.which_axis == "squeezed" else m.xi2_antisq
        v_plus, v_minus = oat_variances(n_spins, self.t_sqz)
        v = v_minus if self.which_axis == "squeezed" else v_plus
        return 4.0 * v / n_spins


def squeezing_db(xi2):
    """Squeezing in decibels, -10 log10(xi^2)."""
    return -10.0 * np.log10(np.asarray(xi2, dtype=float))


def oat_variances(n_spins: int, t_sqz: float) -> tuple[float, float]:
    """(V+, V-) extremal transverse variances after one-axis twisting by S_z^2/N."""
    n = n_spins
    mu = t_sqz / n
    a = 1.0 - math.cos(2.0 * mu) ** (n - 2)
    b2 = 16.0 * math.sin(mu) ** 2 * math.cos(mu) ** (2 * n - 4)
    root = math.sqrt(a * a + b2)
    pref = n * (n - 1) / 16.0
    return n / 4.0 + pref * (a + root), n / 4.0 + pref * (a - root)


def squeezing_delta(T, xi2: float, lam: float, gamma: float):
    """Variance shift (lambda/gamma)(xi^2 - 1)(1 - e^{-gamma T})^2 of a squeezed start."""
    if not xi2 > 0:
        raise InvalidParameterError("xi2 must be > 0")
    T = _times(T)
    return lam / gamma * (xi2 - 1.0) * (-np.expm1(-np.minimum(gamma * T, EXP_CUTOFF))) ** 2


# ---------------------------------------------------------------------------
# finite numbers of runs


def nruns_threshold(T, lam: float, gamma: float):
    """Runs needed before the sample variance resolves spin noise over shot noise."""
    if lam <= 0:
        raise InvalidParameterError("lambda must be > 0")
    t = _times(T)
    if np.any(t == 0):
        raise DivergentThresholdError("run threshold diverges at zero collection time")
    x = gamma * t
    # gamma T / bracket, with the x**2 of the bracket divided out
    ratio = 1.0 / (x * (2.0 * _decay_bracket(x) - _phi1(x) ** 2))
    return (1.0 + ratio / lam) ** 2


@dataclass(frozen=True)
class RunsOptimum:
    gamma_T: float
    n_runs: float
    gamma_T_approx: float
    n_runs_approx: float


def nruns_optimum(lam: float) -> RunsOptimum:
    """Minimum of :func:`nruns_threshold` over collection time (gamma = 1)."""
    res = minimize_scalar(lambda x: float(nruns_threshold(x, lam, 1.0)), bounds=(0.05, 20.0),
                          method="bounded", options={"xatol": 1e-10})
    return RunsOptimum(float(res.x), float(res.fun), 2.1, (1.0 + 1.2 / lam) ** 2)


def nruns_squeezing(T, lam: float, xi2: float, gamma: float):
    """Runs needed to resolve the variance shift of a (anti-)squeezed start."""
    if lam <= 0:
        raise InvalidParameterError("lambda must be > 0")
    if xi2 == 1:
        raise DivergentThresholdError("no squeezing (xi2 = 1): the threshold diverges")
    t = _times(T)
    if np.any(t == 0):
        raise DivergentThresholdError("run threshold diverges at zero collection time")
    x = gamma * t
    e = _exp_neg(x)
    one_minus = -np.expm1(-np.minimum(x, EXP_CUTOFF))
    base = 4.0 * (one_minus - x * e - 0.25 * one_minus ** 2) + x / lam
    return (1.0 + base / ((xi2 - 1.0) * one_minus ** 2)) ** 2


def nruns_squeezing_short_time(T, lam: float, xi2: float, gamma: float):
    """Short-time expansion of :func:`nruns_squeezing`, valid to first order in gamma T."""
    x = gamma * _times(T)
    num = 1.0 / (lam * x) + 1.0 / lam + 1.0 + (8.0 + 5.0 / lam) / 12.0 * x
    return (1.0 + num / (xi2 - 1.0)) ** 2


def nruns_squeezing_optima(lam: float, xi2: float) -> tuple[float, float]:
    """(gamma T minimising runs, gamma T minimising runs * T), closed-form estimates."""
    return 2.0 * math.sqrt(3.0) / math.sqrt(8.0 * lam + 5.0), 1.0 / (1.0 + lam * xi2)


# ---------------------------------------------------------------------------
# full curves


@dataclass(frozen=True, eq=False)
class MeasurementCurve:
    t_grid: np.ndarray
    signal: np.ndarray
    d_signal_d_theta: np.ndarray
    spin_noise: np.ndarray
    shot_noise: np.ndarray
    total: np.ndarray
    snr_over_sqrtN: np.ndarray
    squeezing_shift: np.ndarray | None = None
    xi2: float | None = None
    warnings: tuple[str, ...] = field(default=())

    def columns(self) -> dict[str, np.ndarray]:
        cols = {
            "T": self.t_grid,
            "signal": self.signal,
            "d_signal_d_theta": self.d_signal_d_theta,
            "spin_noise": self.spin_noise,
            "shot_noise": self.shot_noise,
            "total": self.total,
            "snr_over_sqrtN": self.snr_over_sqrtN,
        }
        if self.squeezing_shift is not None:
            cols["squeezing_shift"] = self.squeezing_shift
        return cols


def variance_curve(t_grid, ensemble: SpinEnsemble, params: SystemParams,
                   squeezing: SqueezingSpec | None = None) -> MeasurementCurve:
    """Evaluate every signal and noise column on ``t_grid``."""
    t = np.atleast_1d(_times(t_grid)).astype(float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0):
        raise InvalidParameterError("t_grid must be a strictly increasing 1-D grid")
    signal = signal_mean(t, ensemble, params)
    slope = differential_signal_slope(t, ensemble, params)
    spin = spin_noise(t, ensemble, params)
    shot = shot_noise(t, params)
    total = spin + shot
    shift = None
    xi2 = None
    notes: list[str] = []
    if squeezing is not None:
        xi2 = squeezing.resolve_xi2(ensemble.n_retained)
        _, gamma_bar = ensemble.mean_couplings()
        lam = ensemble_lambda(params, ensemble) * params.eta
        shift = squeezing_delta(t, xi2, lam, gamma_bar)
        total = total + shift
        if not ensemble.is_homogeneous:
            notes.append(INHOMOGENEOUS_SQUEEZING)
    with np.errstate(invalid="ignore", divide="ignore"):
        snr_col = np.where(t > 0, np.abs(slope) / np.sqrt(total), 0.0)
    snr_col = snr_col / math.sqrt(len(ensemble))
    return MeasurementCurve(t, signal, slope, spin, shot, total, snr_col,
                            shift, xi2, tuple(notes))
