"""Device parameters, per-spin dispersive coefficients and regime margins.

All quantities are stored in angular units (rad/s).  Parameter files and the
command line speak cyclic Hz; :meth:`SystemParams.from_hz` and
:meth:`SystemParams.to_hz` are the only places where the factor 2*pi enters.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import AllSpinsDiscardedError, ConfigError, InvalidParameterError

TWO_PI = 2.0 * math.pi

#: Stand-in for an unbounded regime margin; never +inf, so that downstream
#: arithmetic (min, comparisons, CSV output) stays finite.
UNBOUNDED = sys.float_info.max

CONFIG_KEYS = ("n_spins", "g_hz", "sigma_delta_hz", "gamma_minus_hz", "kappa_hz",
               "delta_hz", "n_bar", "eta", "gamma_L_hz")
OPTIONAL_CONFIG_KEYS = {"eta": 1.0, "gamma_L_hz": 0.0}


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SystemParams:
    """Global device and drive parameters, angular units throughout.

    ``g`` is the homogeneous spin-resonator coupling, ``delta_res`` the
    resonator detuning from the spin centre frequency and ``gamma_L`` the
    Lorentzian width of resonator phase noise.
    """

    n_spins: int
    g: float
    sigma_delta: float
    gamma_minus: float
    kappa: float
    delta_res: float
    n_bar: float
    eta: float = 1.0
    gamma_L: float = 0.0

    def __post_init__(self) -> None:
        n = self.n_spins
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise InvalidParameterError(f"n_spins must be an integer >= 1, got {n!r}")
        object.__setattr__(self, "n_spins", int(n))
        for name in ("g", "sigma_delta", "gamma_minus", "kappa", "delta_res",
                     "n_bar", "eta", "gamma_L"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.kappa <= 0:
            raise InvalidParameterError("kappa must be > 0")
        if self.gamma_minus < 0:
            raise InvalidParameterError("gamma_minus must be >= 0")
        if self.sigma_delta < 0:
            raise InvalidParameterError("sigma_delta must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidParameterError("eta must lie in [0, 1]")
        if self.n_bar < 0:
            raise InvalidParameterError("n_bar must be >= 0")
        if self.gamma_L < 0:
            raise InvalidParameterError("gamma_L must be >= 0")

    @classmethod
    def from_hz(cls, n_spins: int, g_hz: float, sigma_delta_hz: float,
                gamma_minus_hz: float, kappa_hz: float, delta_hz: float,
                n_bar: float, eta: float = 1.0, gamma_L_hz: float = 0.0) -> "SystemParams":
        return cls(n_spins=n_spins, g=TWO_PI * g_hz, sigma_delta=TWO_PI * sigma_delta_hz,
                   gamma_minus=TWO_PI * gamma_minus_hz, kappa=TWO_PI * kappa_hz,
                   delta_res=TWO_PI * delta_hz, n_bar=n_bar, eta=eta,
                   gamma_L=TWO_PI * gamma_L_hz)

    def to_hz(self) -> dict[str, float]:
        """Inverse of :meth:`from_hz`, keyed like a parameter file."""
        return {
            "n_spins": self.n_spins,
            "g_hz": self.g / TWO_PI,
            "sigma_delta_hz": self.sigma_delta / TWO_PI,
            "gamma_minus_hz": self.gamma_minus / TWO_PI,
            "kappa_hz": self.kappa / TWO_PI,
            "delta_hz": self.delta_res / TWO_PI,
            "n_bar": self.n_bar,
            "eta": self.eta,
            "gamma_L_hz": self.gamma_L / TWO_PI,
        }

    def with_(self, **changes: Any) -> "SystemParams":
        return replace(self, **changes)

    @property
    def chi(self) -> float:
        """Homogeneous dispersive coupling of a spin at the centre frequency."""
        if self.delta_res == 0:
            raise InvalidParameterError("homogeneous chi is undefined at zero detuning")
        return self.g ** 2 / self.delta_res

    @property
    def gamma(self) -> float:
        """Homogeneous total decay rate (intrinsic plus Purcell) at the centre frequency."""
        if self.delta_res == 0:
            raise InvalidParameterError("homogeneous gamma is undefined at zero detuning")
        return self.gamma_minus + self.kappa * self.g ** 2 / self.delta_res ** 2


def reference_params(**overrides: Any) -> SystemParams:
    """The NV-ensemble reference device (1e6 spins, g = 2pi*50 Hz, ...)."""
    base = dict(n_spins=10**6, g_hz=50.0, sigma_delta_hz=1e6, gamma_minus_hz=1.0,
                kappa_hz=1e5, delta_hz=5e6, n_bar=1e5)
    base.update(overrides)
    return SystemParams.from_hz(**base)


def desk_scale(params: SystemParams, n_spins: int) -> SystemParams:
    """Shrink the ensemble to ``n_spins`` while holding N*chi**2 fixed.

    The spin noise depends on N and chi only through N*chi**2, so the coupling
    is inflated by (N/n)**(1/4).  The Purcell part of gamma grows by
    sqrt(N/n), which is a small correction for far-detuned resonators.
    """
    scale = (params.n_spins / n_spins) ** 0.25
    return replace(params, n_spins=n_spins, g=params.g * scale)


def load_params(path: str | Path) -> SystemParams:
    """Read a flat JSON parameter file in cyclic units."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    return params_from_mapping(raw, source=str(path))


def params_from_mapping(raw: Mapping[str, Any], source: str = "<config>") -> SystemParams:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{source}: top level must be a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    missing = [k for k in CONFIG_KEYS if k not in raw and k not in OPTIONAL_CONFIG_KEYS]
    if missing:
        raise ConfigError(f"{source}: missing key(s) {', '.join(missing)}")
    values = {**OPTIONAL_CONFIG_KEYS, **raw}
    for key, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{source}: key {key!r} must be a number, got {value!r}")
    try:
        return SystemParams.from_hz(**values)
    except InvalidParameterError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpinEnsemble:
    """Per-spin detunings, couplings and derived dispersive coefficients.

    Arrays cover every sampled spin; ``retained`` marks the ones that satisfy
    the dispersive condition and enter all sums.
    """

    delta_j: np.ndarray
    g_j: np.ndarray
    chi_j: np.ndarray
    gamma_j: np.ndarray
    sz0_j: np.ndarray
    retained: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.delta_j)
        for name in ("g_j", "chi_j", "gamma_j", "sz0_j", "retained"):
            if len(getattr(self, name)) != n:
                raise InvalidParameterError("all per-spin arrays must share one length")
        if np.any(np.abs(self.sz0_j) > 0.5 + 1e-15):
            raise InvalidParameterError("initial polarisations must lie in [-1/2, 1/2]")

    def __len__(self) -> int:
        return len(self.delta_j)

    @property
    def n_retained(self) -> int:
        return int(np.count_nonzero(self.retained))

    @property
    def retained_fraction(self) -> float:
        return self.n_retained / len(self)

    def active(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(chi, gamma, sz0) restricted to retained spins."""
        m = self.retained
        return self.chi_j[m], self.gamma_j[m], self.sz0_j[m]

    def mean_couplings(self) -> tuple[float, float]:
        """Ensemble means (chi_bar, gamma_bar) over retained spins."""
        chi, gamma, _ = self.active()
        if chi.size == 0:
            raise AllSpinsDiscardedError("no retained spins")
        return float(np.mean(chi)), float(np.mean(gamma))

    @property
    def is_homogeneous(self) -> bool:
        chi, gamma, _ = self.active()
        return bool(chi.size and np.all(chi == chi[0]) and np.all(gamma == gamma[0]))

    def with_polarization(self, sz0: float | np.ndarray) -> "SpinEnsemble":
        sz0 = np.broadcast_to(np.asarray(sz0, dtype=float), self.delta_j.shape).copy()
        return replace(self, sz0_j=_frozen(sz0))

    def with_state(self, state: "InitialState") -> "SpinEnsemble":
        return self.with_polarization(state.sz0())


def discard_mask(params: SystemParams, delta_j: np.ndarray, g_j: np.ndarray) -> np.ndarray:
    """True where |Delta - delta_j| > |g_j| sqrt(n_bar) (strict)."""
    return np.abs(params.delta_res - delta_j) > np.abs(g_j) * math.sqrt(params.n_bar)


def derive_couplings(params: SystemParams, delta_j, g_j=None, *,
                     require_retained: bool = True) -> SpinEnsemble:
    """Build a :class:`SpinEnsemble` from per-spin detunings and couplings.

    ``g_j`` defaults to the homogeneous ``params.g``.  Spins violating the
    dispersive condition are flagged in ``retained``; if none survive an
    :class:`AllSpinsDiscardedError` is raised unless ``require_retained`` is
    false.
    """
    delta_j = np.atleast_1d(np.asarray(delta_j, dtype=float))
    if g_j is None:
        g_j = np.full_like(delta_j, params.g)
    g_j = np.atleast_1d(np.asarray(g_j, dtype=float))
    if delta_j.shape != g_j.shape or delta_j.ndim != 1:
        raise InvalidParameterError("delta_j and g_j must be 1-D arrays of equal length")
    if not (np.all(np.isfinite(delta_j)) and np.all(np.isfinite(g_j))):
        raise InvalidParameterError("per-spin detunings and couplings must be finite")

    retained = discard_mask(params, delta_j, g_j)
    if require_retained and not retained.any():
        raise AllSpinsDiscardedError(
            f"all {delta_j.size} spins violate |Delta - delta_j| > g sqrt(n_bar)")
    detuning = params.delta_res - delta_j
    g2 = np.abs(g_j) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = np.where(g2 == 0, 0.0, g2 / detuning)
        gamma = params.gamma_minus + np.where(g2 == 0, 0.0, params.kappa * g2 / detuning ** 2)
    return SpinEnsemble(
        delta_j=_frozen(delta_j.copy()),
        g_j=_frozen(g_j.copy()),
        chi_j=_frozen(chi),
        gamma_j=_frozen(gamma),
        sz0_j=_frozen(np.zeros_like(delta_j)),
        retained=_frozen(retained),
    )


def homogeneous_ensemble(params: SystemParams, sz0: float = 0.0) -> SpinEnsemble:
    """All ``params.n_spins`` spins at the centre frequency with coupling ``g``."""
    ens = derive_couplings(params, np.zeros(params.n_spins))
    return ens.with_polarization(sz0) if sz0 else ens


def measurement_quality(params: SystemParams, chi: float | None = None,
                        gamma: float | None = None) -> float:
    """lambda = 16 chi^2 n_bar N / (kappa gamma); homogeneous chi, gamma by default."""
    chi = params.chi if chi is None else chi
    gamma = params.gamma if gamma is None else gamma
    if gamma <= 0 or params.kappa <= 0:
        raise InvalidParameterError("measurement quality needs kappa > 0 and gamma > 0")
    return 16.0 * chi ** 2 * params.n_bar * params.n_spins / (params.kappa * gamma)


def ensemble_lambda(params: SystemParams, ensemble: SpinEnsemble) -> float:
    """lambda evaluated with the retained-spin means chi_bar, gamma_bar."""
    chi, gamma = ensemble.mean_couplings()
    return measurement_quality(replace(params, n_spins=ensemble.n_retained), chi, gamma)


def phase_noise_factor(params: SystemParams) -> float:
    """Shot-noise inflation 1 + 32 Gamma_L n_bar / kappa from resonator phase noise."""
    return 1.0 + 32.0 * params.gamma_L * params.n_bar / params.kappa


def effective_lambda(lam: float, params: SystemParams) -> float:
    """lambda corrected for homodyne efficiency and Lorentzian phase noise."""
    if lam < 0:
        raise InvalidParameterError("lambda must be >= 0")
    return lam * params.eta / phase_noise_factor(params)


def cooperativities(params: SystemParams) -> tuple[float, float, float]:
    """Return (C, C_inh, lambda_max) with lambda_max = 4 C min(1, C_inh)."""
    gamma = params.gamma
    if gamma <= 0:
        raise InvalidParameterError("cooperativity needs gamma > 0")
    if params.sigma_delta <= 0:
        raise InvalidParameterError("cooperativity needs sigma_delta > 0")
    coop = 4.0 * params.n_spins * params.g ** 2 / (params.kappa * gamma)
    c_inh = params.n_bar * params.g ** 2 / params.sigma_delta ** 2
    return coop, c_inh, 4.0 * coop * min(1.0, c_inh)


@dataclass(frozen=True)
class RegimeReport:
    """Validity margins of the dispersive model; a margin >> 1 means safe."""

    dispersive_margin: float
    fast_cavity_margin: float
    flipflop_margin: float
    superradiance_margin: float
    retained_fraction: float

    def margins(self) -> dict[str, float]:
        return {
            "dispersive_margin": self.dispersive_margin,
            "fast_cavity_margin": self.fast_cavity_margin,
            "flipflop_margin": self.flipflop_margin,
            "superradiance_margin": self.superradiance_margin,
        }

    def all_above(self, threshold: float) -> bool:
        return all(m > threshold for m in self.margins().values())


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return UNBOUNDED
    return min(num / den, UNBOUNDED)


def check_regime(params: SystemParams, ensemble: SpinEnsemble) -> RegimeReport:
    m = ensemble.retained if ensemble.n_retained else np.ones(len(ensemble), dtype=bool)
    detuning = np.abs(params.delta_res - ensemble.delta_j[m])
    g_scale = np.abs(ensemble.g_j[m]) * math.sqrt(params.n_bar)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_spin = np.where(g_scale == 0, UNBOUNDED, detuning / g_scale)
    dispersive = float(np.min(per_spin))

    if ensemble.n_retained:
        chi, gamma, _ = ensemble.active()
        fastest = float(max(np.max(gamma), np.max(np.abs(chi))))
    else:
        fastest = UNBOUNDED
    fast_cavity = _ratio(params.kappa, fastest)

    g2 = params.g ** 2
    delta = abs(params.delta_res)
    flipflop = _ratio(delta * params.sigma_delta, g2)
    superradiance = _ratio(delta ** 2 * params.sigma_delta, params.kappa * g2)
    return RegimeReport(dispersive, fast_cavity, flipflop, superradiance,
                        ensemble.retained_fraction)


@dataclass(frozen=True)
class InitialState:
    """Separable initial spin state: on the equator or tilted by ``theta``.

    Squeezed initial states are described by
    :class:`spinreadout.analytic.SqueezingSpec` and enter as a variance shift.
    """

    kind: str = "equator"
    theta: float = 0.0

    @classmethod
    def equator(cls) -> "InitialState":
        return cls("equator")

    @classmethod
    def tilted(cls, theta: float) -> "InitialState":
        return cls("tilted", float(theta))

    def sz0(self) -> float:
        if self.kind == "equator":
            return 0.0
        if self.kind == "tilted":
            return math.sin(self.theta) / 2.0
        raise InvalidParameterError(f"unknown initial state {self.kind!r}")
