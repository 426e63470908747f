"""Exact one-axis-twisting states in the symmetric (Dicke) subspace.

Basis index k counts up-spins, so S_z = k - N/2.  Everything here is exact
linear algebra on (N+1)-dimensional vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from ..errors import InvalidParameterError, SizeError

MAX_SPINS = 64


def _check_size(n_spins: int) -> None:
    if n_spins < 1:
        raise InvalidParameterError("n_spins must be >= 1")
    if n_spins > MAX_SPINS:
        raise SizeError(f"exact symmetric-subspace calculus is limited to {MAX_SPINS} spins")


def sz_diag(n_spins: int) -> np.ndarray:
    return np.arange(n_spins + 1) - n_spins / 2.0


@lru_cache(maxsize=None)
def _sx_eigensystem(n_spins: int) -> tuple[np.ndarray, np.ndarray]:
    m = sz_diag(n_spins)[:-1]
    s = n_spins / 2.0
    # <k+1| S_+ |k> = sqrt((S - m)(S + m + 1))
    off = np.sqrt((s - m) * (s + m + 1.0))
    sx = 0.5 * (np.diag(off, -1) + np.diag(off, 1))
    w, v = np.linalg.eigh(sx)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def sx_matrix(n_spins: int) -> np.ndarray:
    w, v = _sx_eigensystem(n_spins)
    return (v * w) @ v.T


def rotate_x(amplitudes: np.ndarray, theta: float) -> np.ndarray:
    """Apply exp(-i theta S_x) via the S_x eigendecomposition."""
    n = amplitudes.size - 1
    w, v = _sx_eigensystem(n)
    return v @ (np.exp(-1j * theta * w) * (v.T @ amplitudes))


def coherent_x(n_spins: int) -> np.ndarray:
    """|+x> = prod_j (|up> + |down>)/sqrt(2) in the Dicke basis."""
    k = np.arange(n_spins + 1)
    log_binom = gammaln(n_spins + 1) - gammaln(k + 1) - gammaln(n_spins - k + 1)
    return np.exp(0.5 * log_binom - 0.5 * n_spins * math.log(2.0)).astype(complex)


@dataclass(frozen=True, eq=False)
class OATState:
    n_spins: int
    t_sqz: float
    theta_x: float
    amplitudes: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        """Distribution of the number of up-spins."""
        return np.abs(self.amplitudes) ** 2

    def expect_sz(self) -> float:
        return float(self.probabilities @ sz_diag(self.n_spins))

    def expect_sz2(self) -> float:
        return float(self.probabilities @ sz_diag(self.n_spins) ** 2)

    def expect_sx(self) -> float:
        a = self.amplitudes
        return float(np.real(np.conj(a) @ (sx_matrix(self.n_spins) @ a)))


def oat_state(n_spins: int, t_sqz: float, theta_x: float = 0.0) -> OATState:
    """exp(-i theta_x S_x) exp(-i t_sqz S_z^2 / N) |+x>."""
    _check_size(n_spins)
    m = sz_diag(n_spins)
    psi = coherent_x(n_spins) * np.exp(-1j * t_sqz * m ** 2 / n_spins)
    if theta_x:
        psi = rotate_x(psi, theta_x)
    psi = psi / np.linalg.norm(psi)
    psi.setflags(write=False)
    return OATState(n_spins, float(t_sqz), float(theta_x), psi)


@dataclass(frozen=True)
class OATMoments:
    v_plus: float
    v_minus: float
    contrast: float
    xi2_sq: float
    xi2_antisq: float
    theta_minus: float
    theta_plus: float
    wineland_sq: float
    wineland_antisq: float


def _sz2_after_rotation(state: OATState):
    n = state.n_spins
    w, v = _sx_eigensystem(n)
    coeffs = v.T @ state.amplitudes
    m2 = sz_diag(n) ** 2

    def sz2(theta: float) -> float:
        psi = v @ (np.exp(-1j * theta * w) * coeffs)
        return float(np.abs(psi) ** 2 @ m2)

    return sz2


def _extremum(f, sign: float) -> tuple[float, float]:
    # f has period pi; bracket on a coarse grid then polish
    grid = np.linspace(0.0, math.pi, 129)
    vals = np.array([sign * f(t) for t in grid])
    i = int(np.argmin(vals))
    h = grid[1] - grid[0]
    res = minimize_scalar(lambda t: sign * f(t), bounds=(grid[i] - h, grid[i] + h),
                          method="bounded", options={"xatol": 1e-13})
    best = res.x if res.fun <= vals[i] else grid[i]
    return float(best % math.pi), float(f(best))


def oat_moments(state: OATState) -> OATMoments:
    """Extremal <S_z^2> over an extra x rotation, contrast and squeezing parameters."""
    f = _sz2_after_rotation(state)
    theta_minus, v_minus = _extremum(f, 1.0)
    theta_plus, v_plus = _extremum(f, -1.0)
    n = state.n_spins
    contrast = state.expect_sx()
    return OATMoments(
        v_plus=v_plus,
        v_minus=v_minus,
        contrast=contrast,
        xi2_sq=4.0 * v_minus / n,
        xi2_antisq=4.0 * v_plus / n,
        theta_minus=theta_minus,
        theta_plus=theta_plus,
        wineland_sq=n * v_minus / contrast ** 2,
        wineland_antisq=n * v_plus / contrast ** 2,
    )


def oriented_oat_state(n_spins: int, t_sqz: float, which_axis: str = "squeezed") -> OATState:
    """OAT state rotated so the squeezed (or anti-squeezed) axis lies along z."""
    base = oat_state(n_spins, t_sqz, 0.0)
    moments = oat_moments(base)
    theta = moments.theta_minus if which_axis == "squeezed" else moments.theta_plus
    return oat_state(n_spins, t_sqz, theta)


class JointZSampler:
    """Draws per-spin z configurations of a permutation-symmetric state.

    The total S_z is drawn from the Dicke-level populations and the
    corresponding number of up-spins is placed uniformly at random.
    """

    def __init__(self, probabilities: np.ndarray, seed: int | None = None):
        p = np.clip(np.asarray(probabilities, dtype=float), 0.0, None)
        self.probabilities = p / p.sum()
        self.n_spins = p.size - 1
        self._rng = np.random.default_rng(seed)
        m = sz_diag(self.n_spins)
        self.mean_sz = float(self.probabilities @ m)
        self.mean_sz2 = float(self.probabilities @ m ** 2)

    @property
    def xi2(self) -> float:
        """4 <S_z^2> / N of the sampled distribution."""
        return 4.0 * self.mean_sz2 / self.n_spins

    @property
    def pair_correlation(self) -> float:
        """<s_j^z s_j'^z> for j != j'."""
        n = self.n_spins
        if n < 2:
            return 0.0
        return (self.mean_sz2 - n / 4.0) / (n * (n - 1))

    def sample(self, size: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Array of shape (size, N) with entries +-1/2."""
        rng = self._rng if rng is None else rng
        n = self.n_spins
        k = rng.choice(n + 1, size=size, p=self.probabilities)
        keys = rng.random((size, n))
        ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
        return np.where(ranks < k[:, None], 0.5, -0.5)

    def __call__(self, size: int, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.sample(size, rng)


def joint_z_sampler_from_oat(state: OATState, seed: int | None = None) -> JointZSampler:
    return JointZSampler(state.probabilities, seed)
