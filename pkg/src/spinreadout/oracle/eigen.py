"""Non-perturbative check of the dispersive shift and dressed decay rate.

The single-excitation sector of one spin coupled to the resonator is the
2x2 non-Hermitian matrix [[Delta - i kappa/2, g], [g, delta - i gamma_-/2]].
The spin-like eigenvalue E gives shift delta - Re E and decay -2 Im E.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import BranchAmbiguityError

# Overlaps closer than this cannot tell the two branches apart.
_OVERLAP_MARGIN = 1e-6


def dispersive_eigen_oracle(g: float, delta_res: float, delta_spin: float,
                            kappa: float, gamma_minus: float) -> tuple[float, float]:
    """(frequency shift, decay rate) of the spin-like eigenmode, rad/s."""
    detuning = delta_res - delta_spin
    if g != 0 and abs(detuning) <= abs(g):
        raise BranchAmbiguityError(
            f"|Delta - delta| = {abs(detuning):.6g} does not exceed g = {abs(g):.6g}")
    h = np.array([[delta_res - 0.5j * kappa, g],
                  [g, delta_spin - 0.5j * gamma_minus]])
    # work relative to the spin frequency to keep Re E small and precise
    h = h - delta_spin * np.eye(2)
    energies, vectors = np.linalg.eig(h)
    weight = np.abs(vectors[1, :]) ** 2 / np.sum(np.abs(vectors) ** 2, axis=0)
    k = int(np.argmax(weight))
    if abs(weight[0] - weight[1]) < _OVERLAP_MARGIN:
        raise BranchAmbiguityError("eigenvectors have equal spin overlap")
    e = energies[k]
    return float(-e.real) + 0.0, float(-2.0 * e.imag)


@dataclass(frozen=True)
class ConvergencePoint:
    ratio: float
    shift: float
    decay: float
    chi: float
    gamma: float

    def relative_errors(self) -> tuple[float, float]:
        """Relative errors of the shift against chi and of the decay against gamma."""
        return abs(self.shift / self.chi - 1.0), abs(self.decay / self.gamma - 1.0)

    def within(self, factor: float = 3.0) -> bool:
        """Both relative errors at most factor * (g/d)^2."""
        bound = factor * self.ratio ** 2
        return all(math.isfinite(e) and e <= bound for e in self.relative_errors())


def convergence_sweep(ratios, detuning: float, kappa: float, gamma_minus: float
                      ) -> list[ConvergencePoint]:
    """Compare with chi = g^2/d and gamma = gamma_- + kappa g^2/d^2 at g = ratio * d."""
    out = []
    for r in ratios:
        g = r * detuning
        shift, decay = dispersive_eigen_oracle(g, detuning, 0.0, kappa, gamma_minus)
        chi = g * g / detuning
        gamma = gamma_minus + kappa * g * g / detuning ** 2
        out.append(ConvergencePoint(float(r), shift, decay, chi, gamma))
    return out


def convergence_slope(points: list[ConvergencePoint]) -> float:
    """Log-log slope of the relative shift error against g/d; 2 for a next-order error."""
    x = np.log([p.ratio for p in points])
    y = np.log([p.relative_errors()[0] for p in points])
    return float(np.polyfit(x, y, 1)[0])
