"""Brute-force verifiers for the closed-form results."""

from .eigen import convergence_slope, convergence_sweep, dispersive_eigen_oracle
from .oat import (
    JointZSampler,
    OATMoments,
    OATState,
    joint_z_sampler_from_oat,
    oat_moments,
    oat_state,
    oriented_oat_state,
)
from .trajectories import (
    OracleReport,
    TrajectoryConfig,
    classical_decay_oracle,
    mc_curves,
    mc_two_time_corr,
    mc_variance_curve,
)

__all__ = [
    "JointZSampler",
    "OATMoments",
    "OATState",
    "OracleReport",
    "TrajectoryConfig",
    "classical_decay_oracle",
    "convergence_slope",
    "convergence_sweep",
    "dispersive_eigen_oracle",
    "joint_z_sampler_from_oat",
    "mc_curves",
    "mc_two_time_corr",
    "mc_variance_curve",
    "oat_moments",
    "oat_state",
    "oriented_oat_state",
]
