"""Separable variational solvers: space-time least squares by ALS and a
weak-residual spectral solve for inviscid Burgers."""
from .als import AlsConfig, VsnaSolution, als_solve, assemble_local_system, sobolev_norm
from .problem import VariationalProblem, advection_diffusion, poisson_nd
from .burgers import (BurgersConfig, SpectralTrial, WeakResidual, burgers_characteristics_oracle,
                      burgers_weak_solve, shock_time)
from .scaling import ScalingRow, ScalingStudy, scaling_study
