"""Reproduction presets shared by the command line, scripts and acceptance runs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bench import STREAM_INIT, BoreholeSpec, SobolGSpec, make_dataset, substream
from .core import CpModel
from .training import TrainConfig, fit_supervised
from .variational import (
    AlsConfig,
    BurgersConfig,
    SpectralTrial,
    advection_diffusion,
    burgers_characteristics_oracle,
    burgers_weak_solve,
)
from .variational.problem import SineMode


@dataclass
class FitPreset:
    generator: str
    rank: int
    resolution: int
    order: int = 3
    optimiser: str = "als"
    sweeps: int = 30
    l2_penalty: float = 0.0
    noise_sigma: float = 0.01


SUITES = {
    "borehole": FitPreset("borehole", rank=5, resolution=3),
    "sobol_g": FitPreset("sobol_g", rank=6, resolution=10, l2_penalty=1e-9),
    "sobol_rank1": FitPreset("sobol_g", rank=1, resolution=16, noise_sigma=0.0),
}


def run_fit_preset(name: str, n_samples: int = 100_000, seed: int = 0,
                   sweeps: Optional[int] = None):
    """Generate the dataset, fit a CP model and return ``(model, report, dataset)``."""
    p = SUITES[name]
    if p.generator == "borehole":
        spec = BoreholeSpec(n_samples=n_samples, seed=seed)
    else:
        spec = SobolGSpec(noise_sigma=p.noise_sigma, n_samples=n_samples, seed=seed)
    data = make_dataset(p.generator, spec)
    model = CpModel.uniform(data.dims, p.rank, p.resolution, p.order, rng=substream(seed, STREAM_INIT))
    cfg = TrainConfig(optimiser=p.optimiser, als_sweeps=sweeps or p.sweeps,
                      l2_penalty=p.l2_penalty, seed=seed)
    model, report = fit_supervised(model, data, cfg)
    return model, report, data


def burgers_grid(n: int = 128, T: float = 0.3):
    return np.linspace(0.0, 1.0, n), np.linspace(0.0, T, n)


def run_burgers(nx: int = 64, nt: int = 16, T: float = 0.3, config: BurgersConfig = BurgersConfig(),
                grid: int = 128):
    """Solve from ``u0 = sin(pi x)`` and compare with characteristics on a grid."""
    sol = burgers_weak_solve(SpectralTrial(nx, nt, T=T, u0=SineMode(1)), config)
    x, t = burgers_grid(grid, T)
    X, Tg = np.meshgrid(x, t, indexing="ij")
    u = sol.grid(x, t)
    ref = burgers_characteristics_oracle(SineMode(1), X, Tg)
    return sol, (X, Tg, u, ref)


def slice_problem(omega: float = np.pi / 4, diffusivity: float = 0.001, T: float = 1.0):
    """``(x, y, t)`` slice of the rotating plume at fixed wind speed and diffusivity."""
    return advection_diffusion(2, omega=omega, diffusivity=diffusivity, T=T)


def full_problem(T: float = 1.0):
    """``(x, y, z, t, omega, D)`` problem with both parameters as coordinates."""
    return advection_diffusion(3, T=T)


def error_quadrature(problem) -> dict:
    """Gauss points and cells per dimension for the L2 error against the plume proxy.

    The plume is narrow in space, so spatial axes get the finest grid; time and
    the parameters vary smoothly.
    """
    if problem.dims <= 3:
        pts = [6] * problem.dims
        cells = [32 if r in ("x", "y", "z") else 16 for r in problem.roles]
    else:
        pts = [5 if r in ("x", "y", "z") else 4 if r == "t" else 3 for r in problem.roles]
        cells = [8 if r in ("x", "y", "z") else 4 if r == "t" else 2 for r in problem.roles]
    return dict(quadrature_per_dim=pts, cells=cells)


def scaling_config(problem) -> AlsConfig:
    return AlsConfig(max_sweeps=200 if problem.dims <= 3 else 100, rel_residual_tol=1e-8)
