"""Benchmark generators: borehole, noisy Sobol-G and Latin hypercube designs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .training import Dataset

Array = np.ndarray

# Standard ranges from the surrogate-modelling literature, ordered as
# (r_w, r, T_u, H_u, T_l, H_l, L, K_w).
BOREHOLE_RANGES = (
    (0.05, 0.15),
    (100.0, 50000.0),
    (63070.0, 115600.0),
    (990.0, 1110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1120.0, 1680.0),
    (9855.0, 12045.0),
)

SOBOL_A = np.array([0.0] * 5 + [1.5] * 5 + [4.0] * 10)

# named substreams fanned out from one seed
STREAM_SAMPLING, STREAM_NOISE, STREAM_INIT = 0, 1, 2


@dataclass
class BoreholeSpec:
    physical_ranges: tuple = BOREHOLE_RANGES
    n_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if len(self.physical_ranges) != 8:
            raise ValueError("borehole needs 8 input ranges")
        if any(not hi > lo for lo, hi in self.physical_ranges):
            raise ValueError("borehole ranges must be non-degenerate")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class SobolGSpec:
    a: Array = field(default_factory=lambda: SOBOL_A.copy())
    noise_sigma: float = 0.01
    n_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def dims(self) -> int:
        return self.a.shape[0]


def substream(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


def lhs_sample(n: int, d: int, seed: int) -> Array:
    """Latin hypercube: every column has exactly one point per stratum ``[k/n, (k+1)/n)``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = substream(seed, STREAM_SAMPLING)
    strata = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    return (strata + rng.uniform(size=(n, d))) / n


def borehole(p: Array) -> Array:
    """Water flow rate through a borehole; rows of ``p`` are (r_w, r, T_u, H_u, T_l, H_l, L, K_w)."""
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != 8:
        raise ValueError("borehole takes 8 inputs")
    rw, r, tu, hu, tl, hl, L, kw = p.T
    if np.any(rw <= 0) or np.any(r <= 0) or np.any(tl <= 0) or np.any(kw <= 0):
        raise DomainError("borehole requires positive r_w, r, T_l and K_w")
    lg = np.log(r / rw)
    if np.any(lg == 0):
        raise DomainError("log(r / r_w) vanishes")
    out = 2 * np.pi * tu * (hu - hl) / (lg * (1 + 2 * L * tu / (lg * rw ** 2 * kw) + tu / tl))
    return out[0] if single else out


def sobol_g_clean(p: Array, a: Array = SOBOL_A) -> Array:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise DomainError("Sobol-G inputs must lie in the unit box")
    return np.prod((np.abs(4 * p - 2) + a) / (1 + a), axis=-1)


def sobol_g(p: Array, spec: SobolGSpec, index: int = 0) -> tuple[float, float]:
    """Clean and noisy Sobol-G values at one point; ``index`` selects the noise draw."""
    clean = float(sobol_g_clean(p, spec.a))
    eps = sobol_noise(spec, index + 1)[index]
    return clean, clean + float(eps)


def sobol_noise(spec: SobolGSpec, n: int) -> Array:
    return substream(spec.seed, STREAM_NOISE).normal(0.0, spec.noise_sigma, n)


def _minmax(v: Array) -> tuple[float, float]:
    lo, hi = float(v.min()), float(v.max())
    return lo, (hi if hi > lo else lo + 1.0)


def make_dataset(generator: str, spec, normalise_targets: bool = True) -> Dataset:
    """LHS design, generator outputs and input normalisation to [0, 1].

    With ``normalise_targets`` the outputs are divided by their observed range
    (max - min of the noisy targets). No shift is applied: a constant offset
    would turn a product-form target into a rank-2 one. Noiseless targets get
    the same scaling so metrics against them stay comparable.
    """
    if generator == "borehole":
        ranges = np.array(spec.physical_ranges, dtype=np.float64)
        U = lhs_sample(spec.n_samples, 8, spec.seed)
        y = borehole(ranges[:, 0] + U * (ranges[:, 1] - ranges[:, 0]))
        y_clean = None
        bounds = [tuple(r) for r in ranges]
    elif generator == "sobol_g":
        U = lhs_sample(spec.n_samples, spec.dims, spec.seed)
        y_clean = sobol_g_clean(U, spec.a)
        y = y_clean + sobol_noise(spec, spec.n_samples) if spec.noise_sigma > 0 else y_clean.copy()
        bounds = [(0.0, 1.0)] * spec.dims
    else:
        raise ValueError(f"unknown generator {generator!r}")
    target_bounds = None
    if normalise_targets:
        lo, hi = _minmax(y)
        target_bounds = (lo, hi)
        y = y / (hi - lo)
        if y_clean is not None:
            y_clean = y_clean / (hi - lo)
    meta = {"generator": generator, "spec": _spec_record(spec)}
    return Dataset(U, y, bounds, spec.seed, y_clean, target_bounds, meta)


def _spec_record(spec) -> dict:
    d = asdict(spec)
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}
