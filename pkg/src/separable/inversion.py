"""Recover ensembles of inputs that a trained model maps to a target output.

Every seed runs the damped least-norm Newton iteration for the scalar
residual ``g(x) = f(x) - y*``; all seeds advance together as one batch, so a
step costs a single batched gradient evaluation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import CpModel, cp_gradient_batch
from .errors import EmptyEnsemble

Array = np.ndarray

STREAM_INVERSION = 3
DEGENERATE_GRAD = 1e-12


@dataclass
class InversionConfig:
    n_seeds: int = 64
    max_iters: int = 100
    target_tol: float = 1e-6
    damping: float = 1.0
    step_clip: float = 0.25
    box: Optional[Array] = None      # (d, 2) bounds; None means the unit cube
    seed: int = 0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.target_tol > 0:
            raise ValueError("target_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.step_clip > 0:
            raise ValueError("step_clip must be positive")

    def bounds(self, dims: int) -> Array:
        if self.box is None:
            return np.tile([0.0, 1.0], (dims, 1))
        box = np.asarray(self.box, dtype=np.float64)
        if box.shape != (dims, 2) or np.any(box[:, 1] < box[:, 0]):
            raise ValueError(f"box must be a ({dims}, 2) array of ordered bounds")
        return box


@dataclass
class InversionResult:
    """Per-seed final points plus the subset that reached the target.

    ``points``, ``residuals``, ``converged_flags`` and ``iterations`` are all
    indexed by seed; ``solutions`` keeps only the converged rows, in seed order.
    """
    points: Array
    residuals: Array
    converged_flags: Array
    iterations: Array
    degenerate_flags: Array
    wall_time_s: float
    target: float
    target_tol: float

    @property
    def solutions(self) -> Array:
        return self.points[self.converged_flags]

    @property
    def solution_residuals(self) -> Array:
        return self.residuals[self.converged_flags]

    @property
    def n_converged(self) -> int:
        return int(self.converged_flags.sum())

    def distinct_solutions(self, tol: float = 1e-3) -> Array:
        """Converged points with near-duplicates (closer than ``tol`` in max-norm) removed."""
        kept: list = []
        for p in self.solutions:
            if all(np.max(np.abs(p - q)) >= tol for q in kept):
                kept.append(p)
        return np.array(kept).reshape(-1, self.points.shape[1])

    def table(self) -> str:
        d = self.points.shape[1]
        head = ["seed", "converged", "iters", "residual"] + [f"x{i + 1}" for i in range(d)]
        rows = ["\t".join(head)]
        for k, p in enumerate(self.points):
            cells = [str(k), "yes" if self.converged_flags[k] else "no", str(int(self.iterations[k])),
                     f"{self.residuals[k]:.3e}"] + [f"{v:.6f}" for v in p]
            rows.append("\t".join(cells))
        return "\n".join(rows)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "target_tol": self.target_tol,
            "points": self.points.tolist(),
            "residuals": self.residuals.tolist(),
            "converged": self.converged_flags.tolist(),
            "iterations": self.iterations.tolist(),
            "degenerate": self.degenerate_flags.tolist(),
            "n_distinct": int(len(self.distinct_solutions())),
        }


def invert(model: CpModel, target: float, config: InversionConfig = InversionConfig()) -> InversionResult:
    t0 = time.perf_counter()
    model = replace(model, clamp=True)
    box = config.bounds(model.dims)
    lo, hi = box[:, 0], box[:, 1]
    rng = np.random.Generator(np.random.Philox(key=[config.seed, STREAM_INVERSION]))
    X = lo + rng.uniform(size=(config.n_seeds, model.dims)) * (hi - lo)

    n = config.n_seeds
    resid = np.full(n, np.inf)
    conv = np.zeros(n, dtype=bool)
    degen = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=np.int64)
    active = np.arange(n)

    for it in range(config.max_iters + 1):
        f, G = cp_gradient_batch(model, X[active])
        g = f - target
        resid[active] = np.abs(g)
        iters[active] = it
        hit = np.abs(g) <= config.target_tol
        conv[active[hit]] = True
        gn2 = np.einsum("nd,nd->n", G, G)
        flat = ~hit & (gn2 < DEGENERATE_GRAD ** 2)
        degen[active[flat]] = True
        keep = ~hit & ~flat
        if it == config.max_iters or not keep.any():
            break
        active, g, G, gn2 = active[keep], g[keep], G[keep], gn2[keep]
        step = -(config.damping * g / gn2)[:, None] * G
        norm = np.linalg.norm(step, axis=1)
        big = norm > config.step_clip
        step[big] *= (config.step_clip / norm[big])[:, None]
        X[active] = np.clip(X[active] + step, lo, hi)

    return InversionResult(X, resid, conv, iters, degen, time.perf_counter() - t0,
                           float(target), config.target_tol)


def ensemble_envelope(result: InversionResult, model: Optional[CpModel] = None) -> tuple[Array, Array]:
    """Coordinate-wise mean and ``(d, 2)`` min/max range of the converged solutions."""
    sols = result.solutions
    if sols.shape[0] == 0:
        raise EmptyEnsemble("no converged solutions to summarise")
    return sols.mean(axis=0), np.stack([sols.min(axis=0), sols.max(axis=0)], axis=1)
