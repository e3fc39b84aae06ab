"""Reference fields and error norms for the variational solvers."""
from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..core import CpModel
from .als import VsnaSolution
from .problem import VariationalProblem

Array = np.ndarray


def _coordinate(problem: VariationalProblem, X: Array, role: str, fixed_key: str) -> Array:
    i = problem.coord(role)
    if i is not None:
        return X[:, i]
    val = problem.params.get(fixed_key)
    return np.full(X.shape[0], 0.0 if val is None else float(val))


def semi_analytic_reference(problem: VariationalProblem, query) -> Union[float, Array]:
    """Free-space Gaussian plume rotated rigidly by ``omega t`` about (1/2, 1/2).

    The variance grows as ``sigma0^2 + 2 D t`` in every spatial direction and
    the amplitude as ``(sigma0^2 / sigma^2)^(n/2)``, which is the exact solution
    without walls. It is a proxy for the bounded problem: the Dirichlet walls
    are ignored, which is accurate while the plume stays several widths away
    from them.
    """
    if problem.kind != "advection_diffusion" or not problem.params.get("gaussian_ic"):
        raise ValueError("the proxy needs an advection-diffusion problem with a Gaussian plume")
    X = np.asarray(query, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    n = problem.params["n_space"]
    c0 = np.asarray(problem.params["center"], dtype=np.float64)
    s0 = float(problem.params["sigma0"])
    t = X[:, n]
    D = _coordinate(problem, X, "D", "diffusivity")
    var = s0 * s0 + 2.0 * D * t
    centers = np.broadcast_to(c0, (X.shape[0], n)).copy()
    if n >= 2:
        om = _coordinate(problem, X, "omega", "omega")
        ang = om * t
        dx, dy = c0[0] - 0.5, c0[1] - 0.5
        centers[:, 0] = 0.5 + np.cos(ang) * dx - np.sin(ang) * dy
        centers[:, 1] = 0.5 + np.sin(ang) * dx + np.cos(ang) * dy
    r2 = np.sum((X[:, :n] - centers) ** 2, axis=1)
    out = (s0 * s0 / var) ** (n / 2) * np.exp(-0.5 * r2 / var)
    return float(out[0]) if single else out


def gauss_grid(domains: Sequence, points: Union[int, Sequence[int]],
               cells: Union[int, Sequence[int]] = 1) -> tuple[list, list]:
    """Composite Gauss-Legendre nodes and weights per dimension."""
    d = len(domains)
    points = [points] * d if np.isscalar(points) else list(points)
    cells = [cells] * d if np.isscalar(cells) else list(cells)
    nodes, weights = [], []
    for (a, b), q, c in zip(domains, points, cells):
        if q < 2:
            raise ValueError("quadrature_per_dim must be >= 2")
        g, w = np.polynomial.legendre.leggauss(q)
        edges = np.linspace(a, b, c + 1)
        h = np.diff(edges)
        nodes.append((edges[:-1, None] + 0.5 * h[:, None] * (g + 1)).ravel())
        weights.append((0.5 * h[:, None] * w).ravel())
    return nodes, weights


def _factorised(u, nodes):
    if isinstance(u, VsnaSolution):
        return u.factor_table(nodes)
    if isinstance(u, CpModel) and u.activation == "identity":
        F = [b.design_matrix(x) @ c.T for b, c, x in zip(u.bases, u.coeffs, nodes)]
        return u.modal_weights, F
    return None


def l2_error(u, reference: Optional[Callable], quadrature_per_dim: Union[int, Sequence[int]] = 8,
             domains: Optional[Sequence] = None, cells: Union[int, Sequence[int]] = 1,
             chunk: int = 1 << 20) -> float:
    """Root-mean-square difference over the box (L2 norm divided by sqrt(volume)).

    ``u`` is a callable on ``(n, d)`` arrays, a CP model or a solution; for the
    latter two the factor values are tabulated once per dimension and the
    field is assembled on the tensor grid chunk by chunk. ``reference=None``
    means the zero field.
    """
    if domains is None:
        if isinstance(u, VsnaSolution):
            domains = u.problem.domains
        elif isinstance(u, CpModel):
            domains = [b.domain for b in u.bases]
        else:
            raise ValueError("domains are required for a plain callable")
    nodes, weights = gauss_grid(domains, quadrature_per_dim, cells)
    d = len(nodes)
    vol = float(np.prod([b - a for a, b in domains]))
    fac = _factorised(u, nodes)
    sizes = [len(x) for x in nodes]

    # split the grid into slabs along leading dimensions
    lead = 0
    while lead < d and int(np.prod(sizes[lead:])) > chunk:
        lead += 1
    tail_nodes = np.meshgrid(*nodes[lead:], indexing="ij")
    tail = np.column_stack([g.ravel() for g in tail_nodes]) if lead < d else np.zeros((1, 0))
    tail_w = np.ones(1)
    for w in weights[lead:]:
        tail_w = np.multiply.outer(tail_w, w).ravel()
    if fac is not None:
        c, F = fac
        tail_F = np.ones((tail.shape[0], len(c)))
        for k, f in enumerate(F[lead:]):
            idx = np.unravel_index(np.arange(tail.shape[0]), sizes[lead:])[k]
            tail_F = tail_F * f[idx]

    total = 0.0
    for head in np.ndindex(*sizes[:lead]):
        hx = np.array([nodes[i][j] for i, j in enumerate(head)])
        hw = float(np.prod([weights[i][j] for i, j in enumerate(head)])) if head else 1.0
        X = np.column_stack([np.broadcast_to(hx, (tail.shape[0], lead)), tail])
        if fac is not None:
            scale = np.ones(len(c))
            for i, j in enumerate(head):
                scale = scale * F[i][j]
            vals = tail_F @ (c * scale)
        else:
            vals = np.asarray(u(X), dtype=np.float64)
        if reference is not None:
            vals = vals - np.asarray(reference(X), dtype=np.float64)
        total += hw * float(np.dot(tail_w, vals * vals))
    return float(np.sqrt(max(total, 0.0) / vol))


def l2_error_mc(u, reference: Optional[Callable], domains: Sequence, n: int = 200_000,
                seed: int = 0) -> tuple[float, float]:
    """Monte Carlo RMS difference and its standard error."""
    rng = np.random.default_rng(seed)
    lo, hi = np.array(domains, dtype=np.float64).T
    X = lo + rng.uniform(size=(n, len(domains))) * (hi - lo)
    diff = np.asarray(u(X), dtype=np.float64)
    if reference is not None:
        diff = diff - np.asarray(reference(X), dtype=np.float64)
    sq = diff * diff
    m = float(sq.mean())
    se = float(sq.std(ddof=1) / np.sqrt(n)) / (2 * np.sqrt(m)) if m > 0 else 0.0
    return float(np.sqrt(m)), se
