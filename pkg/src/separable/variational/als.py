"""Tensor-native alternating least squares for separable linear problems.

The objective is the quadratic ``J(u) = sum_p c_p <P_p u, Q_p u> - 2 sum_l c_l <K_l u, s_l> + F``
in which every operator and source factorises over coordinates, so every
integral is a product of 1D integrals. Freezing all but one dimension turns
``J`` into a quadratic in that dimension's coefficients, with matrix

    A_a = sum_p c_p kron( prod_{i != a} Theta_i M_i^p Theta_i^T,  M_a^p )

where ``M_i^p`` are 1D integral matrices and ``Theta_i`` is the ``(R, n_i)``
coefficient block. Nothing of size ``n^d`` is ever formed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from ..core import CpModel
from ..errors import NonFiniteResidual
from ..splines import SplineBasis1D, build_basis
from .problem import IDENTITY, OpFactor, SeparableFunction, Term, VariationalProblem

Array = np.ndarray
EPS = np.finfo(np.float64).eps


@dataclass
class AlsConfig:
    rank: int = 4
    resolution: int = 8
    order: int = 3
    tikhonov_lambda: float = 1e-8      # relative: lambda = value * trace(A_a) / size(A_a)
    max_sweeps: int = 50
    rel_residual_tol: float = 1e-10
    seed: int = 0
    quadrature_per_cell: Optional[int] = None

    def __post_init__(self):
        if self.rank < 1 or self.resolution < 1:
            raise ValueError("rank and resolution must be >= 1")
        if not self.tikhonov_lambda > 0:
            raise ValueError("tikhonov_lambda must be positive")
        if self.max_sweeps < 0:
            raise ValueError("max_sweeps must be >= 0")


@dataclass
class VsnaSolution:
    """``u = model + lifting``; ``model`` carries the homogeneous part."""
    problem: VariationalProblem
    model: CpModel
    residual_history: list
    sweeps_run: int
    update_history: list = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def lifting(self) -> Optional[SeparableFunction]:
        return self.problem.lifting

    def __call__(self, X) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = self.model(X)
        if self.lifting is not None:
            out = out + self.lifting(X)
        return out

    def factor_table(self, nodes: list) -> tuple[Array, list]:
        """Mode weights ``(K,)`` and per-dimension factor values ``(len(nodes[i]), K)``
        such that ``u = sum_k c_k prod_i F_i[:, k]`` on the tensor grid."""
        F = [b.design_matrix(x) @ c.T for b, c, x in zip(self.model.bases, self.model.coeffs, nodes)]
        c = self.model.modal_weights.copy()
        if self.lifting is not None:
            F = [np.column_stack([f, self.lifting.factor_values(i, np.asarray(x))])
                 for i, (f, x) in enumerate(zip(F, nodes))]
            c = np.append(c, self.lifting.coef)
        return c, F

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "residual_history": list(self.residual_history),
                "sweeps_run": self.sweeps_run, "roles": list(self.problem.roles),
                "lifting": _describe_lifting(self.lifting)}


def _describe_lifting(lift) -> Optional[dict]:
    if lift is None:
        return None
    return {"coef": lift.coef, "factors": {str(k): repr(v) for k, v in lift.factors.items()}}


class QuadraticForm:
    """All 1D integrals needed for the local systems of one problem."""

    def __init__(self, problem: VariationalProblem, bases, n_per_cell: Optional[int] = None):
        if len(bases) != problem.dims:
            raise ValueError("one basis per problem dimension is required")
        self.problem = problem
        self.bases = list(bases)
        self.d = problem.dims
        self.quad = [b.quadrature(n_per_cell) for b in self.bases]
        self._design = [{} for _ in range(self.d)]
        self._mats: dict = {}

        ops = problem.operator
        if problem.formulation == "least_squares":
            self.pairs = [(a.coef * b.coef, a, b) for a in ops for b in ops]
            self.linear = [(t.coef * s.coef, t, s) for t in ops for s in problem.source]
            self.F = sum(p.coef * q.coef * np.prod([self._fn_inner(i, p, q) for i in range(self.d)])
                         for p in problem.source for q in problem.source)
        else:
            self.pairs = [(t.coef, t, t) for t in ops]
            self.linear = [(s.coef, _ID_TERM, s) for s in problem.source]
            self.F = 0.0
        self.M = [[self.op_matrix(i, a.factor(i), b.factor(i)) for i in range(self.d)]
                  for _, a, b in self.pairs]
        self.V = [[self.op_load(i, t.factor(i), s) for i in range(self.d)] for _, t, s in self.linear]
        self.mass = [self.op_matrix(i, IDENTITY, IDENTITY) for i in range(self.d)]

    # -- 1D integrals ---------------------------------------------------

    def _basis_at_nodes(self, i: int, deriv: int) -> Array:
        cache = self._design[i]
        if deriv not in cache:
            cache[deriv] = self.bases[i].design_matrix(self.quad[i][0], deriv)
        return cache[deriv]

    def op_values(self, i: int, op: OpFactor) -> Array:
        E = self._basis_at_nodes(i, op.deriv)
        return E if op.weight is None else op.weight(self.quad[i][0])[:, None] * E

    def op_matrix(self, i: int, left: OpFactor, right: OpFactor) -> Array:
        key = (i, left, right)
        if key not in self._mats:
            w = self.quad[i][1]
            self._mats[key] = self.op_values(i, left).T @ (w[:, None] * self.op_values(i, right))
        return self._mats[key]

    def op_load(self, i: int, op: OpFactor, fn: SeparableFunction) -> Array:
        x, w = self.quad[i]
        return self.op_values(i, op).T @ (w * fn.factor_values(i, x))

    def _fn_inner(self, i: int, p: SeparableFunction, q: SeparableFunction) -> float:
        x, w = self.quad[i]
        return float(np.sum(w * p.factor_values(i, x) * q.factor_values(i, x)))

    # -- contractions ---------------------------------------------------

    def gram(self, thetas) -> tuple[Array, Array]:
        """``G[p, i] = Theta_i M_i^p Theta_i^T`` and ``H[l, i] = Theta_i V_i^l``."""
        R = thetas[0].shape[0]
        G = np.empty((len(self.pairs), self.d, R, R))
        H = np.empty((len(self.linear), self.d, R))
        for i, th in enumerate(thetas):
            for p in range(len(self.pairs)):
                G[p, i] = th @ self.M[p][i] @ th.T
            for l in range(len(self.linear)):
                H[l, i] = th @ self.V[l][i]
        return G, H

    def local(self, thetas, a: int, G=None, H=None) -> tuple[Array, Array]:
        if G is None:
            G, H = self.gram(thetas)
        others = [i for i in range(self.d) if i != a]
        R, n = thetas[a].shape
        A = np.zeros((R * n, R * n))
        for p, (c, _, _) in enumerate(self.pairs):
            W = np.prod(G[p, others], axis=0) if others else np.ones((R, R))
            A += c * np.kron(W, self.M[p][a])
        b = np.zeros(R * n)
        for l, (c, _, _) in enumerate(self.linear):
            h = np.prod(H[l, others], axis=0) if others else np.ones(R)
            b += c * np.kron(h, self.V[l][a])
        return A, b

    def parts(self, thetas) -> tuple[float, float]:
        """Quadratic and linear parts, ``J = quad - 2 lin + F``."""
        G, H = self.gram(thetas)
        quad = sum(c * np.prod(G[p], axis=0).sum() for p, (c, _, _) in enumerate(self.pairs))
        lin = sum(c * np.prod(H[l], axis=0).sum() for l, (c, _, _) in enumerate(self.linear))
        return float(quad), float(lin)

    def objective(self, thetas) -> float:
        quad, lin = self.parts(thetas)
        return quad - 2 * lin + self.F


_ID_TERM = Term(1.0)


def problem_bases(problem: VariationalProblem, config: AlsConfig) -> list:
    return [build_basis(config.order, config.resolution, dom) for dom in problem.domains]


def constraint_basis(problem: VariationalProblem, basis: SplineBasis1D, dim: int) -> Optional[Array]:
    """Orthonormal basis of coefficient vectors whose spline vanishes at the
    constrained points of ``dim``; ``None`` when the dimension is free."""
    pts = problem.constraint_points(dim)
    if not pts:
        return None
    return null_space(basis.design_matrix(np.array(pts)))


def assemble_local_system(problem: VariationalProblem, current: CpModel, active_dim: int,
                          lam: float, n_per_cell: Optional[int] = None) -> tuple[Array, Array]:
    """``(A_a + lam I, b_a)`` for the coefficient block of ``active_dim``,
    flattened as ``(mode, basis function)``."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    thetas = _effective_thetas(current)
    form = QuadraticForm(problem, current.bases, n_per_cell)
    A, b = form.local(thetas, active_dim)
    return A + lam * np.eye(A.shape[0]), b


def _effective_thetas(model: CpModel) -> list:
    # modal weights are folded into the first dimension
    th = [c.copy() for c in model.coeffs]
    th[0] = model.modal_weights[:, None] * th[0]
    return th


def _initial_thetas(problem, bases, config, Z) -> list:
    rng = np.random.default_rng(config.seed)
    th = []
    for i, b in enumerate(bases):
        t = rng.normal(0.0, 1.0, size=(config.rank, b.n_funcs))
        if Z[i] is not None:
            t = t @ Z[i] @ Z[i].T
        th.append(t)
    return th


def _normalise(form: QuadraticForm, thetas, a: int) -> None:
    d = len(thetas)
    if d == 1:
        return
    M = form.mass[a]
    s = np.sqrt(np.maximum(np.einsum("jc,cd,jd->j", thetas[a], M, thetas[a]), 0.0))
    live = s > 0
    if not live.any():
        return
    thetas[a][live] /= s[live, None]
    share = s[live] ** (1.0 / (d - 1))
    for i in range(d):
        if i != a:
            thetas[i][live] *= share[:, None]


def als_solve(problem: VariationalProblem, config: AlsConfig = AlsConfig(),
              init: Optional[CpModel] = None) -> VsnaSolution:
    if problem.kind not in ("advection_diffusion", "poisson_nd"):
        raise ValueError(f"ALS handles advection_diffusion and poisson_nd, not {problem.kind}")
    t0 = time.perf_counter()
    if init is not None:
        bases = list(init.bases)
        if len(bases) != problem.dims:
            raise ValueError("initial model has the wrong number of dimensions")
    else:
        bases = problem_bases(problem, config)
    form = QuadraticForm(problem, bases, config.quadrature_per_cell)
    Z = [constraint_basis(problem, b, i) for i, b in enumerate(bases)]
    if init is None:
        thetas = _initial_thetas(problem, bases, config, Z)
        # best multiple of the random guess, so the starting objective is at most F
        quad, lin = form.parts(thetas)
        if quad > 0 and lin != 0:
            thetas[0] *= lin / quad
    else:
        if init.rank > config.rank:
            raise ValueError("initial model has a higher rank than requested")
        if init.rank < config.rank:
            init = init.extend_rank(config.rank, np.random.default_rng(config.seed))
        thetas = _effective_thetas(init)
        thetas = [t if z is None else t @ z @ z.T for t, z in zip(thetas, Z)]
    for a in range(problem.dims):
        _normalise(form, thetas, a)

    scale = form.F if form.F > 0 else 1.0
    J = form.objective(thetas)
    history, updates = [J / scale], [J / scale]
    sweeps = 0
    for sweep in range(config.max_sweeps):
        G, H = form.gram(thetas)
        for a in range(problem.dims):
            A, b = form.local(thetas, a, G, H)
            size = A.shape[0]
            tr = np.trace(A)
            lam = config.tikhonov_lambda * (tr / size if tr > 0 else 1.0)
            R, n = thetas[a].shape
            old = thetas[a].ravel()
            # proximal Tikhonov term lam * |theta - theta_old|^2: same matrix A + lam I,
            # but the update can never raise the unregularised objective
            if Z[a] is None:
                vec = np.linalg.solve(A + lam * np.eye(size), b + lam * old)
            else:
                K = np.kron(np.eye(R), Z[a])
                rhs = K.T @ b + lam * (K.T @ old)
                vec = K @ np.linalg.solve(K.T @ A @ K + lam * np.eye(K.shape[1]), rhs)
            # exact change of the objective; avoids the cancellation in theta'A theta - 2 b'theta + F
            J = J + float((vec - old) @ (A @ (vec + old) - 2 * b))
            if not np.isfinite(J):
                raise NonFiniteResidual(f"objective became {J} in sweep {sweep}, dimension {a}")
            thetas[a] = vec.reshape(R, n)
            updates.append(J / scale)
            _normalise(form, thetas, a)
            G, H = form.gram(thetas)
        sweeps = sweep + 1
        history.append(J / scale)
        prev = history[-2]
        # the objective is formed with cancellation, so changes near roundoff count as
        # converged; a zero tolerance runs every requested sweep
        floor = 64 * EPS * max(1.0, abs(prev)) if config.rel_residual_tol > 0 else -1.0
        if abs(prev - history[-1]) <= config.rel_residual_tol * abs(prev) + floor:
            break

    model = CpModel(tuple(bases), thetas)
    return VsnaSolution(problem, model, history, sweeps, updates, time.perf_counter() - t0)


def sobolev_norm(model: CpModel, order: int = 1, n_per_cell: Optional[int] = None) -> float:
    """Full ``H^order`` norm (``order`` 0 or 1) of a CP model over its box."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    th = _effective_thetas(model)
    mass, stiff = [], []
    for b, t in zip(model.bases, th):
        x, w = b.quadrature(n_per_cell)
        B0, B1 = b.design_matrix(x), b.design_matrix(x, 1)
        mass.append(t @ (B0.T * w) @ B0 @ t.T)
        stiff.append(t @ (B1.T * w) @ B1 @ t.T)
    total = np.prod(mass, axis=0).sum()
    if order == 1:
        for k in range(len(th)):
            mats = [stiff[i] if i == k else mass[i] for i in range(len(th))]
            total += np.prod(mats, axis=0).sum()
    return float(np.sqrt(max(total, 0.0)))
