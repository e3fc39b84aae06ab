"""Separable linear PDE problems over a box ``space x time x parameters``.

A problem is described by

* an operator ``L u = sum_t coef_t prod_i (w_ti(x_i) d^{m_ti}/dx_i^{m_ti}) u``,
* a source given as a sum of rank-1 separable functions,
* homogeneous Dirichlet flags per dimension and an optional zero trace at
  the start of the time axis,
* an optional rank-1 lifting ``u0`` so the unknown is ``u' = u - u0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray

KINDS = ("advection_diffusion", "poisson_nd", "burgers_1d")
FORMULATIONS = ("least_squares", "galerkin")


# ---------------------------------------------------------------------------
# univariate building blocks (callables with a ``deriv`` argument)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianBump:
    """``exp(-(x-c)^2 / (2 s^2))`` on ``[lo, hi]``, optionally minus the affine
    interpolant of its end values so that it vanishes exactly at both ends."""
    center: float
    sigma: float
    lo: float = 0.0
    hi: float = 1.0
    wall_corrected: bool = True

    def raw(self, x, deriv: int = 0) -> Array:
        z = (np.asarray(x, dtype=np.float64) - self.center) / self.sigma
        g = np.exp(-0.5 * z * z)
        if deriv == 0:
            return g
        if deriv == 1:
            return -z / self.sigma * g
        if deriv == 2:
            return (z * z - 1) / self.sigma ** 2 * g
        raise ValueError("derivative order above 2 not supported")

    def __call__(self, x, deriv: int = 0) -> Array:
        x = np.asarray(x, dtype=np.float64)
        g = self.raw(x, deriv)
        if not self.wall_corrected or deriv >= 2:
            return g
        ga, gb = float(self.raw(self.lo)), float(self.raw(self.hi))
        s = (x - self.lo) / (self.hi - self.lo)
        if deriv == 0:
            return g - (ga * (1 - s) + gb * s)
        return g - (gb - ga) / (self.hi - self.lo)


@dataclass(frozen=True)
class SineMode:
    """``sin(k pi (x - lo) / (hi - lo))``."""
    k: int = 1
    lo: float = 0.0
    hi: float = 1.0

    def __call__(self, x, deriv: int = 0) -> Array:
        w = self.k * np.pi / (self.hi - self.lo)
        ph = w * (np.asarray(x, dtype=np.float64) - self.lo)
        return w ** deriv * np.sin(ph + deriv * np.pi / 2)


@dataclass(frozen=True)
class ExpMode:
    """``exp(rate * x)``."""
    rate: float = -1.0

    def __call__(self, x, deriv: int = 0) -> Array:
        return self.rate ** deriv * np.exp(self.rate * np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, x, deriv: int = 0) -> Array:
        x = np.asarray(x, dtype=np.float64)
        return np.full_like(x, self.value if deriv == 0 else 0.0)


@dataclass(frozen=True)
class Affine:
    """``slope * (x - shift)``."""
    slope: float = 1.0
    shift: float = 0.0

    def __call__(self, x, deriv: int = 0) -> Array:
        x = np.asarray(x, dtype=np.float64)
        if deriv == 0:
            return self.slope * (x - self.shift)
        return np.full_like(x, self.slope if deriv == 1 else 0.0)


# ---------------------------------------------------------------------------
# separable operators and functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpFactor:
    """``weight(x) * d^deriv/dx^deriv`` acting on one coordinate."""
    deriv: int = 0
    weight: Optional[Callable] = None


IDENTITY = OpFactor()


@dataclass
class Term:
    coef: float
    factors: dict = field(default_factory=dict)     # dim -> OpFactor

    def factor(self, dim: int) -> OpFactor:
        return self.factors.get(dim, IDENTITY)


@dataclass
class SeparableFunction:
    """``coef * prod_i g_i(x_i)``; dimensions without an entry contribute 1."""
    coef: float
    factors: dict = field(default_factory=dict)     # dim -> callable(x, deriv=0)

    def factor_values(self, dim: int, x: Array) -> Array:
        g = self.factors.get(dim)
        return np.ones_like(x, dtype=np.float64) if g is None else np.asarray(g(x), dtype=np.float64)

    def __call__(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full(X.shape[0], float(self.coef))
        for i, g in self.factors.items():
            out = out * g(X[:, i])
        return out


def apply_term(term: Term, fn: SeparableFunction) -> Optional[SeparableFunction]:
    """``term`` applied to a rank-1 function; ``None`` when the result vanishes
    identically (a derivative hitting a factor that is constant)."""
    factors = {}
    for i in set(term.factors) | set(fn.factors):
        op = term.factor(i)
        g = fn.factors.get(i)
        if g is None:
            if op.deriv > 0:
                return None
            if op.weight is not None:
                factors[i] = op.weight
            continue
        factors[i] = _weighted(op.weight, g, op.deriv)
    return SeparableFunction(term.coef * fn.coef, factors)


def _weighted(weight, g, deriv):
    if weight is None:
        return lambda x, _d=0: g(x, deriv)
    return lambda x, _d=0: weight(x) * g(x, deriv)


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------

@dataclass
class VariationalProblem:
    kind: str
    roles: tuple
    domains: tuple
    operator: tuple                          # Terms of L
    source: tuple                            # SeparableFunctions, lifting already folded in
    dirichlet: tuple                         # per dim: zero at both ends
    initial_dim: Optional[int] = None        # zero trace at the start of this axis
    lifting: Optional[SeparableFunction] = None
    formulation: str = "least_squares"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        d = len(self.roles)
        if len(self.domains) != d or len(self.dirichlet) != d:
            raise ValueError("roles, domains and dirichlet flags must have equal length")
        self.domains = tuple((float(a), float(b)) for a, b in self.domains)
        if self.kind == "advection_diffusion":
            n = self.params["n_space"]
            m = sum(r in ("omega", "D") for r in self.roles)
            if d != n + 1 + m:
                raise ValueError("advection-diffusion needs dims = n_space + 1 + n_params")

    @property
    def dims(self) -> int:
        return len(self.roles)

    def constraint_points(self, dim: int) -> list:
        lo, hi = self.domains[dim]
        pts = []
        if self.dirichlet[dim]:
            pts += [lo, hi]
        if self.initial_dim == dim:
            pts.append(lo)
        return pts

    def coord(self, role: str) -> Optional[int]:
        return self.roles.index(role) if role in self.roles else None


SPACE_ROLES = ("x", "y", "z")
DEFAULT_CENTER = (0.35, 0.5, 0.5)
DEFAULT_SIGMA0 = 0.08


def advection_diffusion(n_space: int = 3, omega: Optional[float] = None,
                        diffusivity: Optional[float] = None, T: float = 1.0,
                        omega_range=(0.0, np.pi / 3), diffusivity_range=(0.001, 0.01),
                        center: Sequence[float] = DEFAULT_CENTER, sigma0: float = DEFAULT_SIGMA0,
                        initial: Optional[Sequence[Callable]] = None,
                        extra_source: Sequence[SeparableFunction] = ()) -> VariationalProblem:
    """``u_t + U.grad u - D lap u = s`` on ``[0,1]^n x [0,T] x params``.

    The wind is the solid-body rotation ``U = (-omega (y - 1/2), omega (x - 1/2), 0)``
    (absent when ``n_space == 1``). ``omega`` and ``diffusivity`` are extra
    coordinates when left as ``None``, otherwise fixed numbers. The initial
    state defaults to a wall-corrected Gaussian plume; ``initial`` replaces it
    by one callable per spatial dimension.
    """
    if n_space not in (1, 2, 3):
        raise ValueError("n_space must be 1, 2 or 3")
    roles = list(SPACE_ROLES[:n_space]) + ["t"]
    domains = [(0.0, 1.0)] * n_space + [(0.0, float(T))]
    if omega is None and n_space >= 2:
        roles.append("omega")
        domains.append(tuple(omega_range))
    if diffusivity is None:
        roles.append("D")
        domains.append(tuple(diffusivity_range))
    d = len(roles)
    it = n_space
    iw = roles.index("omega") if "omega" in roles else None
    iD = roles.index("D") if "D" in roles else None

    ops = [Term(1.0, {it: OpFactor(1)})]
    for k in range(n_space):
        if iD is None:
            ops.append(Term(-float(diffusivity), {k: OpFactor(2)}))
        else:
            ops.append(Term(-1.0, {k: OpFactor(2), iD: OpFactor(0, Affine())}))
    if n_space >= 2:
        # -omega (y - 1/2) d/dx  and  +omega (x - 1/2) d/dy
        for k, other, sign in ((0, 1, -1.0), (1, 0, 1.0)):
            f = {k: OpFactor(1), other: OpFactor(0, Affine(1.0, 0.5))}
            if iw is None:
                ops.append(Term(sign * float(omega), f))
            else:
                f[iw] = OpFactor(0, Affine())
                ops.append(Term(sign, f))

    if initial is None:
        initial = [GaussianBump(center[k], sigma0) for k in range(n_space)]
    lifting = SeparableFunction(1.0, {k: initial[k] for k in range(n_space)})
    source = [SeparableFunction(s.coef, dict(s.factors)) for s in extra_source]
    for t in ops:
        lu = apply_term(t, lifting)
        if lu is not None:
            source.append(SeparableFunction(-lu.coef, lu.factors))

    dirichlet = tuple([True] * n_space + [False] * (d - n_space))
    params = dict(n_space=n_space, omega=omega, diffusivity=diffusivity, T=float(T),
                  center=tuple(center[:n_space]), sigma0=sigma0,
                  gaussian_ic=all(isinstance(g, GaussianBump) for g in initial))
    return VariationalProblem("advection_diffusion", tuple(roles), tuple(domains), tuple(ops),
                              tuple(source), dirichlet, it, lifting, "least_squares", params)


def poisson_nd(d: int, source: Optional[Sequence[SeparableFunction]] = None,
               formulation: str = "least_squares") -> VariationalProblem:
    """``-lap u = s`` on the unit cube with homogeneous Dirichlet walls.

    The default source is ``prod sin(pi x_i) + 0.5 prod sin(2 pi x_i)``.
    With ``formulation='galerkin'`` the operator terms are the gradient
    components and the solver minimises the energy ``a(u,u) - 2 l(u)``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if source is None:
        source = [SeparableFunction(1.0, {i: SineMode(1) for i in range(d)}),
                  SeparableFunction(0.5, {i: SineMode(2) for i in range(d)})]
    if formulation == "galerkin":
        ops = tuple(Term(1.0, {i: OpFactor(1)}) for i in range(d))
    else:
        ops = tuple(Term(-1.0, {i: OpFactor(2)}) for i in range(d))
    return VariationalProblem("poisson_nd", tuple(f"x{i + 1}" for i in range(d)),
                              tuple([(0.0, 1.0)] * d), ops, tuple(source), tuple([True] * d),
                              None, None, formulation, dict(d=d))
