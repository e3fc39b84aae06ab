"""Univariate B-spline bases on a uniform grid with ghost cells.

A basis of degree ``P`` over ``C`` interior cells of ``[a, b]`` has ``C + P``
functions. The knot vector is the uniform grid on ``[a, b]`` extended by ``P``
equally spaced ghost knots on each side, so every function is a translate of
the same cardinal B-spline and the basis sums to one everywhere on ``[a, b]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError

Array = np.ndarray


@dataclass(frozen=True)
class IntegralMatrixSpec:
    derivative_order_left: int = 0
    derivative_order_right: int = 0
    quadrature_points_per_cell: Optional[int] = None

    def __post_init__(self):
        for k in (self.derivative_order_left, self.derivative_order_right):
            if k not in (0, 1, 2):
                raise ValueError(f"derivative order must be 0, 1 or 2, got {k}")
        q = self.quadrature_points_per_cell
        if q is not None and q < 1:
            raise ValueError("quadrature_points_per_cell must be >= 1")


@dataclass(frozen=True, eq=False)
class SplineBasis1D:
    order: int
    interior_cells: int
    domain: tuple[float, float] = (0.0, 1.0)
    knots: Array = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be an integer >= 1, got {self.order}")
        if int(self.interior_cells) != self.interior_cells or self.interior_cells < 1:
            raise ValueError(f"interior_cells must be an integer >= 1, got {self.interior_cells}")
        a, b = (float(v) for v in self.domain)
        if not (np.isfinite(a) and np.isfinite(b)) or not b > a:
            raise ValueError(f"domain must be a non-empty interval, got {self.domain}")
        object.__setattr__(self, "domain", (a, b))
        if self.knots is None:
            knots = uniform_ghost_knots(self.order, self.interior_cells, a, b)
        else:
            knots = np.array(self.knots, dtype=np.float64)
            if knots.shape != (self.interior_cells + 2 * self.order + 1,):
                raise ValueError("knot vector has the wrong length")
            if np.any(np.diff(knots) < 0):
                raise ValueError("knots must be non-decreasing")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def n_funcs(self) -> int:
        return self.interior_cells + self.order

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def breakpoints(self) -> Array:
        """Distinct knots inside the domain, i.e. the cell boundaries."""
        P, C = self.order, self.interior_cells
        return self.knots[P:P + C + 1]

    def __eq__(self, other):
        if not isinstance(other, SplineBasis1D):
            return NotImplemented
        return (self.order == other.order and self.interior_cells == other.interior_cells
                and self.domain == other.domain and np.array_equal(self.knots, other.knots))

    def __hash__(self):
        return hash((self.order, self.interior_cells, self.domain))

    # -- evaluation -------------------------------------------------------

    def _check(self, x: Array, clamp: bool) -> Array:
        x = np.asarray(x, dtype=np.float64)
        a, b = self.domain
        slack = 1e-12 * (b - a)
        if clamp:
            return np.clip(x, a, b)
        bad = (x < a - slack) | (x > b + slack) | ~np.isfinite(x)
        if np.any(bad):
            raise DomainError(f"x outside [{a}, {b}]: {x[bad].ravel()[:5]}")
        return np.clip(x, a, b)

    def span(self, x: Array) -> Array:
        """Knot-span index s with knots[s] <= x < knots[s+1], restricted to the domain."""
        P = self.order
        s = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(s, P, P + self.interior_cells - 1)

    def local(self, x, deriv: int = 0, clamp: bool = False) -> tuple[Array, Array]:
        """Nonzero basis values (or derivatives) at each point.

        Returns ``(first, values)`` where ``values[n, k]`` is the ``deriv``-th
        derivative of function ``first[n] + k`` at ``x[n]``; shape ``(n, P+1)``.
        """
        if deriv < 0 or deriv > self.order:
            raise ValueError(f"deriv_order must lie in [0, {self.order}], got {deriv}")
        x = np.atleast_1d(self._check(x, clamp))
        s = self.span(x)
        ders = _ders_basis_funs(self.knots, self.order, s, x, deriv)
        return s - self.order, ders[deriv]

    def local_all(self, x, max_deriv: int, clamp: bool = False) -> tuple[Array, Array]:
        """Like :meth:`local` but returns all derivatives up to ``max_deriv``,
        shape ``(max_deriv+1, n, P+1)``."""
        if max_deriv < 0 or max_deriv > self.order:
            raise ValueError(f"deriv_order must lie in [0, {self.order}], got {max_deriv}")
        x = np.atleast_1d(self._check(x, clamp))
        s = self.span(x)
        return s - self.order, _ders_basis_funs(self.knots, self.order, s, x, max_deriv)

    def design_matrix(self, x, deriv: int = 0, clamp: bool = False) -> Array:
        """Dense ``(n_points, n_funcs)`` matrix of basis values."""
        first, vals = self.local(x, deriv, clamp)
        out = np.zeros((len(first), self.n_funcs))
        rows = np.arange(len(first))[:, None]
        out[rows, first[:, None] + np.arange(self.order + 1)] = vals
        return out

    def __call__(self, coeffs: Array, x, deriv: int = 0, clamp: bool = False) -> Array:
        """Evaluate the spline curve ``sum_c coeffs[c] B_c`` at ``x``."""
        first, vals = self.local(x, deriv, clamp)
        idx = first[:, None] + np.arange(self.order + 1)
        return np.einsum("nk,nk->n", vals, np.asarray(coeffs)[idx])

    # -- quadrature -------------------------------------------------------

    def quadrature(self, n_per_cell: Optional[int] = None) -> tuple[Array, Array]:
        """Composite Gauss-Legendre nodes and weights, ``order + 1`` per cell by default."""
        n = self.order + 1 if n_per_cell is None else n_per_cell
        return composite_gauss(self.breakpoints, n)

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "interior_cells": self.interior_cells,
            "domain": list(self.domain),
            "knots": [float(k) for k in self.knots],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplineBasis1D":
        return cls(int(d["order"]), int(d["interior_cells"]), tuple(d["domain"]),
                   np.array(d["knots"], dtype=np.float64))


def uniform_ghost_knots(order: int, cells: int, a: float, b: float) -> Array:
    h = (b - a) / cells
    k = np.arange(-order, cells + order + 1, dtype=np.float64)
    knots = a + k * h
    # pin the domain endpoints exactly
    knots[order] = a
    knots[order + cells] = b
    return knots


def composite_gauss(breaks: Sequence[float], n: int) -> tuple[Array, Array]:
    breaks = np.asarray(breaks, dtype=np.float64)
    g, w = np.polynomial.legendre.leggauss(n)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * g
    weights = half * w
    return nodes.ravel(), weights.ravel()


def _ders_basis_funs(U: Array, p: int, span: Array, x: Array, n: int) -> Array:
    """Nonzero basis functions and derivatives, vectorised over points.

    Direct transcription of the triangular-table scheme in Piegl & Tiller's
    algorithm A2.3; the trailing axis runs over points.
    Returns ``(n+1, npts, p+1)``.
    """
    npts = x.shape[0]
    ndu = np.zeros((p + 1, p + 1, npts))
    left = np.zeros((p + 1, npts))
    right = np.zeros((p + 1, npts))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - U[span + 1 - j]
        right[j] = U[span + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n + 1, p + 1, npts))
    ders[0] = ndu[:, p]
    a = np.zeros((2, p + 1, npts))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, n + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, n + 1):
        ders[k] *= fac
        fac *= p - k
    return np.transpose(ders, (0, 2, 1))


# -- functional API ----------------------------------------------------------

def build_basis(order: int, interior_cells: int, domain=(0.0, 1.0)) -> SplineBasis1D:
    return SplineBasis1D(order, interior_cells, tuple(domain))


def eval_basis(basis: SplineBasis1D, x: float, clamp: bool = False) -> Array:
    """All ``n_funcs`` basis values at a scalar point (at most ``P+1`` nonzero)."""
    return basis.design_matrix(np.array([x], dtype=np.float64), 0, clamp)[0]


def eval_basis_deriv(basis: SplineBasis1D, x: float, deriv_order: int,
                     clamp: bool = False) -> Array:
    return basis.design_matrix(np.array([x], dtype=np.float64), deriv_order, clamp)[0]


def _merged_breaks(*bases: SplineBasis1D) -> Array:
    return np.unique(np.concatenate([b.breakpoints for b in bases]))


def integral_matrix(left: SplineBasis1D, right: SplineBasis1D,
                    spec: IntegralMatrixSpec = IntegralMatrixSpec(),
                    weight: Optional[Callable[[Array], Array]] = None) -> Array:
    """Matrix of integrals of ``w * D^kl B_p * D^kr B_q`` over the shared domain.

    The optional ``weight`` multiplies the integrand; when it is a polynomial
    pass enough quadrature points to keep the rule exact.
    """
    if left.domain != right.domain:
        raise DomainError(f"domain mismatch: {left.domain} vs {right.domain}")
    kl, kr = spec.derivative_order_left, spec.derivative_order_right
    if kl > left.order or kr > right.order:
        raise ValueError("derivative order exceeds basis order")
    q = spec.quadrature_points_per_cell or max(left.order, right.order) + 1
    x, w = composite_gauss(_merged_breaks(left, right), q)
    if weight is not None:
        w = w * weight(x)
    Bl = left.design_matrix(x, kl)
    Br = right.design_matrix(x, kr)
    return (Bl * w[:, None]).T @ Br


def load_vector(basis: SplineBasis1D, f: Callable[[Array], Array], deriv: int = 0,
                n_per_cell: int = 10, weight: Optional[Callable[[Array], Array]] = None) -> Array:
    """Vector of integrals of ``w * D^k B_p * f`` with a Gauss rule per cell."""
    x, w = basis.quadrature(n_per_cell)
    if weight is not None:
        w = w * weight(x)
    return basis.design_matrix(x, deriv).T @ (w * f(x))
