"""Weak-residual solve of inviscid Burgers ``u_t + u u_x = 0`` on ``[0,1] x [0,T]``.

Trial functions are

    u(x, t) = u0(x) + sum_{m,n} C[m, n] sin(m pi x) phi_n(t)

with ``phi_n`` the orthonormal (shifted Chebyshev) polynomial of degree ``n``
minus its value at ``t = 0``; every member therefore matches the initial
state and the zero walls exactly. Test functions are ``sin(k pi x) q_l(t)``
with ``q_l`` the orthonormal polynomials of degree ``0 .. N_t - 1``.

Because trial and test functions are products of 1D functions, each weak
residual ``R[k, l] = int int v_kl (u_t + u u_x)`` reduces to contractions of
1D quadrature tensors, including the trilinear ones ``int S_k S_m S'_m'`` and
``int q_l phi_n phi'_n'``.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import minimize

from ..errors import NonFiniteResidual, PostShockQuery
from .problem import SineMode

Array = np.ndarray


def _orthonormal_cheb(T: float, degree: int, nq: int = 256) -> Array:
    """Chebyshev-series coefficients (columns) of the polynomials of degree
    0..degree that are orthonormal in L2(0, T)."""
    g, w = np.polynomial.legendre.leggauss(max(nq, degree + 2))
    s = g                                   # reference variable on [-1, 1]
    w = 0.5 * T * w
    V = cheb.chebvander(s, degree)
    _, R = np.linalg.qr(np.sqrt(w)[:, None] * V)
    coef = np.linalg.inv(R)
    sign = np.sign(np.diag(R))
    return coef * sign[None, :]


@dataclass
class SpectralTrial:
    nx: int
    nt: int
    T: float = 0.3
    u0: Callable = field(default_factory=lambda: SineMode(1))
    coeffs: Optional[Array] = None
    residual_norm: float = float("nan")
    converged: bool = False
    iterations: int = 0
    history: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def __post_init__(self):
        if self.nx < 1 or self.nt < 1:
            raise ValueError("nx and nt must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.coeffs is None:
            self.coeffs = np.zeros((self.nx, self.nt))
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.nx, self.nt):
            raise ValueError("coefficient matrix must have shape (nx, nt)")
        self._poly = _orthonormal_cheb(self.T, self.nt)

    # -- 1D bases ---------------------------------------------------------

    def _ref(self, t):
        return 2.0 * np.asarray(t, dtype=np.float64) / self.T - 1.0

    def orthonormal(self, t, deriv: int = 0, n: Optional[int] = None) -> Array:
        """Orthonormal polynomials of degree 0..n (default nt) at ``t``."""
        c = self._poly if n is None or n <= self.nt + 1 else _orthonormal_cheb(self.T, n)
        if n is not None:
            c = c[:, :n]
        if deriv:
            c = cheb.chebder(c, deriv, axis=0) * (2.0 / self.T) ** deriv
        return cheb.chebval(self._ref(t), c).T if c.size else np.zeros((len(t), 0))

    def time_basis(self, t, deriv: int = 0) -> Array:
        t = np.atleast_1d(t)
        p = self.orthonormal(t, deriv)[:, 1:]
        if deriv == 0:
            p = p - self.orthonormal(np.zeros(1))[:, 1:]
        return p

    def space_basis(self, x, deriv: int = 0) -> Array:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        k = np.arange(1, self.nx + 1)
        w = k * np.pi
        return w ** deriv * np.sin(np.outer(x, w) + deriv * np.pi / 2)

    # -- evaluation -------------------------------------------------------

    def grid(self, x, t) -> Array:
        """Field on the tensor grid ``x`` by ``t``, shape ``(len(x), len(t))``."""
        x, t = np.atleast_1d(x), np.atleast_1d(t)
        lift = np.asarray(self.u0(x), dtype=np.float64)[:, None]
        return lift + self.space_basis(x) @ self.coeffs @ self.time_basis(t).T

    def __call__(self, x, t) -> Array:
        x, t = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64))
        S = self.space_basis(x.ravel())
        P = self.time_basis(t.ravel())
        vals = np.asarray(self.u0(x.ravel())) + np.einsum("pm,mn,pn->p", S, self.coeffs, P)
        return vals.reshape(x.shape)


class WeakResidual:
    """Quadrature tensors of the weak form for one trial space."""

    def __init__(self, trial: SpectralTrial, nqx: Optional[int] = None, nqt: Optional[int] = None,
                 test_nx: Optional[int] = None, test_nt: Optional[int] = None):
        test_nx = test_nx or trial.nx
        test_nt = test_nt or trial.nt
        nqx = nqx or max(64, 2 * trial.nx + test_nx + 32)
        nqt = nqt or 2 * trial.nt + test_nt + 8
        g, w = np.polynomial.legendre.leggauss(nqx)
        x, wx = 0.5 * (g + 1), 0.5 * w
        g, w = np.polynomial.legendre.leggauss(nqt)
        t, wt = 0.5 * trial.T * (g + 1), 0.5 * trial.T * w
        S, Sx = trial.space_basis(x), trial.space_basis(x, 1)
        u0, u0x = np.asarray(trial.u0(x)), np.asarray(trial.u0(x, 1))
        q = trial.orthonormal(t, n=test_nt)
        ph, pht = trial.time_basis(t), trial.time_basis(t, 1)
        k = np.arange(1, test_nx + 1) * np.pi
        Sw = np.sin(np.outer(x, k)) * wx[:, None]
        self.X0 = Sw.T @ S
        self.Y = Sw.T @ (u0[:, None] * Sx + u0x[:, None] * S)
        self.a = Sw.T @ (u0 * u0x)
        self.X3 = np.einsum("pk,pm,pn->kmn", Sw, S, Sx)
        qw = q * wt[:, None]
        self.T1 = qw.T @ pht
        self.T0 = qw.T @ ph
        self.t0 = qw.sum(axis=0)
        self.Tt = np.einsum("pl,pn,pm->lnm", qw, ph, ph)
        self.shape = trial.coeffs.shape
        self._X3t = np.ascontiguousarray(self.X3.transpose(0, 2, 1))
        self._Ttf = self.Tt.reshape(self.Tt.shape[0], -1)

    # The quadratic part is sum X3[k,a,b] C[a,c] C[b,d] Tt[l,c,d] with Tt
    # symmetric in (c, d); the contractions below keep everything in matmuls.

    def _halves(self, C: Array) -> tuple[Array, Array]:
        F = self.X3 @ C                       # (k, a, d): sum_b X3[k,a,b] C[b,d]
        E = self._X3t @ C                     # (k, b, c): sum_a X3[k,a,b] C[a,c]
        return F, E

    def residual(self, C: Array, E: Optional[Array] = None) -> Array:
        if E is None:
            E = self._X3t @ C
        H = np.swapaxes(E, 1, 2) @ C          # (k, c, d)
        quad = H.reshape(H.shape[0], -1) @ self._Ttf.T
        return self.X0 @ C @ self.T1.T + self.Y @ C @ self.T0.T + np.outer(self.a, self.t0) + quad

    def value_and_grad(self, flat: Array) -> tuple[float, Array]:
        C = flat.reshape(self.shape)
        F, E = self._halves(C)
        R = self.residual(C, E)
        A = (R @ self._Ttf).reshape(R.shape[0], *self.Tt.shape[1:])
        g = self.X0.T @ R @ self.T1 + self.Y.T @ R @ self.T0
        g = g + np.tensordot(F + E, A, axes=([0, 2], [0, 2]))
        return float(np.sum(R * R)), 2.0 * g.ravel()

    def jacobian(self, C: Array) -> Array:
        F, E = self._halves(C)
        J = np.einsum("ka,lc->klac", self.X0, self.T1) + np.einsum("ka,lc->klac", self.Y, self.T0)
        J += np.tensordot(F + E, self.Tt, axes=([2], [2])).transpose(0, 2, 1, 3)
        return J.reshape(-1, C.size)


@dataclass
class BurgersConfig:
    """``method`` is ``"lbfgs"`` (quasi-Newton on the squared residual) or
    ``"gauss_newton"`` (least-squares steps with backtracking). The test space
    defaults to the trial sizes."""
    method: str = "lbfgs"
    max_iters: int = 20000
    gtol: float = 1e-14
    residual_tol: float = 1e-10
    maxcor: int = 50
    test_nx: Optional[int] = None
    test_nt: Optional[int] = None


def burgers_weak_solve(trial: SpectralTrial, config: BurgersConfig = BurgersConfig()) -> SpectralTrial:
    """Minimise the sum of squared weak residuals over the trial coefficients."""
    t0 = time.perf_counter()
    form = WeakResidual(trial, test_nx=config.test_nx, test_nt=config.test_nt)
    x0 = trial.coeffs.ravel().copy()
    history = []
    if config.method == "lbfgs":
        def fun(v):
            f, g = form.value_and_grad(v)
            history.append(f)
            return f, g
        res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                       options=dict(maxiter=config.max_iters, maxfun=2 * config.max_iters,
                                    ftol=0.0, gtol=config.gtol, maxcor=config.maxcor))
        C, iters = res.x, int(res.nit)
    elif config.method == "gauss_newton":
        C, iters = x0, 0
        for iters in range(1, config.max_iters + 1):
            R = form.residual(C.reshape(form.shape)).ravel()
            history.append(float(R @ R))
            if np.sqrt(history[-1]) <= config.residual_tol:
                break
            J = form.jacobian(C.reshape(form.shape))
            step = np.linalg.lstsq(J, R, rcond=None)[0]
            # backtracking on the squared residual
            alpha = 1.0
            while alpha > 1e-6:
                trial_R = form.residual((C - alpha * step).reshape(form.shape)).ravel()
                if trial_R @ trial_R < history[-1]:
                    break
                alpha *= 0.5
            C = C - alpha * step
    else:
        raise ValueError(f"unknown method {config.method!r}")
    if not np.all(np.isfinite(C)):
        raise NonFiniteResidual("weak solve produced non-finite coefficients")
    C = C.reshape(form.shape)
    rn = float(np.linalg.norm(form.residual(C)))
    ok = rn <= config.residual_tol
    if not ok:
        warnings.warn(f"weak residual stalled at {rn:.3e} after {iters} iterations", RuntimeWarning)
    return replace(trial, coeffs=C, residual_norm=rn, converged=ok, iterations=iters,
                   history=history, wall_time_s=time.perf_counter() - t0)


def shock_time(u0: Callable, n: int = 4097) -> float:
    """First crossing time ``-1 / min u0'`` (infinite when ``u0`` never decreases)."""
    x = np.linspace(0.0, 1.0, n)
    slope = float(np.min(u0(x, 1)))
    return np.inf if slope >= 0 else -1.0 / slope


def burgers_characteristics_oracle(u0: Callable, x, t) -> Array:
    """Pre-shock solution: solve ``x = xi + u0(xi) t`` for ``xi`` by bisection."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64))
    if np.any(t >= shock_time(u0)):
        raise PostShockQuery("characteristics have crossed; the solution is multivalued")
    lo, hi = np.zeros(x.shape), np.ones(x.shape)
    f = lambda xi: xi + u0(xi) * t - x
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        if np.max(hi - lo) <= 4 * np.finfo(float).eps:
            break
    return u0(0.5 * (lo + hi))
