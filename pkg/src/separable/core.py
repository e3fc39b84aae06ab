"""Separable models: the CP class with B-spline sub-atoms and the general
interaction-object form it specialises.

A CP model of rank ``r`` over ``d`` inputs evaluates

    f(x) = rho( sum_j c_j * prod_i psi_ij(x_i) ),   psi_ij(t) = sum_c alpha[j, i, c] B_ic(t)

Coefficients are stored per input dimension as ``coeffs[i]`` with shape
``(r, n_funcs_i)``; the flat parameter vector runs over ``(j, i, c)`` in
row-major order, followed by the modal weights when those are trainable.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch
from .splines import SplineBasis1D, build_basis

Array = np.ndarray

ACTIVATIONS = ("identity", "tanh", "softplus")


def activate(name: str, s: Array) -> Array:
    if name == "identity":
        return s
    if name == "tanh":
        return np.tanh(s)
    if name == "softplus":
        return np.logaddexp(0.0, s)
    raise ValueError(f"unknown activation {name!r}")


def activate_deriv(name: str, s: Array) -> Array:
    if name == "identity":
        return np.ones_like(s)
    if name == "tanh":
        return 1.0 - np.tanh(s) ** 2
    if name == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * s))
    raise ValueError(f"unknown activation {name!r}")


def _excl_prod(a: Array, axis: int = -1) -> Array:
    """Product of all entries along ``axis`` except the one at each position."""
    a = np.ascontiguousarray(np.moveaxis(a, axis, 0))
    d = a.shape[0]
    out = np.empty_like(a)
    out[0] = 1.0
    for k in range(1, d):
        out[k] = out[k - 1] * a[k - 1]
    suf = np.ones(a.shape[1:])
    for k in range(d - 1, -1, -1):
        out[k] *= suf
        suf = suf * a[k]
    return np.moveaxis(out, 0, axis)


@dataclass
class EvalGradient:
    value: float
    d_input: Array
    d_params: Array


class BasisCache:
    """Per-dimension sparse design matrices for a fixed batch of points.

    Building these once per dataset keeps repeated evaluations during training
    down to sparse mat-vecs.
    """

    def __init__(self, bases: Sequence[SplineBasis1D], X: Array, clamp: bool = False,
                 derivs: bool = False):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(bases):
            raise DimensionMismatch(f"expected {len(bases)} columns, got {X.shape[1]}")
        self.n = X.shape[0]
        self.B = []
        self.dB = [] if derivs else None
        for i, basis in enumerate(bases):
            first, vals = basis.local_all(X[:, i], 1 if derivs else 0, clamp)
            self.B.append(self._csr(first, vals[0], basis))
            if derivs:
                self.dB.append(self._csr(first, vals[1], basis))

    @staticmethod
    def _csr(first, vals, basis):
        n, k = vals.shape
        cols = (first[:, None] + np.arange(k)).ravel()
        indptr = np.arange(0, n * k + 1, k)
        return sparse.csr_matrix((vals.ravel(), cols, indptr), shape=(n, basis.n_funcs))


# ---------------------------------------------------------------------------
# CP class
# ---------------------------------------------------------------------------

@dataclass
class CpModel:
    bases: tuple
    coeffs: list
    modal_weights: Array = None
    activation: str = "identity"
    train_weights: bool = False
    clamp: bool = False

    def __post_init__(self):
        self.bases = tuple(self.bases)
        self.coeffs = [np.array(c, dtype=np.float64) for c in self.coeffs]
        if len(self.coeffs) != len(self.bases):
            raise ValueError("one coefficient block per dimension is required")
        r = self.coeffs[0].shape[0]
        for b, c in zip(self.bases, self.coeffs):
            if c.shape != (r, b.n_funcs):
                raise ValueError(f"coefficient block shape {c.shape} != {(r, b.n_funcs)}")
        if self.modal_weights is None:
            self.modal_weights = np.ones(r)
        self.modal_weights = np.array(self.modal_weights, dtype=np.float64)
        if self.modal_weights.shape != (r,):
            raise ValueError("modal_weights must have length rank")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def dims(self) -> int:
        return len(self.bases)

    @property
    def rank(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def parameter_count(self) -> int:
        n = self.rank * sum(b.n_funcs for b in self.bases)
        return n + (self.rank if self.train_weights else 0)

    # -- construction -----------------------------------------------------

    @classmethod
    def random(cls, bases, rank: int, rng: np.random.Generator, low: float = 0.9,
               high: float = 1.1, **kw) -> "CpModel":
        coeffs = [rng.uniform(low, high, size=(rank, b.n_funcs)) for b in bases]
        return cls(tuple(bases), coeffs, **kw)

    @classmethod
    def uniform(cls, dims: int, rank: int, cells: int, order: int = 3,
                rng: Optional[np.random.Generator] = None, domains=None, **kw) -> "CpModel":
        rng = rng if rng is not None else np.random.default_rng(0)
        domains = domains or [(0.0, 1.0)] * dims
        bases = [build_basis(order, cells, dom) for dom in domains]
        return cls.random(bases, rank, rng, **kw)

    def copy(self) -> "CpModel":
        return CpModel(self.bases, [c.copy() for c in self.coeffs], self.modal_weights.copy(),
                       self.activation, self.train_weights, self.clamp)

    def extend_rank(self, new_rank: int, rng: np.random.Generator) -> "CpModel":
        """Append modes that contribute exactly zero, so the function is unchanged."""
        extra = new_rank - self.rank
        if extra < 0:
            raise ValueError("new_rank must not be smaller than the current rank")
        coeffs = []
        for i, (b, c) in enumerate(zip(self.bases, self.coeffs)):
            fresh = rng.uniform(0.9, 1.1, size=(extra, b.n_funcs))
            if i == 0:
                fresh[:] = 0.0
            coeffs.append(np.vstack([c, fresh]))
        w = np.concatenate([self.modal_weights, np.ones(extra)])
        return CpModel(self.bases, coeffs, w, self.activation, self.train_weights, self.clamp)

    # -- parameters -------------------------------------------------------

    def get_params(self) -> Array:
        flat = np.concatenate([self.coeffs[i][j] for j in range(self.rank)
                               for i in range(self.dims)])
        if self.train_weights:
            flat = np.concatenate([flat, self.modal_weights])
        return flat.copy()

    def set_params(self, theta: Array) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.parameter_count,):
            raise ValueError(f"expected {self.parameter_count} parameters, got {theta.shape}")
        pos = 0
        for j in range(self.rank):
            for i in range(self.dims):
                n = self.bases[i].n_funcs
                self.coeffs[i][j] = theta[pos:pos + n]
                pos += n
        if self.train_weights:
            self.modal_weights = theta[pos:pos + self.rank].copy()

    def with_params(self, theta: Array) -> "CpModel":
        m = self.copy()
        m.set_params(theta)
        return m

    def _flatten_grad(self, g_blocks: list, g_w: Optional[Array]) -> Array:
        """``g_blocks[i]`` has shape (r, n_i); returns the (j, i, c) flat order."""
        parts = [g_blocks[i][j] for j in range(self.rank) for i in range(self.dims)]
        if self.train_weights:
            parts.append(g_w)
        return np.concatenate(parts)

    # -- evaluation -------------------------------------------------------

    def cache(self, X: Array, derivs: bool = False) -> BasisCache:
        return BasisCache(self.bases, X, clamp=self.clamp, derivs=derivs)

    def sub_atoms(self, cache: BasisCache) -> Array:
        """Sub-atom values, shape ``(n, r, d)``."""
        return np.stack([cache.B[i] @ self.coeffs[i].T for i in range(self.dims)], axis=-1)

    def pre_activation(self, cache: BasisCache) -> Array:
        psi = self.sub_atoms(cache)
        return np.prod(psi, axis=-1) @ self.modal_weights

    def __call__(self, X: Array) -> Array:
        return cp_eval_batch(self, X)

    def loss_and_grad(self, cache: BasisCache, y: Array, l2: float = 0.0,
                      weights: Optional[Array] = None) -> tuple[float, Array]:
        """Mean squared error and its gradient w.r.t. the flat parameter vector."""
        psi = self.sub_atoms(cache)
        excl = _excl_prod(psi, axis=-1)                     # (n, r, d)
        modes = psi[..., 0] * excl[..., 0]                  # (n, r)
        s = modes @ self.modal_weights
        resid = activate(self.activation, s) - y
        w = np.full(len(y), 1.0 / len(y)) if weights is None else weights
        loss = float(np.sum(w * resid ** 2))
        gs = 2.0 * w * resid * activate_deriv(self.activation, s)   # dL/ds, (n,)
        g_blocks = []
        for i in range(self.dims):
            G = gs[:, None] * excl[..., i] * self.modal_weights    # (n, r)
            g_blocks.append(np.asarray((cache.B[i].T @ G).T))
        g_w = modes.T @ gs if self.train_weights else None
        grad = self._flatten_grad(g_blocks, g_w)
        if l2 > 0:
            theta = self.get_params()
            loss += l2 * float(theta @ theta)
            grad = grad + 2.0 * l2 * theta
        return loss, grad

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "rank": self.rank,
            "activation": self.activation,
            "train_weights": self.train_weights,
            "clamp": self.clamp,
            "modal_weights": [float(v) for v in self.modal_weights],
            "bases": [b.to_dict() for b in self.bases],
            "coeffs": [[[float(v) for v in self.coeffs[i][j]] for i in range(self.dims)]
                       for j in range(self.rank)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CpModel":
        bases = [SplineBasis1D.from_dict(b) for b in d["bases"]]
        rank, dims = int(d["rank"]), int(d["dims"])
        if len(bases) != dims:
            raise ValueError("dims does not match the number of bases")
        coeffs = [np.array([d["coeffs"][j][i] for j in range(rank)], dtype=np.float64)
                  for i in range(dims)]
        return cls(bases, coeffs, np.array(d["modal_weights"], dtype=np.float64),
                   d["activation"], bool(d.get("train_weights", False)), bool(d.get("clamp", False)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "CpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_point(model, x) -> Array:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.dims:
        raise DimensionMismatch(f"expected a point with {model.dims} coordinates, got {x.shape[0]}")
    return x[None, :]


def _as_batch(model, X) -> Array:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dims:
        raise DimensionMismatch(f"expected an (n, {model.dims}) array, got shape {X.shape}")
    return X


def cp_eval(model: CpModel, x) -> float:
    return float(cp_eval_batch(model, _as_point(model, x))[0])


def cp_eval_batch(model: CpModel, X) -> Array:
    X = _as_batch(model, X)
    s = model.pre_activation(model.cache(X))
    return activate(model.activation, s)


def cp_gradient_batch(model: CpModel, X) -> tuple[Array, Array]:
    """Values and input gradients, shapes ``(n,)`` and ``(n, d)``."""
    X = _as_batch(model, X)
    cache = model.cache(X, derivs=True)
    psi = model.sub_atoms(cache)
    dpsi = np.stack([cache.dB[i] @ model.coeffs[i].T for i in range(model.dims)], axis=-1)
    excl = _excl_prod(psi, axis=-1)
    s = (psi[..., 0] * excl[..., 0]) @ model.modal_weights
    ds = np.einsum("nri,nri,r->ni", dpsi, excl, model.modal_weights)
    rho_p = activate_deriv(model.activation, s)
    return activate(model.activation, s), rho_p[:, None] * ds


def cp_gradient(model: CpModel, x) -> EvalGradient:
    X = _as_point(model, x)
    cache = model.cache(X, derivs=True)
    psi = model.sub_atoms(cache)[0]                      # (r, d)
    dpsi = np.array([cache.dB[i] @ model.coeffs[i].T for i in range(model.dims)])[:, 0, :].T
    excl = _excl_prod(psi, axis=-1)
    w = model.modal_weights
    modes = psi[:, 0] * excl[:, 0]
    s = float(modes @ w)
    rho_p = float(activate_deriv(model.activation, np.array(s)))
    d_input = rho_p * np.einsum("ri,ri,r->i", dpsi, excl, w)
    g_blocks = []
    for i in range(model.dims):
        Bi = cache.B[i].toarray()[0]                     # (n_i,)
        g_blocks.append(rho_p * (w * excl[:, i])[:, None] * Bi[None, :])
    g_w = rho_p * modes if model.train_weights else None
    return EvalGradient(float(activate(model.activation, np.array(s))), d_input,
                        model._flatten_grad(g_blocks, g_w))


# ---------------------------------------------------------------------------
# General interaction-object form
# ---------------------------------------------------------------------------

@dataclass
class InteractionModel:
    """rho( sum_S c_S * prod_{i in S} psi_{S,i}(x_i) ) over a support of coordinate subsets.

    ``atoms[s]`` holds one coefficient vector per coordinate of ``support[s]``.
    """
    bases: tuple
    support: tuple
    coefficients: Array
    atoms: list
    activation: str = "identity"
    max_order: Optional[int] = None
    clamp: bool = False

    def __post_init__(self):
        self.bases = tuple(self.bases)
        self.support = tuple(tuple(sorted(int(i) for i in S)) for S in self.support)
        self.coefficients = np.array(self.coefficients, dtype=np.float64)
        self.atoms = [[np.array(a, dtype=np.float64) for a in atom] for atom in self.atoms]
        d = len(self.bases)
        k = self.max_order if self.max_order is not None else max((len(S) for S in self.support), default=1)
        self.max_order = k
        if k > d:
            raise ValueError("max_order cannot exceed the number of dimensions")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support subsets must be distinct")
        for S, atom in zip(self.support, self.atoms):
            if not 1 <= len(S) <= k:
                raise ValueError(f"subset {S} violates 1 <= |S| <= {k}")
            if any(i < 0 or i >= d for i in S):
                raise ValueError(f"subset {S} indexes outside [0, {d})")
            if len(atom) != len(S):
                raise ValueError("each atom needs one sub-atom per coordinate in its subset")
            for i, a in zip(S, atom):
                if a.shape != (self.bases[i].n_funcs,):
                    raise ValueError("sub-atom coefficient length mismatch")
        if self.coefficients.shape != (len(self.support),):
            raise ValueError("one coefficient per support subset is required")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def dims(self) -> int:
        return len(self.bases)

    @property
    def parameter_count(self) -> int:
        return len(self.support) + sum(a.size for atom in self.atoms for a in atom)

    @classmethod
    def random(cls, bases, support, rng: np.random.Generator, **kw) -> "InteractionModel":
        atoms = [[rng.uniform(0.9, 1.1, bases[i].n_funcs) for i in S] for S in support]
        coeffs = rng.uniform(0.9, 1.1, len(support)) / max(len(support), 1)
        return cls(tuple(bases), tuple(support), coeffs, atoms, **kw)

    def get_params(self) -> Array:
        return np.concatenate([self.coefficients] + [a for atom in self.atoms for a in atom])

    def set_params(self, theta: Array) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.parameter_count,):
            raise ValueError(f"expected {self.parameter_count} parameters")
        m = len(self.support)
        self.coefficients = theta[:m].copy()
        pos = m
        for atom in self.atoms:
            for a in atom:
                a[:] = theta[pos:pos + a.size]
                pos += a.size

    def copy(self) -> "InteractionModel":
        return InteractionModel(self.bases, self.support, self.coefficients.copy(),
                                [[a.copy() for a in atom] for atom in self.atoms],
                                self.activation, self.max_order, self.clamp)

    def with_params(self, theta: Array) -> "InteractionModel":
        m = self.copy()
        m.set_params(theta)
        return m

    def cache(self, X: Array, derivs: bool = False) -> BasisCache:
        return BasisCache(self.bases, X, clamp=self.clamp, derivs=derivs)

    def _atom_values(self, cache: BasisCache):
        """Per subset: sub-atom values ``(n, |S|)`` and the atom product ``(n,)``."""
        out = []
        for S, atom in zip(self.support, self.atoms):
            vals = np.stack([cache.B[i] @ a for i, a in zip(S, atom)], axis=-1)
            out.append(vals)
        return out

    def pre_activation(self, cache: BasisCache) -> Array:
        s = np.zeros(cache.n)
        for c, vals in zip(self.coefficients, self._atom_values(cache)):
            s += c * np.prod(vals, axis=-1)
        return s

    def __call__(self, X: Array) -> Array:
        return interaction_eval_batch(self, X)

    def loss_and_grad(self, cache: BasisCache, y: Array, l2: float = 0.0,
                      weights: Optional[Array] = None) -> tuple[float, Array]:
        vals = self._atom_values(cache)
        prods = np.stack([np.prod(v, axis=-1) for v in vals], axis=-1)   # (n, m)
        s = prods @ self.coefficients
        resid = activate(self.activation, s) - y
        w = np.full(len(y), 1.0 / len(y)) if weights is None else weights
        loss = float(np.sum(w * resid ** 2))
        gs = 2.0 * w * resid * activate_deriv(self.activation, s)
        parts = [prods.T @ gs]
        for c, S, v in zip(self.coefficients, self.support, vals):
            excl = _excl_prod(v, axis=-1)
            for k, i in enumerate(S):
                parts.append(cache.B[i].T @ (gs * c * excl[:, k]))
        grad = np.concatenate(parts)
        if l2 > 0:
            theta = self.get_params()
            loss += l2 * float(theta @ theta)
            grad = grad + 2.0 * l2 * theta
        return loss, grad

    def gradient(self, x) -> EvalGradient:
        X = _as_point(self, x)
        cache = self.cache(X, derivs=True)
        s = 0.0
        d_in = np.zeros(self.dims)
        terms = []
        for c, S, atom in zip(self.coefficients, self.support, self.atoms):
            v = np.array([(cache.B[i] @ a)[0] for i, a in zip(S, atom)])
            dv = np.array([(cache.dB[i] @ a)[0] for i, a in zip(S, atom)])
            excl = _excl_prod(v)
            s += c * np.prod(v)
            for k, i in enumerate(S):
                d_in[i] += c * dv[k] * excl[k]
            terms.append((c, S, v, excl))
        rho_p = float(activate_deriv(self.activation, np.array(s)))
        parts = [rho_p * np.array([np.prod(t[2]) for t in terms])]
        for c, S, v, excl in terms:
            for k, i in enumerate(S):
                parts.append(rho_p * c * excl[k] * cache.B[i].toarray()[0])
        return EvalGradient(float(activate(self.activation, np.array(s))), rho_p * d_in,
                            np.concatenate(parts))


def interaction_eval_batch(model: InteractionModel, X) -> Array:
    X = _as_batch(model, X)
    if not model.support:
        raise ValueError("interaction model has empty support")
    return activate(model.activation, model.pre_activation(model.cache(X)))


def interaction_eval(model: InteractionModel, x) -> float:
    return float(interaction_eval_batch(model, _as_point(model, x))[0])


def additive_model(bases, rng: np.random.Generator, **kw) -> InteractionModel:
    """Generalised additive model: one univariate atom per coordinate."""
    return InteractionModel.random(bases, [(i,) for i in range(len(bases))], rng, max_order=1, **kw)


def quadratic_model(bases, rng: np.random.Generator, **kw) -> InteractionModel:
    """Generalised quadratic model: all singletons and all coordinate pairs."""
    d = len(bases)
    support = [(i,) for i in range(d)] + list(itertools.combinations(range(d), 2))
    return InteractionModel.random(bases, support, rng, max_order=min(2, d), **kw)


def cp_as_interaction(model: CpModel) -> InteractionModel:
    """Rank-1 CP model expressed as a single full-support interaction atom."""
    if model.rank != 1:
        raise ValueError("only rank-1 CP models map onto a single full-support atom")
    S = tuple(range(model.dims))
    return InteractionModel(model.bases, (S,), model.modal_weights.copy(),
                            [[c[0].copy() for c in model.coeffs]], model.activation,
                            max_order=model.dims, clamp=model.clamp)


def embed_interaction_tensor(model: InteractionModel) -> dict:
    """Sparse order-d embedding of the interaction coefficients.

    Subset ``S`` (sorted) lands at the index ``S`` padded to length ``d`` by
    repeating its last coordinate, so singletons sit on the super-diagonal
    and a pair ``{i, j}`` at ``(i, j, j, ...)``.
    """
    d = model.dims
    out = {}
    for S, c in zip(model.support, model.coefficients):
        if c == 0:
            continue
        idx = tuple(S) + (S[-1],) * (d - len(S))
        out[idx] = float(c)
    return out
