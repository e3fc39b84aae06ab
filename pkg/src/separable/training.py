"""Supervised least-squares fitting of separable models."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import optimize

from .core import BasisCache, CpModel, InteractionModel
from .errors import DegenerateVariance, DimensionMismatch

log = logging.getLogger(__name__)

Array = np.ndarray
Model = Union[CpModel, InteractionModel]

OPTIMISERS = ("adam", "lbfgs", "adam_then_lbfgs", "als", "als_then_lbfgs")


class Divergence(FloatingPointError):
    """Training loss became non-finite."""


@dataclass
class Dataset:
    X: Array
    y: Array
    feature_bounds: list = None
    split_seed: int = 0
    y_clean: Optional[Array] = None
    target_bounds: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.shape[0] != self.y.shape[0] or self.y.shape[0] == 0:
            raise ValueError("X and y must be non-empty with matching lengths")
        if np.any(self.X < 0) or np.any(self.X > 1):
            raise ValueError("inputs must be normalised to [0, 1]")
        if self.y_clean is not None:
            self.y_clean = np.asarray(self.y_clean, dtype=np.float64).ravel()
            if self.y_clean.shape != self.y.shape:
                raise ValueError("y_clean must match y")
        if self.feature_bounds is None:
            self.feature_bounds = [(0.0, 1.0)] * self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dims(self) -> int:
        return self.X.shape[1]

    @property
    def targets_for_metrics(self) -> Array:
        return self.y if self.y_clean is None else self.y_clean

    def subset(self, idx: Array) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx],
                       y_clean=None if self.y_clean is None else self.y_clean[idx])

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        """Delimited text with a header row, plus a ``.meta.json`` sidecar."""
        path = Path(path)
        cols = [f"x{i + 1}" for i in range(self.dims)] + ["y"]
        data = [self.X, self.y[:, None]]
        if self.y_clean is not None:
            cols.append("y_clean")
            data.append(self.y_clean[:, None])
        np.savetxt(path, np.hstack(data), delimiter=",", header=",".join(cols), comments="",
                   fmt="%.17g")
        meta = {"feature_bounds": [list(map(float, b)) for b in self.feature_bounds],
                "target_bounds": None if self.target_bounds is None else list(self.target_bounds),
                "split_seed": self.split_seed, **self.meta}
        sidecar(path).write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, path) -> "Dataset":
        path = Path(path)
        with open(path) as fh:
            header = next(csv.reader(fh))
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xcols = [k for k, c in enumerate(header) if c.startswith("x")]
        ycol = header.index("y")
        y_clean = arr[:, header.index("y_clean")] if "y_clean" in header else None
        meta = json.loads(sidecar(path).read_text()) if sidecar(path).exists() else {}
        fb = [tuple(b) for b in meta.pop("feature_bounds", [])] or None
        tb = meta.pop("target_bounds", None)
        seed = meta.pop("split_seed", 0)
        return cls(arr[:, xcols], arr[:, ycol], fb, seed, y_clean,
                   None if tb is None else tuple(tb), meta)


def sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


@dataclass
class TrainConfig:
    optimiser: str = "adam_then_lbfgs"
    learning_rate: float = 1e-2
    max_epochs: int = 500
    batch_size: Optional[int] = None
    tol_rel_loss: float = 1e-12
    l2_penalty: float = 0.0
    seed: int = 0
    lbfgs_iters: int = 2000
    als_sweeps: int = 50
    train_fraction: float = 0.7

    def __post_init__(self):
        if self.optimiser not in OPTIMISERS:
            raise ValueError(f"optimiser must be one of {OPTIMISERS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")


@dataclass
class FitReport:
    final_train_mse: float
    test_mse: float
    test_r2: float
    epochs_run: int
    wall_time_s: float
    parameter_count: int

    def to_dict(self) -> dict:
        return asdict(self)


# -- metrics ------------------------------------------------------------------

def mse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}")
    return float(np.mean((y_true - y_pred) ** 2))


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}")
    if y_true.size < 2:
        raise ValueError("r2_score needs at least two samples")
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    if sst == 0.0:
        raise DegenerateVariance("y_true has zero variance")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / sst


def train_test_split(data: Dataset, train_fraction: float = 0.7,
                     seed: Optional[int] = None) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    seed = data.split_seed if seed is None else seed
    perm = np.random.default_rng(seed).permutation(data.n)
    n_train = int(round(train_fraction * data.n))
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


# -- optimisers -----------------------------------------------------------------

def _check_finite(loss: float) -> None:
    if not np.isfinite(loss):
        raise Divergence(f"non-finite training loss ({loss})")


def _adam(model: Model, cache: BasisCache, y: Array, cfg: TrainConfig,
          rng: np.random.Generator) -> int:
    theta = model.get_params()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    n = len(y)
    batch = cfg.batch_size or n
    prev = np.inf
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n) if batch < n else None
        for start in range(0, n, batch):
            if order is None:
                sub_cache, sub_y = cache, y
            else:
                idx = order[start:start + batch]
                sub_cache, sub_y = _slice_cache(cache, idx), y[idx]
            loss, g = model.loss_and_grad(sub_cache, sub_y, cfg.l2_penalty)
            _check_finite(loss)
            step += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** step)
            vhat = v / (1 - b2 ** step)
            theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
            model.set_params(theta)
        if batch >= n and np.isfinite(prev) and abs(prev - loss) <= cfg.tol_rel_loss * max(abs(prev), 1e-300):
            return epoch
        prev = loss
    return cfg.max_epochs


def _slice_cache(cache: BasisCache, idx: Array) -> BasisCache:
    sub = object.__new__(BasisCache)
    sub.n = len(idx)
    sub.B = [B[idx] for B in cache.B]
    sub.dB = None
    return sub


def _lbfgs(model: Model, cache: BasisCache, y: Array, cfg: TrainConfig) -> int:
    def fun(theta):
        model.set_params(theta)
        loss, g = model.loss_and_grad(cache, y, cfg.l2_penalty)
        _check_finite(loss)
        return loss, g

    res = optimize.minimize(fun, model.get_params(), jac=True, method="L-BFGS-B",
                            options={"maxiter": cfg.lbfgs_iters, "ftol": cfg.tol_rel_loss,
                                     "gtol": 1e-14, "maxcor": 30})
    model.set_params(res.x)
    return int(res.nit)


def _als(model: CpModel, cache: BasisCache, y: Array, cfg: TrainConfig) -> int:
    """Alternating least squares over per-dimension coefficient blocks.

    With identity activation the model is linear in any one dimension's
    coefficients, so each block update is an exact ridge solve.
    """
    if not isinstance(model, CpModel) or model.activation != "identity":
        raise ValueError("ALS fitting needs a CpModel with identity activation")
    n = len(y)
    r, d = model.rank, model.dims
    dense = [B.toarray() for B in cache.B]
    psi = np.stack([cache.B[i] @ model.coeffs[i].T for i in range(d)])   # (d, n, r)
    prev = np.inf
    sweeps = 0
    for sweep in range(1, cfg.als_sweeps + 1):
        sweeps = sweep
        # suffix[i] = prod_{m > i} psi[m]; the prefix is accumulated as dims update
        suffix = np.empty_like(psi)
        suffix[d - 1] = 1.0
        for i in range(d - 2, -1, -1):
            suffix[i] = suffix[i + 1] * psi[i + 1]
        prefix = np.ones((n, r))
        for i in range(d):
            others = prefix * suffix[i] * model.modal_weights
            Phi = (others[:, :, None] * dense[i][:, None, :]).reshape(n, -1)
            A = Phi.T @ Phi / n
            b = Phi.T @ y / n
            lam = cfg.l2_penalty + 1e-12 * np.trace(A) / A.shape[0]
            sol = np.linalg.solve(A + lam * np.eye(A.shape[0]), b)
            model.coeffs[i] = sol.reshape(r, -1)
            psi[i] = cache.B[i] @ model.coeffs[i].T
            prefix *= psi[i]
        del suffix
        _balance(model, psi)
        loss = float(np.mean((np.prod(psi, axis=0) @ model.modal_weights - y) ** 2))
        _check_finite(loss)
        if np.isfinite(prev) and abs(prev - loss) <= max(cfg.tol_rel_loss, 1e-10) * prev:
            break
        prev = loss
    return sweeps


def _balance(model: CpModel, psi: Array) -> None:
    """Rescale each mode's sub-atoms to a common RMS; the function is unchanged."""
    if model.dims == 1:
        return
    rms = np.sqrt(np.mean(psi ** 2, axis=1))            # (d, r)
    rms = np.where(rms > 0, rms, 1.0)
    target = np.exp(np.mean(np.log(rms), axis=0))       # geometric mean per mode
    scale = target[None, :] / rms
    for i in range(model.dims):
        model.coeffs[i] *= scale[i][:, None]
    psi *= scale[:, None, :]


def fit_supervised(model: Model, data: Union[Dataset, tuple], config: TrainConfig = None):
    """Least-squares fit. ``data`` is a Dataset (split 70/30 internally) or a (train, test) pair.

    Test metrics use noiseless targets when the dataset carries them.
    """
    config = config or TrainConfig()
    if isinstance(data, tuple):
        train, test = data
    else:
        train, test = train_test_split(data, config.train_fraction, data.split_seed)
    if train.dims != model.dims:
        raise DimensionMismatch(f"data has {train.dims} inputs, model expects {model.dims}")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    t0 = time.perf_counter()
    cache = model.cache(train.X)
    y = train.y
    epochs = 0
    opt = config.optimiser
    if opt in ("als", "als_then_lbfgs"):
        epochs += _als(model, cache, y, config)
    if opt in ("adam", "adam_then_lbfgs"):
        epochs += _adam(model, cache, y, config, rng)
    if opt in ("lbfgs", "adam_then_lbfgs", "als_then_lbfgs"):
        epochs += _lbfgs(model, cache, y, config)
    wall = time.perf_counter() - t0
    train_pred = _predict(model, cache)
    train_mse = mse(y, train_pred)
    _check_finite(train_mse)
    test_pred = model(test.X) if test.n else np.zeros(0)
    yt = test.targets_for_metrics
    report = FitReport(
        final_train_mse=train_mse,
        test_mse=mse(yt, test_pred) if test.n else float("nan"),
        test_r2=r2_score(yt, test_pred) if test.n >= 2 else float("nan"),
        epochs_run=epochs,
        wall_time_s=wall,
        parameter_count=model.parameter_count,
    )
    log.info("fit %s: train mse %.3e, test r2 %.6f", opt, report.final_train_mse, report.test_r2)
    return model, report


def _predict(model: Model, cache: BasisCache) -> Array:
    from .core import activate
    return activate(model.activation, model.pre_activation(cache))
