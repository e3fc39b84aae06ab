"""Error-versus-size sweeps over (rank, resolution) grids."""
from __future__ import annotations

import io
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import NonFiniteResidual
from .als import AlsConfig, als_solve
from .problem import VariationalProblem
from .reference import l2_error, semi_analytic_reference

COLUMNS = ("R", "C", "N", "error", "wall_time_s", "status")


@dataclass
class ScalingRow:
    rank: int
    resolution: int
    n_params: int
    error: float
    wall_time_s: float
    status: str = "ok"
    sweeps: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok" and np.isfinite(self.error) and self.error > 0


def _loglog_slope(n, e) -> float:
    if len(n) < 2:
        return float("nan")
    return float(np.polyfit(np.log(n), np.log(e), 1)[0])


@dataclass
class ScalingStudy:
    rows: list = field(default_factory=list)

    def isoline(self, rank: int) -> list:
        return sorted((r for r in self.rows if r.rank == rank and r.ok), key=lambda r: r.resolution)

    def isoline_slope(self, rank: int) -> float:
        """Steepest log-log decay between consecutive resolutions at fixed rank.

        Errors along an isoline drop at the approximation rate until the rank
        (or the quadrature) saturates them; the steepest consecutive segment is
        the pre-saturation rate. NaN with fewer than two points.
        """
        pts = self.isoline(rank)
        if len(pts) < 2:
            return float("nan")
        c = np.log([p.resolution for p in pts])
        e = np.log([p.error for p in pts])
        return float(np.min(np.diff(e) / np.diff(c)))

    def isoline_slopes(self) -> dict:
        return {r: self.isoline_slope(r) for r in sorted({row.rank for row in self.rows})}

    def frontier(self) -> list:
        """Pareto points: each has a lower error than every smaller model."""
        best, out = np.inf, []
        for r in sorted((r for r in self.rows if r.ok), key=lambda r: (r.n_params, r.error)):
            if r.error < best:
                out.append(r)
                best = r.error
        return out

    def frontier_slope(self) -> float:
        pts = self.frontier()
        return _loglog_slope([p.n_params for p in pts], [p.error for p in pts])

    def table(self) -> str:
        buf = io.StringIO()
        buf.write("\t".join(COLUMNS) + "\n")
        for r in self.rows:
            buf.write(f"{r.rank}\t{r.resolution}\t{r.n_params}\t{r.error!r}\t{r.wall_time_s:.3f}\t{r.status}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return dict(rows=[asdict(r) for r in self.rows],
                    isoline_slopes={str(k): v for k, v in self.isoline_slopes().items()},
                    frontier_slope=self.frontier_slope())


def parameter_count(problem: VariationalProblem, rank: int, resolution: int, order: int) -> int:
    return rank * problem.dims * (resolution + order)


def scaling_study(problem: VariationalProblem, ranks: Sequence[int], resolutions: Sequence[int],
                  base: AlsConfig = AlsConfig(), reference: Optional[Callable] = None,
                  error_kwargs: Optional[dict] = None, warm_start: bool = True,
                  progress: Optional[Callable] = None) -> ScalingStudy:
    """Solve at every (rank, resolution) pair and record the L2 error.

    Ranks are visited in increasing order at each resolution; with
    ``warm_start`` each solve starts from the previous rank's model padded
    with new modes. A failing solve is recorded with its message and the
    sweep goes on. ``reference`` defaults to the free-space plume proxy.
    """
    ranks, resolutions = sorted(set(ranks)), sorted(set(resolutions))
    if not ranks or not resolutions:
        raise ValueError("ranks and resolutions must be non-empty")
    if reference is None:
        reference = lambda X: semi_analytic_reference(problem, X)
    error_kwargs = dict(error_kwargs or {})
    study = ScalingStudy()
    for C in resolutions:
        prev = None
        for R in ranks:
            cfg = replace(base, rank=R, resolution=C)
            n = parameter_count(problem, R, C, cfg.order)
            t0 = time.perf_counter()
            try:
                sol = als_solve(problem, cfg, init=prev if warm_start else None)
                err = l2_error(sol, reference, **error_kwargs)
                row = ScalingRow(R, C, n, err, time.perf_counter() - t0, "ok", sol.sweeps_run)
                prev = sol.model
            except (NonFiniteResidual, np.linalg.LinAlgError, ValueError) as exc:
                row = ScalingRow(R, C, n, float("nan"), time.perf_counter() - t0,
                                 f"failed: {type(exc).__name__}: {exc}")
                prev = None
            study.rows.append(row)
            if progress is not None:
                progress(row)
    return study


def read_table(text: str) -> list:
    """Parse the output of :meth:`ScalingStudy.table` back into rows."""
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or tuple(lines[0].split("\t")) != COLUMNS:
        raise ValueError("not a scaling table")
    rows = []
    for ln in lines[1:]:
        R, C, N, e, w, s = ln.split("\t", 5)
        rows.append(ScalingRow(int(R), int(C), int(N), float(e), float(w), s))
    return rows
