import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import separable.variational.scaling as scaling
from separable.errors import NonFiniteResidual
from separable.variational import AlsConfig, ScalingRow, ScalingStudy, poisson_nd, scaling_study
from separable.variational.scaling import read_table


def poisson_exact(d):
    def u(X):
        X = np.atleast_2d(X)
        a = np.prod(np.sin(np.pi * X), axis=1) / (d * np.pi ** 2)
        b = 0.5 * np.prod(np.sin(2 * np.pi * X), axis=1) / (4 * d * np.pi ** 2)
        return a + b
    return u


def rows_from(errors):
    """errors: {(R, C): e} on a 2D problem with cubic splines."""
    return ScalingStudy([ScalingRow(R, C, R * 2 * (C + 3), e, 0.0) for (R, C), e in errors.items()])


def test_isoline_slope_is_steepest_segment():
    st_ = rows_from({(1, 4): 1e-1, (1, 8): 1e-2, (1, 16): 1e-3 * 0.8, (1, 32): 7e-4})
    steep = np.log(0.8e-3 / 1e-2) / np.log(2)
    assert st_.isoline_slope(1) == pytest.approx(steep)
    assert np.isnan(rows_from({(1, 4): 1e-1}).isoline_slope(1))


@settings(max_examples=40, deadline=None)
@given(st.floats(-6, -0.5), st.floats(1e-3, 10))
def test_pure_power_law_recovered(p, a):
    Cs = [4, 8, 16, 32]
    s = rows_from({(2, C): a * C ** p for C in Cs})
    assert s.isoline_slope(2) == pytest.approx(p, rel=1e-9, abs=1e-9)
    # every point is on the frontier, and N = 4 (C + 3) is not a pure power of C
    n = np.array([r.n_params for r in s.rows], dtype=float)
    e = np.array([r.error for r in s.rows])
    assert s.frontier_slope() == pytest.approx(np.polyfit(np.log(n), np.log(e), 1)[0])


def test_frontier_is_lower_envelope():
    s = rows_from({(1, 4): 5e-2, (2, 4): 6e-2, (1, 8): 1e-2, (4, 4): 2e-2, (2, 8): 3e-3})
    got = [(r.rank, r.resolution) for r in s.frontier()]
    # N: (1,4)=14 (2,4)=28 (1,8)=22 (4,4)=56 (2,8)=44
    assert got == [(1, 4), (1, 8), (2, 8)]


def test_failed_rows_are_skipped_in_fits():
    s = rows_from({(1, 4): 1e-1, (1, 8): 1e-2})
    s.rows.append(ScalingRow(1, 16, 38, float("nan"), 0.0, "failed: boom"))
    assert s.isoline_slope(1) == pytest.approx(np.log(0.1) / np.log(2))
    assert len(s.frontier()) == 2


def test_table_round_trip():
    s = rows_from({(1, 4): 0.1234567890123, (2, 8): 3.3e-7})
    s.rows.append(ScalingRow(4, 8, 88, float("nan"), 1.5, "failed: LinAlgError: singular"))
    back = read_table(s.table())
    assert [(r.rank, r.resolution, r.n_params, r.status) for r in back] == \
        [(r.rank, r.resolution, r.n_params, r.status) for r in s.rows]
    npt.assert_array_equal([r.error for r in back], [r.error for r in s.rows])
    assert s.table().splitlines()[0] == "R\tC\tN\terror\twall_time_s\tstatus"
    with pytest.raises(ValueError):
        read_table("a\tb\n")


def test_study_on_poisson():
    p = poisson_nd(2)
    s = scaling_study(p, [1, 2], [4, 8, 16], AlsConfig(max_sweeps=40, rel_residual_tol=1e-12),
                      reference=poisson_exact(2), error_kwargs=dict(quadrature_per_dim=6, cells=8))
    assert [(r.rank, r.resolution) for r in s.rows] == [(1, 4), (2, 4), (1, 8), (2, 8), (1, 16), (2, 16)]
    assert all(r.ok for r in s.rows)
    assert [r.n_params for r in s.rows] == [14, 28, 22, 44, 38, 76]
    for C in (4, 8, 16):
        e = {r.rank: r.error for r in s.rows if r.resolution == C}
        assert e[2] < e[1]
    assert s.isoline_slope(2) <= -3.0
    assert s.frontier_slope() < 0


def test_failures_recorded_not_fatal(monkeypatch):
    real = scaling.als_solve

    def flaky(problem, cfg, init=None):
        if cfg.rank == 2:
            raise NonFiniteResidual("objective became nan")
        return real(problem, cfg, init)

    monkeypatch.setattr(scaling, "als_solve", flaky)
    s = scaling_study(poisson_nd(1), [1, 2, 3], [4], AlsConfig(max_sweeps=5),
                      reference=poisson_exact(1))
    status = [r.status for r in s.rows]
    assert status[0] == "ok" and status[2] == "ok"
    assert status[1].startswith("failed: NonFiniteResidual")
    assert np.isnan(s.rows[1].error)


def test_empty_lists_rejected():
    with pytest.raises(ValueError):
        scaling_study(poisson_nd(1), [], [4])
    with pytest.raises(ValueError):
        scaling_study(poisson_nd(1), [1], [])
