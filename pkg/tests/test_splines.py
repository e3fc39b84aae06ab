import json

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from separable.errors import DomainError
from separable.splines import (
    IntegralMatrixSpec,
    SplineBasis1D,
    build_basis,
    eval_basis,
    eval_basis_deriv,
    integral_matrix,
)


def cox_de_boor(knots, i, p, x):
    """Textbook recursive definition, half-open spans, right end closed by hand."""
    if p == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        return 0.0
    out = 0.0
    d1 = knots[i + p] - knots[i]
    d2 = knots[i + p + 1] - knots[i + 1]
    if d1 > 0:
        out += (x - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, x)
    if d2 > 0:
        out += (knots[i + p + 1] - x) / d2 * cox_de_boor(knots, i + 1, p - 1, x)
    return out


def oracle_values(basis, x):
    # evaluate the right endpoint as a left limit
    if x >= basis.domain[1]:
        x = np.nextafter(basis.domain[1], -np.inf)
    return np.array([cox_de_boor(basis.knots, i, basis.order, x) for i in range(basis.n_funcs)])


def test_function_count():
    assert build_basis(3, 5, (0, 1)).n_funcs == 8


def test_linear_hats_midpoint():
    b = build_basis(1, 1, (0, 1))
    assert b.n_funcs == 2
    npt.assert_allclose(eval_basis(b, 0.5), [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("order,cells", [(3, 1), (1, 4), (2, 3), (3, 8), (4, 5)])
def test_matches_cox_de_boor(order, cells):
    b = build_basis(order, cells, (0.0, 1.0))
    rng = np.random.default_rng(order * 10 + cells)
    for x in np.concatenate([rng.uniform(0, 1, 40), [0.0, 1.0]]):
        npt.assert_allclose(eval_basis(b, x), oracle_values(b, x), atol=1e-12)


def test_matches_cox_de_boor_shifted_domain():
    b = build_basis(3, 6, (-2.0, 5.0))
    for x in np.linspace(-2, 5, 37):
        npt.assert_allclose(eval_basis(b, x), oracle_values(b, x), atol=1e-12)


def test_partition_of_unity_dense_grid():
    b = build_basis(3, 8)
    x = np.linspace(0, 1, 1000)
    npt.assert_allclose(b.design_matrix(x).sum(axis=1), 1.0, atol=1e-12, rtol=0)


@given(order=st.integers(1, 5), cells=st.integers(1, 12),
       x=st.floats(0, 1, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_partition_nonneg_local_support(order, cells, x):
    vals = eval_basis(build_basis(order, cells), x)
    assert abs(vals.sum() - 1.0) <= 1e-12
    assert np.all(vals >= -1e-15)
    assert np.count_nonzero(np.abs(vals) > 0) <= order + 1


def test_continuity_at_knots():
    b = build_basis(3, 5)
    for k in b.breakpoints[1:-1]:
        lo = eval_basis(b, k - 1e-12)
        hi = eval_basis(b, k + 1e-12)
        npt.assert_allclose(lo, hi, atol=1e-10)


def test_domain_violation_and_clamp():
    b = build_basis(2, 3)
    with pytest.raises(DomainError):
        eval_basis(b, 1.5)
    npt.assert_allclose(eval_basis(b, 1.5, clamp=True), eval_basis(b, 1.0))


@pytest.mark.parametrize("args", [(0, 3, (0, 1)), (2, 0, (0, 1)), (2, 3, (1, 1)), (2, 3, (1, 0))])
def test_build_rejects_invalid(args):
    with pytest.raises(ValueError):
        build_basis(*args)


def test_deriv_zero_is_identity():
    b = build_basis(3, 7)
    for x in np.linspace(0, 1, 13):
        npt.assert_array_equal(eval_basis_deriv(b, x, 0), eval_basis(b, x))


def test_deriv_order_too_high():
    with pytest.raises(ValueError):
        eval_basis_deriv(build_basis(2, 3), 0.3, 3)


def test_first_derivative_sums_to_zero():
    b = build_basis(3, 8)
    for x in np.linspace(0.01, 0.99, 50):
        assert abs(eval_basis_deriv(b, x, 1).sum()) <= 1e-10


@pytest.mark.parametrize("order", [2, 3, 4])
def test_derivatives_match_finite_differences(order):
    b = build_basis(order, 6)
    h = 1e-6
    rng = np.random.default_rng(7)
    knots = b.breakpoints
    for x in rng.uniform(0.02, 0.98, 60):
        if np.min(np.abs(knots - x)) < 1e-4:
            continue
        for k in range(1, min(order, 2) + 1):
            fd = (eval_basis_deriv(b, x + h, k - 1) - eval_basis_deriv(b, x - h, k - 1)) / (2 * h)
            an = eval_basis_deriv(b, x, k)
            scale = max(np.abs(an).max(), 1.0)
            assert np.abs(fd - an).max() / scale <= 1e-6


def test_mass_matrix_sums():
    b = build_basis(3, 5, (0.0, 2.0))
    M = integral_matrix(b, b)
    x = np.linspace(0, 2, 20001)
    row_int = np.trapezoid(b.design_matrix(x), x, axis=0)
    npt.assert_allclose(M.sum(axis=1), row_int, atol=1e-7)
    assert abs(M.sum() - 2.0) < 1e-13


def test_hat_stiffness():
    b = build_basis(1, 1)
    K = integral_matrix(b, b, IntegralMatrixSpec(1, 1))
    npt.assert_allclose(K, [[1, -1], [-1, 1]], atol=1e-14)


def test_cubic_mass_matches_adaptive_quadrature():
    b = build_basis(3, 3)
    M = integral_matrix(b, b)

    def bp(p, x):
        return eval_basis(b, x)[p]

    ref = np.zeros_like(M)
    for p in range(b.n_funcs):
        for q in range(p, b.n_funcs):
            val, _ = integrate.quad(lambda x: bp(p, x) * bp(q, x), 0, 1,
                                    points=list(b.breakpoints[1:-1]), epsabs=1e-14, epsrel=1e-13)
            ref[p, q] = ref[q, p] = val
    npt.assert_allclose(M, ref, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
@pytest.mark.parametrize("kl,kr", [(0, 0), (0, 1), (1, 1)])
def test_quadrature_exactness(order, kl, kr):
    b = build_basis(order, 5)
    if max(kl, kr) > order:
        pytest.skip("derivative exceeds order")
    lo = integral_matrix(b, b, IntegralMatrixSpec(kl, kr))
    hi = integral_matrix(b, b, IntegralMatrixSpec(kl, kr, 2 * (order + 1)))
    npt.assert_allclose(lo, hi, atol=1e-13)


def test_integral_matrix_domain_mismatch():
    with pytest.raises(DomainError):
        integral_matrix(build_basis(2, 3, (0, 1)), build_basis(2, 3, (0, 2)))


def test_mixed_resolution_matrix():
    a, b = build_basis(3, 4), build_basis(2, 6)
    M = integral_matrix(a, b)
    assert M.shape == (7, 8)
    assert abs(M.sum() - 1.0) < 1e-13


def test_descriptor_round_trip_bit_exact():
    b = build_basis(3, 7, (0.1, np.pi))
    text = json.dumps(b.to_dict())
    back = SplineBasis1D.from_dict(json.loads(text))
    assert back == b
    assert np.array_equal(back.knots, b.knots)
