import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from separable.bench import (
    BOREHOLE_RANGES,
    BoreholeSpec,
    SobolGSpec,
    borehole,
    lhs_sample,
    make_dataset,
    sobol_g,
    sobol_g_clean,
    sobol_noise,
)
from separable.errors import DomainError
from separable.training import train_test_split


def test_lhs_quarters():
    U = lhs_sample(4, 1, seed=0)
    assert sorted(np.floor(U[:, 0] * 4).astype(int)) == [0, 1, 2, 3]


@given(n=st.integers(1, 300), d=st.integers(1, 6), seed=st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_lhs_histogram_oracle(n, d, seed):
    U = lhs_sample(n, d, seed)
    assert U.shape == (n, d)
    for col in U.T:
        counts = np.histogram(col, bins=n, range=(0, 1))[0]
        assert np.all(counts == 1)


def test_lhs_deterministic_and_validated():
    npt.assert_array_equal(lhs_sample(20, 3, 5), lhs_sample(20, 3, 5))
    assert not np.array_equal(lhs_sample(20, 3, 5), lhs_sample(20, 3, 6))
    with pytest.raises(ValueError):
        lhs_sample(0, 2, 1)


def _mid():
    return np.array([(lo + hi) / 2 for lo, hi in BOREHOLE_RANGES])


def borehole_oracle(rw, r, Tu, Hu, Tl, Hl, L, Kw):
    ln = math.log(r) - math.log(rw)
    denom = ln + 2.0 * L * Tu / (rw * rw * Kw) + ln * Tu / Tl
    return 2.0 * math.pi * Tu * (Hu - Hl) / denom


def test_borehole_zero_head_difference():
    p = _mid()
    p[5] = p[3]
    assert borehole(p) == 0.0


def test_borehole_nonlinear_in_tu():
    p = _mid()
    q = p.copy()
    q[2] *= 2
    assert not np.isclose(borehole(q), 2 * borehole(p), rtol=1e-6)


def test_borehole_matches_oracle():
    rng = np.random.default_rng(1)
    lo, hi = np.array(BOREHOLE_RANGES).T
    for u in rng.uniform(size=(20, 8)):
        p = lo + u * (hi - lo)
        assert abs(borehole(p) - borehole_oracle(*p)) <= 1e-12 * abs(borehole_oracle(*p))


def test_borehole_positive_when_head_drops():
    rng = np.random.default_rng(2)
    lo, hi = np.array(BOREHOLE_RANGES).T
    P = lo + rng.uniform(size=(1000, 8)) * (hi - lo)
    assert np.all(P[:, 3] > P[:, 5])
    assert np.all(borehole(P) > 0)


def test_borehole_domain_errors():
    p = _mid()
    p[1] = p[0]
    with pytest.raises(DomainError):
        borehole(p)
    q = _mid()
    q[7] = -1.0
    with pytest.raises(DomainError):
        borehole(q)


def test_sobol_zero_factor():
    assert sobol_g(np.full(20, 0.5), SobolGSpec())[0] == 0.0


def test_sobol_corner_value():
    expected = 1.0
    for a in [0.0] * 5 + [1.5] * 5 + [4.0] * 10:
        expected *= (2 + a) / (1 + a)
    assert abs(sobol_g_clean(np.ones(20)) - expected) <= 1e-12 * expected
    assert abs(expected - 2 ** 5 * 1.4 ** 5 * 1.2 ** 10) <= 1e-9 * expected


def test_sobol_block_symmetry():
    rng = np.random.default_rng(3)
    p = rng.uniform(size=20)
    q = p.copy()
    q[10:20] = q[10:20][::-1]
    q[0:5] = q[[2, 4, 0, 1, 3]]
    assert abs(sobol_g_clean(p) - sobol_g_clean(q)) <= 1e-14 * sobol_g_clean(p)


def test_sobol_noisy_pair_reproducible():
    spec = SobolGSpec(seed=4)
    p = np.full(20, 0.3)
    assert sobol_g(p, spec, 7) == sobol_g(p, spec, 7)
    clean, noisy = sobol_g(p, spec, 7)
    assert noisy == clean + sobol_noise(spec, 8)[7]
    with pytest.raises(DomainError):
        sobol_g(np.full(20, 1.2), spec)


def test_noise_statistics():
    spec = SobolGSpec(n_samples=100_000, seed=5)
    eps = sobol_noise(spec, spec.n_samples)
    assert abs(eps.mean()) <= 3 * spec.noise_sigma / math.sqrt(spec.n_samples)
    assert abs(eps.std() / spec.noise_sigma - 1) <= 0.05


def test_make_dataset_full_borehole():
    data = make_dataset("borehole", BoreholeSpec(n_samples=100_000, seed=6))
    assert data.n == 100_000
    tr, te = train_test_split(data, 0.7, 0)
    assert (tr.n, te.n) == (70_000, 30_000)
    assert data.X.min() >= 0 and data.X.max() <= 1


def test_make_dataset_singleton_and_determinism():
    one = make_dataset("sobol_g", SobolGSpec(n_samples=1, seed=7))
    assert one.n == 1
    a = make_dataset("sobol_g", SobolGSpec(n_samples=500, seed=8))
    b = make_dataset("sobol_g", SobolGSpec(n_samples=500, seed=8))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y) and np.array_equal(a.y_clean, b.y_clean)


def test_targets_scaled_without_shift():
    data = make_dataset("sobol_g", SobolGSpec(n_samples=2000, seed=9))
    lo, hi = data.target_bounds
    raw = sobol_g_clean(data.X)
    npt.assert_allclose(data.y_clean * (hi - lo), raw, rtol=1e-14)
