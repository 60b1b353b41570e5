import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vivid.covariance import (
    GridGeometry,
    build_matern_cov,
    cholesky_factor,
    empirical_cov,
    gaspari_cohn,
    is_psd,
    localize,
    matern32,
    observation_cov,
    sample_correlated_noise,
    shrink,
)


def test_matern_examples():
    assert matern32(0.0, 5.0) == 1.0
    assert matern32(5.0, 5.0) == pytest.approx(2 / math.e, abs=1e-12)
    assert matern32(10.0, 5.0) < matern32(5.0, 5.0) < matern32(0.0, 5.0)


def test_matern_bad_length():
    with pytest.raises(ValueError):
        matern32(1.0, 0.0)


def test_matern_cov_two_cells():
    c = build_matern_cov(GridGeometry(2, 1), 5.0, 1.0)
    assert c[0, 1] == pytest.approx(1.2 * math.exp(-0.2), abs=1e-12)
    assert c[0, 1] == pytest.approx(0.982477, abs=1e-6)


def test_matern_cov_diagonal():
    c = build_matern_cov(GridGeometry(4, 5), 3.0, 0.7)
    assert np.allclose(np.diag(c), 0.49)


@pytest.mark.parametrize("n", [3, 8, 20])
def test_matern_cov_psd(n):
    c = build_matern_cov(GridGeometry(n, n), 5.0)
    assert np.array_equal(c, c.T)
    assert is_psd(c)


def test_matern_distance_convention():
    g = GridGeometry(3, 4)
    c = build_matern_cov(g, 2.0)
    a, b = 0 * 4 + 0, 2 * 4 + 3  # (0,0) and (2,3)
    assert c[a, b] == pytest.approx(matern32(math.hypot(2, 3), 2.0))


def test_gaspari_cohn_examples():
    assert gaspari_cohn(0.0) == 1.0
    assert gaspari_cohn(2.0) == 0.0 and gaspari_cohn(7.5) == 0.0


def test_gaspari_cohn_branch_agreement():
    inner = 1 - 5 / 3 + 5 / 8 + 1 / 2 - 1 / 4
    outer = 4 - 5 + 5 / 3 + 5 / 8 - 1 / 2 + 1 / 12 - 2 / 3
    assert abs(inner - 5 / 24) < 1e-12 and abs(outer - 5 / 24) < 1e-12
    assert abs(gaspari_cohn(1.0) - 5 / 24) < 1e-12


def test_gaspari_cohn_continuity():
    for eps in (1e-4, 1e-6, 1e-8):
        assert abs(gaspari_cohn(1 - eps) - gaspari_cohn(1 + eps)) < 10 * eps
        assert abs(gaspari_cohn(2 - eps)) < 1e-6 or eps > 1e-5


def test_gaspari_cohn_negative():
    with pytest.raises(ValueError):
        gaspari_cohn(-0.1)


@given(st.floats(0, 10, allow_nan=False))
def test_gaspari_cohn_range(rho):
    assert 0.0 <= gaspari_cohn(rho) <= 1.0


def test_localize_diagonal_and_support(rng):
    g = GridGeometry(6, 6)
    a = rng.standard_normal((36, 36))
    p = a @ a.T
    out = localize(p, g, 1.5)
    assert np.array_equal(np.diag(out), np.diag(p))
    assert not out[g.distances() >= 3.0].any()
    assert np.all(np.abs(out) <= np.abs(p) + 1e-15)


@given(st.integers(0, 2**32 - 1), st.floats(0.3, 5.0))
def test_localize_preserves_psd(seed, length):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((36, 10))
    out = localize(a @ a.T, GridGeometry(6, 6), length)
    assert np.linalg.eigvalsh(out).min() >= -1e-8


def test_localize_shape_mismatch():
    with pytest.raises(ValueError):
        localize(np.eye(5), GridGeometry(2, 2), 1.0)


def test_empirical_cov_examples():
    assert np.array_equal(empirical_cov([[1.0, 0.0], [-1.0, 0.0]]), [[2.0, 0.0], [0.0, 0.0]])
    assert np.array_equal(empirical_cov([[1.0, 0.0], [1.0, 0.0]]), [[2.0, 0.0], [0.0, 0.0]])
    assert not empirical_cov(np.zeros((4, 3))).any()
    r = np.array([0.5, -2.0, 1.0])
    assert np.allclose(empirical_cov([r] * 5), 5 / 4 * np.outer(r, r))


def test_empirical_cov_too_few():
    with pytest.raises(ValueError):
        empirical_cov([[1.0, 2.0]])


@given(st.integers(0, 2**32 - 1))
def test_empirical_cov_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((7, 4))
    assert np.allclose(empirical_cov(r), empirical_cov(r[rng.permutation(7)]), atol=1e-14)


def test_sample_zero_cov(rng):
    assert not sample_correlated_noise(np.zeros((5, 5)), rng).any()


def test_sample_moments():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    b = a @ a.T + np.eye(4)
    f = cholesky_factor(b)
    draws = np.array([sample_correlated_noise(b, rng, f) for _ in range(10000)])
    se = np.sqrt(np.diag(b) / 10000)
    assert np.all(np.abs(draws.mean(0)) < 4 * se)
    emp = draws.T @ draws / 10000
    assert np.all(np.abs(emp - b) <= 0.1 * np.abs(b) + 0.05 * np.sqrt(np.outer(np.diag(b), np.diag(b))))


def test_sample_lag_one_correlation():
    rng = np.random.default_rng(1)
    g = GridGeometry(12, 12)
    c = build_matern_cov(g, 5.0)
    f = cholesky_factor(c)
    draws = np.array([f @ rng.standard_normal(144) for _ in range(1000)])
    # pairs of horizontally adjacent interior cells
    a = [i * 12 + j for i in range(12) for j in range(11)]
    b = [k + 1 for k in a]
    corr = np.mean(draws[:, a] * draws[:, b]) / np.mean(draws**2)
    assert abs(corr - matern32(1.0, 5.0)) < 0.05 * matern32(1.0, 5.0)


def test_cholesky_jitter_retry():
    c = np.ones((3, 3))  # rank one: plain Cholesky fails
    f = cholesky_factor(c)
    assert np.allclose(f @ f.T, c, atol=1e-8)


def test_cholesky_fails_for_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        cholesky_factor(np.diag([1.0, -1.0]))


def test_observation_cov():
    assert np.array_equal(observation_cov(np.array([0.1, 5.0])), 1e-3 * np.eye(2))
    r = observation_cov(np.array([0.01, 1.0]), level=0.1)
    assert np.allclose(np.diag(r), [1e-3, 1e-2])


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.floats(0, 1))
def test_shrink_properties(seed, w):
    a = np.random.default_rng(seed).standard_normal((6, 3))
    cov = a @ a.T
    out = shrink(cov, w)
    assert np.isclose(np.trace(out), np.trace(cov))
    assert np.allclose(out, out.T)
    assert np.linalg.eigvalsh(out).min() >= w * np.trace(cov) / 6 - 1e-9


def test_shrink_endpoints(rng):
    cov = np.diag([1.0, 3.0])
    assert np.array_equal(shrink(cov, 0.0), cov)
    assert np.allclose(shrink(cov, 1.0), 2 * np.eye(2))
    with pytest.raises(ValueError):
        shrink(cov, 1.5)
