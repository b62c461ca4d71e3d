"""Autocovariance families, Toeplitz blocks, forecast operators."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stationary_kyle.acf import (
    AcfSpec,
    acf_eval,
    acf_values,
    cholesky_with_jitter,
    forecast_matrix,
    toeplitz,
    tridiag_corner_inverse,
)
from stationary_kyle.errors import ConditioningError, DomainError, SizeError


def test_family_values():
    assert acf_eval(AcfSpec.exponential(10.0), 5) == pytest.approx(np.exp(-0.5))
    assert acf_eval(AcfSpec.power_law(30.0, 3.0), 30) == pytest.approx(2.0 ** -3)
    spec = AcfSpec.damped_oscillation(40.0, 20.0)
    assert acf_eval(spec, 0) == 1.0
    assert acf_eval(spec, 8) == pytest.approx(np.exp(-0.2) * np.cos(0.4))
    assert acf_eval(AcfSpec.white(2.5), 0) == 2.5
    assert acf_eval(AcfSpec.white(2.5), 1) == 0.0
    tab = AcfSpec.tabulated([4.0, 1.0, 0.25])
    assert acf_eval(tab, 2) == 0.25
    assert acf_eval(tab, 3) == 0.0


def test_variance_scales_everything():
    spec = AcfSpec.exponential(7.0, variance=3.0)
    assert acf_eval(spec, 0) == 3.0
    assert acf_eval(spec, 4) == pytest.approx(3.0 * np.exp(-4.0 / 7.0))


def test_acf_is_even_in_lag():
    for spec in (AcfSpec.exponential(5.0), AcfSpec.power_law(10.0, 2.0),
                 AcfSpec.damped_oscillation(8.0, 3.0)):
        lags = np.arange(1, 20)
        assert np.allclose(acf_eval(spec, lags), acf_eval(spec, -lags))


def test_invalid_parameters_rejected():
    with pytest.raises(DomainError):
        AcfSpec.exponential(-1.0)
    with pytest.raises(DomainError):
        AcfSpec.power_law(30.0, 1.0)  # non-integrable tail
    with pytest.raises(DomainError):
        AcfSpec.power_law(0.0, 3.0)
    with pytest.raises(DomainError):
        AcfSpec.white(-2.0)
    with pytest.raises(DomainError):
        AcfSpec.tabulated([0.0, 1.0])


def test_alpha_property():
    assert AcfSpec.exponential(20.0).alpha == pytest.approx(np.exp(-1.0 / 20.0))
    with pytest.raises(DomainError):
        AcfSpec.power_law(10.0, 2.0).alpha


def test_toeplitz_block():
    spec = AcfSpec.exponential(4.0, variance=2.0)
    block = toeplitz(spec, 6)
    dense = block.dense()
    assert dense.shape == (6, 6)
    assert np.allclose(dense, dense.T)
    assert np.allclose(np.diagonal(dense), 2.0)
    assert dense[0, 3] == pytest.approx(acf_eval(spec, 3))
    with pytest.raises(SizeError):
        toeplitz(spec, 0)


def test_cholesky_with_jitter_clean_matrix_uses_none():
    cov = toeplitz(AcfSpec.exponential(3.0), 8).dense()
    cho, jitter = cholesky_with_jitter(cov)
    assert jitter == 0.0
    import scipy.linalg as sla

    x = sla.cho_solve(cho, np.eye(8))
    assert np.allclose(x @ cov, np.eye(8), atol=1e-10)


def test_cholesky_with_jitter_rescues_marginal_matrix():
    a = np.eye(5)
    a[0, 0] = -1e-13  # nominally PSD input pushed just below zero by rounding
    cho, jitter = cholesky_with_jitter(a)
    assert jitter > 0.0


def test_cholesky_with_jitter_gives_up_on_indefinite():
    a = np.diag([1.0, -1.0])
    with pytest.raises(ConditioningError):
        cholesky_with_jitter(a)


def _brute_forecast(spec, n_past, n_future):
    """Gaussian conditioning from the full joint covariance, no structure used."""
    n = n_past + n_future
    cov = np.array([[acf_eval(spec, i - j) for j in range(n)] for i in range(n)])
    cpp = cov[:n_past, :n_past]
    cfp = cov[n_past:, :n_past]
    return cfp @ np.linalg.inv(cpp)


def test_forecast_matrix_matches_brute_force_conditioning():
    spec = AcfSpec.power_law(6.0, 2.5, variance=1.7)
    f = forecast_matrix(spec, 5, 3)
    assert f.shape == (3, 5)
    assert np.allclose(f, _brute_forecast(spec, 5, 3), atol=1e-12)


def test_forecast_matrix_levinson_agrees_with_dense():
    spec = AcfSpec.exponential(9.0)
    a = forecast_matrix(spec, 12, 4)
    b = forecast_matrix(spec, 12, 4, method="levinson")
    assert np.allclose(a, b, atol=1e-11)


def test_forecast_matrix_exponential_is_markov():
    # For an AR(1)-type ACF the best forecast loads only on the newest point.
    spec = AcfSpec.exponential(15.0)
    f = forecast_matrix(spec, 8, 3)
    alpha = spec.alpha
    expected = np.zeros((3, 8))
    expected[:, -1] = alpha ** np.arange(1, 4)
    assert np.allclose(f, expected, atol=1e-12)


def test_tridiag_corner_inverse_against_dense_truncation():
    diag, off, corner = 2.6, -1.0, 1.9
    res = tridiag_corner_inverse(diag, off, corner)
    n = 60  # large enough that the decaying mode has died out
    m = np.diag(np.full(n, diag)) + np.diag(np.full(n - 1, off), 1) + np.diag(np.full(n - 1, off), -1)
    m[0, 0] = corner
    first_row = np.linalg.inv(m)[0]
    expected = res["amplitude"] * res["rate"] ** np.arange(n)
    assert np.allclose(first_row[:20], expected[:20], atol=1e-12)


def test_tridiag_corner_inverse_domain_checks():
    with pytest.raises(DomainError):
        tridiag_corner_inverse(1.0, -1.0, 1.0)  # (diag/off)^2 < 4: no decaying mode
    with pytest.raises(DomainError):
        tridiag_corner_inverse(2.5, 1.0, 1.0)  # wrong coupling sign


@given(
    tau=st.floats(min_value=0.5, max_value=60.0),
    variance=st.floats(min_value=0.1, max_value=10.0),
)
@settings(max_examples=40, deadline=None)
def test_exponential_blocks_are_positive_definite(tau, variance):
    cov = toeplitz(AcfSpec.exponential(tau, variance), 12).dense()
    assert np.linalg.eigvalsh(cov).min() > 0.0


@given(
    tau0=st.floats(min_value=0.5, max_value=50.0),
    gamma=st.floats(min_value=1.05, max_value=8.0),
)
@settings(max_examples=40, deadline=None)
def test_power_law_blocks_are_nearly_positive_definite(tau0, gamma):
    cov = toeplitz(AcfSpec.power_law(tau0, gamma), 12).dense()
    assert np.linalg.eigvalsh(cov).min() > -1e-10
