"""Closed-form Markovian equilibria: frozen reference bundles, scalar
identities, and the root-selection machinery."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stationary_kyle.errors import DomainError
from stationary_kyle.markov import (
    _quartic_rnt_printed,
    closed_form_equal_timescales,
    closed_form_uncorrelated,
    continuum_limit_G,
    fit_two_exponential,
    markov_demand_kernels,
    markov_observables,
    markov_propagator,
    solve_markov_ansatz,
)

# Amplitudes of the white-noise-flow equilibrium propagator, frozen from the
# closed form.  At alpha = 0.8 the value is exactly 3/2; at alpha = 0.5 it is
# 2 sqrt(3) - 3.
G0_UNCORRELATED = {
    0.3: 0.209234292462,
    0.5: 0.464101615138,
    0.8: 1.5,
    float(np.exp(-1.0 / 20.0)): 4.598243630050,
}

# Equal-timescale reference bundles: alpha -> (rho, G0, R_nt, R_mu, b_tilde, Omega0).
EQUAL_TAU = {
    0.3: (0.1490391130, 0.2179239451, -0.1456885034, 0.9663395045, 0.94046528, 1.81345372),
    0.5: (0.2445250033, 0.5236505400, -0.2293464969, 0.9073330804, 0.8178459021, 1.5061092220),
    0.6: (0.2892693022, 0.8008325931, -0.2636179572, 0.8678438101, 0.72092098, 1.31378042),
    0.9: (0.3972102101, 5.1261312725, -0.3231650997, 0.7230065713, 0.23361844, 0.69086981),
    float(np.exp(-1.0)): (0.1820549, 0.2984319396, -0.1759070301, 0.9494830824, None, None),
}

# Transient-mode decay rate over a grid of (tau_mu, tau_nt); the pairs with
# tau_nt > tau_mu have two self-consistency roots and exercise the selection.
RHO_BY_TIMESCALES = {
    (1.0, 2.0): 0.3023488776,
    (5.0, 10.0): 0.4309531488,
    (5.0, 20.0): 0.4648292672,
    (5.0, 40.0): 0.4820011480,
    (8.0, 10.0): 0.4107178578,
    (10.0, 20.0): 0.4449910229,
    (10.0, 40.0): 0.4727243608,
    (15.0, 40.0): 0.4618272625,
    (20.0, 40.0): 0.4512361892,
}


def _bundle(tau_mu, tau_nt):
    return solve_markov_ansatz(float(np.exp(-1.0 / tau_mu)), float(np.exp(-1.0 / tau_nt)),
                               1.0, 1.0)


def test_uncorrelated_amplitudes():
    for alpha, g0 in G0_UNCORRELATED.items():
        kern = closed_form_uncorrelated(alpha, 1.0, 1.0, T_cut=40)
        assert kern.values[0] == pytest.approx(g0, abs=1e-9), alpha
        assert np.allclose(kern.values, g0 * alpha ** np.arange(40), atol=1e-12)


def test_uncorrelated_scales_with_variances():
    base = closed_form_uncorrelated(0.5, 1.0, 1.0, T_cut=10)
    scaled = closed_form_uncorrelated(0.5, 4.0, 1.0, T_cut=10)
    assert np.allclose(scaled.values, 2.0 * base.values, atol=1e-12)
    scaled_nt = closed_form_uncorrelated(0.5, 1.0, 4.0, T_cut=10)
    assert np.allclose(scaled_nt.values, 0.5 * base.values, atol=1e-12)


def test_equal_timescale_bundles():
    for alpha, (rho, g0, r_nt, r_mu, b_tilde, omega0) in EQUAL_TAU.items():
        eq = closed_form_equal_timescales(alpha, 1.0, 1.0)
        assert eq.rho == pytest.approx(rho, abs=5e-8), alpha
        assert eq.G0 == pytest.approx(g0, abs=5e-9), alpha
        assert eq.R_nt_scalar == pytest.approx(r_nt, abs=5e-9), alpha
        assert eq.R_mu_scalar == pytest.approx(r_mu, abs=5e-9), alpha
        if b_tilde is not None:
            assert eq.b_tilde == pytest.approx(b_tilde, abs=5e-8), alpha
            assert eq.Omega0 == pytest.approx(omega0, abs=5e-8), alpha
        assert eq.meta.get("degenerate_equal_timescales") is True


def test_equal_timescales_is_single_mode():
    eq = closed_form_equal_timescales(0.5, 1.0, 1.0)
    assert eq.mode_weight == pytest.approx(0.0, abs=1e-12)
    g = markov_propagator(eq, 30)
    assert np.allclose(g.values, eq.G0 * eq.rho ** np.arange(30), atol=1e-12)


def test_quartic_cross_check():
    """The degenerate noise-response scalar solves its quartic."""
    eq = closed_form_equal_timescales(0.5, 1.0, 1.0)
    assert _quartic_rnt_printed(0.5) == pytest.approx(-eq.R_nt_scalar, abs=1e-9)


def test_general_markov_bundle_20_10():
    eq = _bundle(20.0, 10.0)
    assert eq.rho == pytest.approx(0.35146130658267022, rel=1e-12)
    assert eq.tau_rho == pytest.approx(0.95633777292342792, rel=1e-12)
    assert eq.b_tilde == pytest.approx(0.16881329123560654, rel=1e-12)
    assert eq.Omega0 == pytest.approx(0.65760905771020106, rel=1e-12)
    assert eq.a == pytest.approx(0.56262968828409887, rel=1e-12)
    assert eq.G0 == pytest.approx(8.7946954458279762, rel=1e-12)
    obs = markov_observables(eq)
    assert obs["sigma_ratio"] == pytest.approx(0.52244781362428427, rel=1e-12)
    assert obs["nt_loss_per_trade"] == pytest.approx(9.4420593740265115, rel=1e-12)
    assert obs["mm_risk_per_trade"] == pytest.approx(119.46575036599816, rel=1e-12)
    assert obs["it_nt_cov_ratio"] == pytest.approx(-0.43737031171609053, rel=1e-12)
    assert obs["it_mu_cov"] == pytest.approx(0.50123344468771958, rel=1e-12)


def test_transient_rate_selection_grid():
    """Frozen decay rates, including every pair where the scalar
    self-consistency condition has two genuine roots."""
    for (tau_mu, tau_nt), rho in RHO_BY_TIMESCALES.items():
        eq = _bundle(tau_mu, tau_nt)
        assert eq.rho == pytest.approx(rho, abs=1e-8), (tau_mu, tau_nt)


def test_two_root_case_keeps_the_consistent_root():
    """At (10, 20) there are two candidate rates; only one survives a pricing
    sweep, and the gap between their consistency residuals is enormous."""
    eq = _bundle(10.0, 20.0)
    roots = eq.meta["candidate_roots"]
    residuals = eq.meta["fixed_point_residuals"]
    assert len(roots) == 2
    best = min(residuals)
    other = max(residuals)
    assert best < 1e-6
    assert other > 1e-2
    assert eq.rho == roots[residuals.index(best)]
    assert abs(eq.meta["defect_residual"]) < 1e-10


def test_mode_weight_identity():
    eq = _bundle(20.0, 10.0)
    c = eq.mode_weight
    assert c * (eq.alpha_mu - eq.rho) == pytest.approx(eq.alpha_mu - eq.alpha_nt, abs=1e-14)


def test_lag0_excess_identity():
    # Omega_0 = a (1 + b_tilde) when the noise variance is 1
    for pair in ((20.0, 10.0), (5.0, 5.0), (10.0, 20.0)):
        eq = _bundle(*pair)
        assert eq.Omega0 == pytest.approx(eq.a * (1.0 + eq.b_tilde), rel=1e-12)


def test_demand_kernels_single_lag_structure():
    eq = _bundle(20.0, 10.0)
    kern = markov_demand_kernels(eq, 50)
    assert kern.R.values[0] == 0.0
    assert kern.R_NT.values[1] == eq.R_nt_scalar
    assert kern.R_mu.values[1] == eq.R_mu_scalar
    assert np.all(kern.R_NT.values[2:] == 0.0)
    assert np.all(kern.R_mu.values[2:] == 0.0)
    # flow response decays on the two equilibrium rates only
    tail = kern.R.values[3:10] / kern.R.values[2:9]
    assert np.all((tail > 0) & (tail < 1))


def test_fit_two_exponential_recovers_synthetic():
    tau = np.arange(300, dtype=float)
    alpha, rho, g0, c = 0.9, 0.31, 2.3, 0.4
    kernel = g0 * (c * alpha ** tau + (1 - c) * rho ** tau)
    fit = fit_two_exponential(kernel, alpha)
    assert fit["rho"] == pytest.approx(rho, abs=1e-7)
    assert fit["G0"] == pytest.approx(g0, rel=1e-9)
    assert fit["c"] == pytest.approx(c, rel=1e-7)
    assert fit["residual"] < 1e-10


def test_continuum_decomposition():
    out = continuum_limit_G(50.0, 30.0)
    assert out["delta_weight"] == 1.0
    assert out["exp_amplitude_ratio"] == pytest.approx((50.0 - 30.0) / 1500.0)
    with pytest.raises(DomainError):
        continuum_limit_G(-1.0, 2.0)


def test_domain_validation():
    with pytest.raises(DomainError):
        solve_markov_ansatz(1.2, 0.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        solve_markov_ansatz(0.5, 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        solve_markov_ansatz(0.5, 0.4, -1.0, 1.0)
    with pytest.raises(DomainError):
        closed_form_uncorrelated(0.0, 1.0, 1.0)


@given(
    tau_mu=st.floats(min_value=1.5, max_value=45.0),
    tau_nt=st.floats(min_value=1.5, max_value=45.0),
)
@settings(max_examples=10, deadline=None)
def test_bundle_invariants(tau_mu, tau_nt):
    eq = _bundle(tau_mu, tau_nt)
    assert 0.0 < eq.rho < eq.alpha_nt
    assert eq.b_tilde > 0.0
    assert eq.a > 0.0
    assert eq.G0 > 0.0
    assert eq.Omega0 == pytest.approx(eq.a * (1.0 + eq.b_tilde), rel=1e-10)
    c = eq.mode_weight
    assert c * (eq.alpha_mu - eq.rho) == pytest.approx(eq.alpha_mu - eq.alpha_nt, abs=1e-12)
