"""Insider demand kernels against hand-rolled small instances and the
Markovian closed forms."""

import numpy as np
import pytest

from stationary_kyle.acf import AcfSpec, forecast_matrix
from stationary_kyle.errors import SizeError
from stationary_kyle.kernels import (
    CausalKernel,
    compute_demand_kernels,
    demand_kernel_R,
    demand_kernel_RNT,
    demand_kernel_Rmu,
    symmetric_propagator_block,
)
from stationary_kyle.markov import (
    markov_demand_kernels,
    markov_propagator,
    solve_markov_ansatz,
)


def test_causal_kernel_constructors():
    d = CausalKernel.delta(2.5, 4)
    assert list(d.values) == [2.5, 0.0, 0.0, 0.0]
    e = CausalKernel.exponential(3.0, 0.5, 4)
    assert np.allclose(e.values, [3.0, 1.5, 0.75, 0.375])
    assert e.T_cut == 4


def test_symmetric_block_by_hand():
    g = CausalKernel(np.array([2.0, 1.0, 0.5]))
    s = symmetric_propagator_block(g, 3)
    assert np.allclose(s, [[4.0, 1.0, 0.5], [1.0, 4.0, 1.0], [0.5, 1.0, 4.0]])
    with pytest.raises(SizeError):
        symmetric_propagator_block(g, 5)


def _influence_weights(g):
    s = symmetric_propagator_block(g, g.T_cut)
    e0 = np.zeros(g.T_cut)
    e0[0] = 1.0
    return np.linalg.solve(s, e0)


def test_flow_response_small_instance():
    """Scalar re-derivation of the flow-response row, no matrix shortcuts."""
    g = CausalKernel(np.array([1.0, 0.6, 0.3, 0.1]))
    u = _influence_weights(g)
    n = 4
    expected = np.zeros(n)
    for j in range(1, n):
        # the planned trade k steps ahead sees flow j steps back through G_{k+j}
        expected[j] = -sum(u[k] * g.values[k + j] for k in range(n) if k + j < n)
    r = demand_kernel_R(g)
    assert r.values[0] == 0.0
    assert np.allclose(r.values, expected, atol=1e-12)


def test_noise_response_small_instance():
    g = CausalKernel(np.array([1.0, 0.5, 0.2, 0.05]))
    spec = AcfSpec.exponential(3.0)
    n = 4
    f_nt = forecast_matrix(spec, n, n)
    u = _influence_weights(g)
    low = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            low[i, j] = g.values[i - j]
    v = low.T @ u
    expected = np.zeros(n)
    for s in range(1, n):  # weight on the noise flow observed s steps back
        expected[s] = -sum(v[m] * f_nt[m, n - s] for m in range(n))
    r_nt = demand_kernel_RNT(g, f_nt)
    assert r_nt.values[0] == 0.0
    assert np.allclose(r_nt.values, expected, atol=1e-12)


def test_dividend_response_small_instance():
    g = CausalKernel(np.array([1.0, 0.4, 0.15, 0.05]))
    spec = AcfSpec.exponential(6.0)
    n = 4
    f_mu = forecast_matrix(spec, n, n)
    u = _influence_weights(g)
    cs = np.cumsum(u)
    expected = np.zeros(n)
    for s in range(1, n):  # dividends observed s steps back
        expected[s] = sum(cs[m] * f_mu[m, n - s] for m in range(n))
    r_mu = demand_kernel_Rmu(g, f_mu)
    assert r_mu.values[0] == 0.0
    assert np.allclose(r_mu.values, expected, atol=1e-12)


def test_white_inputs_zero_their_kernels():
    g = CausalKernel(np.array([1.0, 0.3, 0.1]))
    kern = compute_demand_kernels(g, None, None)
    assert np.all(kern.R_NT.values == 0.0)
    assert np.all(kern.R_mu.values == 0.0)
    assert kern.source_G is g
    # the flow response survives: the insider still smooths his own impact
    assert np.any(kern.R.values != 0.0)


def test_matrix_kernels_match_markov_closed_form():
    """The generic solve and the closed-form bundle agree lag by lag."""
    T = 400
    eq = solve_markov_ansatz(np.exp(-1.0 / 20.0), np.exp(-1.0 / 10.0), 1.0, 1.0)
    g = markov_propagator(eq, T)
    f_mu = forecast_matrix(AcfSpec.exponential(20.0), T, T)
    f_nt = forecast_matrix(AcfSpec.exponential(10.0), T, T)
    num = compute_demand_kernels(g, f_mu, f_nt)
    ref = markov_demand_kernels(eq, T)
    assert np.allclose(num.R.values[:60], ref.R.values[:60], atol=1e-8)
    assert num.R_NT.values[1] == pytest.approx(eq.R_nt_scalar, abs=1e-8)
    assert num.R_mu.values[1] == pytest.approx(eq.R_mu_scalar, abs=1e-8)
    # the single-lag structure: everything past lag 1 is numerically nothing
    assert np.max(np.abs(num.R_NT.values[2:])) < 1e-8
    assert np.max(np.abs(num.R_mu.values[2:])) < 1e-8
