"""Market-maker inference: excess-demand dynamics, dressed noise covariance,
the steady-state gain, and the propagator refresh built from all of it.

The maker observes total flow only.  Solving the insider's feedback loop turns
the flow into linear images of the dividend and noise paths (lower-triangular
operators), Gaussian conditioning then yields the dividend estimates, and
summing forecast fundamental value over the future gives back a pricing kernel
— one sweep of the self-consistent propagator map.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.signal as sig

from .acf import acf_values, cholesky_with_jitter, forecast_matrix
from .errors import SizeError
from .kernels import CausalKernel, compute_demand_kernels

__all__ = [
    "FilterBundle",
    "excess_demand_operator",
    "dressed_nt_acf",
    "kalman_gain",
    "propagator_update",
]

#: A forecast row whose L1 mass falls below this fraction of the first row's
#: no longer contributes to the priced fundamental.
_ROW_MASS_CUTOFF = 1e-10


@dataclass(frozen=True, eq=False)
class FilterBundle:
    """The maker's inference pieces for one candidate propagator."""

    J_mu: np.ndarray
    D_NT: np.ndarray
    Omega: np.ndarray
    K: np.ndarray


def _dense(block):
    return block.dense() if hasattr(block, "dense") else np.asarray(block, dtype=float)


def _padded(values, n):
    out = np.zeros(n)
    m = min(len(values), n)
    out[:m] = values[:m]
    return out


def excess_demand_operator(R, R_NT, R_mu, n):
    """Lower-triangular maps from the exogenous paths to total excess demand.

    Solving q = R*q + (delta + R_NT)*q_nt + R_mu*mu for q gives
    A_NT = (I - R L)^{-1} (I + R_NT L) and A_mu = (I - R L)^{-1} R_mu L; both
    are causal (lower-triangular Toeplitz), built here from impulse responses.
    The kernels are expected in demand form (no lag-0 entry).
    """
    ar = np.zeros(n)
    ar[0] = 1.0
    ar[1:] = -_padded(R.values, n)[1:]
    e0 = np.zeros(n)
    e0[0] = 1.0
    h_nt = sig.lfilter(e0 + _padded(R_NT.values, n), ar, e0)
    h_mu = sig.lfilter(_padded(R_mu.values, n), ar, e0)
    return {
        "A_NT": sla.toeplitz(h_nt, np.zeros(n)),
        "A_mu": sla.toeplitz(h_mu, np.zeros(n)),
    }


def dressed_nt_acf(A_NT, Omega_NT):
    """Noise covariance as seen through the insider's feedback: A Omega A^T."""
    om = _dense(Omega_NT)
    return A_NT @ om @ A_NT.T


def kalman_gain(Xi_mu, J_mu, D_NT):
    """Steady-state gain K = Xi J^T Omega^{-1} and the flow covariance Omega.

    Returns ``{"K": ..., "Omega": ...}``.  Omega = J Xi J^T + D_NT is factored
    once with the shared jitter policy; no explicit inverse is formed.
    """
    xi = _dense(Xi_mu)
    omega = J_mu @ xi @ J_mu.T + D_NT
    cho, _ = cholesky_with_jitter(omega)
    k = sla.cho_solve(cho, J_mu @ xi, check_finite=False).T
    return {"K": k, "Omega": omega}


def _pricing_functional(f_mu, n):
    """Coefficients, on the estimated dividend window, of the summed forecast
    fundamental sum_{t' >= t} E[mu_t'].

    The current dividend sits inside the estimate window (unit vector on its
    last slot); strictly future dividends contribute their forecast rows, which
    condition on the window ending at t, until the rows stop carrying mass.
    """
    f_sum = np.zeros(n)
    f_sum[-1] = 1.0
    if f_mu is None:
        return f_sum
    masses = np.abs(f_mu).sum(axis=1)
    if masses[0] <= 0:
        return f_sum
    dead = masses < _ROW_MASS_CUTOFF * masses[0]
    stop = int(np.argmax(dead)) if dead.any() else len(f_mu)
    return f_sum + f_mu[:stop].sum(axis=0)


def _update_full(G, Xi_mu, Omega_NT, T_cut):
    """One propagator refresh; returns (G_new, internals)."""
    if G.T_cut != T_cut:
        raise SizeError(f"propagator has length {G.T_cut}, expected T_cut = {T_cut}")
    n = T_cut
    f_mu = None if Xi_mu.family == "white" else forecast_matrix(Xi_mu, n, n)
    f_nt = None if Omega_NT.family == "white" else forecast_matrix(Omega_NT, n, n)
    kern = compute_demand_kernels(G, f_mu, f_nt)
    ops = excess_demand_operator(kern.R, kern.R_NT, kern.R_mu, n)
    a_nt, j = ops["A_NT"], ops["A_mu"]
    xi = sla.toeplitz(acf_values(Xi_mu, n))
    d_nt = a_nt @ sla.toeplitz(acf_values(Omega_NT, n)) @ a_nt.T
    omega = j @ xi @ j.T + d_nt
    cho, _ = cholesky_with_jitter(omega, scale=float(Omega_NT.variance))
    f_sum = _pricing_functional(f_mu, n)
    w = sla.cho_solve(cho, j @ (xi @ f_sum), check_finite=False)
    g_new = CausalKernel(w[::-1].copy())
    internals = {"kernels": kern, "Omega": omega, "D_NT": d_nt, "J_mu": j, "f_sum": f_sum}
    return g_new, internals


def propagator_update(G, Xi_mu, Omega_NT, T_cut):
    """Map a candidate propagator through one full maker-inference sweep.

    Computes the insider's demand kernels against ``G``, dresses the noise
    covariance, conditions the dividends on the observed flow, and reads the
    new pricing weights off the deepest-history row — the row least affected
    by the finite window.  A fixed point of this map is an equilibrium.
    """
    g_new, _ = _update_full(G, Xi_mu, Omega_NT, T_cut)
    return g_new
