"""Equilibrium diagnostics: price-efficiency collapse, camouflage collapse,
and the error metrics that quantify both.

The reference curve for efficiency is the return ACF of the insider's price
estimate, obtained semi-analytically by projecting the forward dividend sum
on the dividend past.  Camouflage is judged against the bare noise-trader
ACF, shape-matched at lag 1 because the collapse deliberately excludes the
lag-0 excess.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .acf import acf_values, cholesky_with_jitter, toeplitz
from .errors import DomainError, TailError
from .solver import price_acf_from_G, variogram_from_sigma

__all__ = [
    "DiagnosticsReport",
    "it_return_acf",
    "efficiency_error",
    "camouflage_error",
    "diagnostics_report",
]


@dataclass(eq=False)
class DiagnosticsReport:
    """Per-lag diagnostic curves for one solved equilibrium."""

    err_xi: np.ndarray
    err_omega: np.ndarray
    xi_model: np.ndarray
    xi_it: np.ndarray
    omega_model: np.ndarray
    omega_nt: np.ndarray
    variogram: np.ndarray
    lag0_defect: float
    metadata: dict = field(default_factory=dict)


def _estimate_weights(spec, mass_tol=1e-10, cap=200_000):
    """Projection weights of the forward dividend sum on the strict past.

    Returns v (recency-ordered: v[0] weights mu_{t-1}) such that
    p^IT_t = sum_j v_j mu_{t-1-j}.  The conditioning window and the forward
    horizon both end where the ACF mass drops below ``mass_tol``.
    """
    if spec.family == "white":
        return np.zeros(1)
    n = 64
    while True:
        r = acf_values(spec, n)
        hit = np.nonzero(np.abs(r) < mass_tol * r[0])[0]
        if hit.size:
            P = int(max(hit[0], 1))
            break
        if n > cap:
            raise TailError(
                f"dividend ACF mass stays above {mass_tol:g} beyond lag {n}; "
                "the forward-sum projection does not truncate"
            )
        n *= 2
    H = 4 * P + 4  # horizon past which the remaining tail mass is negligible
    r = acf_values(spec, H)
    # right-hand side: sum over the forward horizon of the cross-covariances
    # with each conditioning lag, b_j = sum_{k >= 0} r_{k+1+j}
    tail = np.cumsum(r[::-1])[::-1]
    b = tail[1 : P + 1]
    try:
        v = sla.solve_toeplitz(r[:P], b)
    except np.linalg.LinAlgError:
        cho, _ = cholesky_with_jitter(toeplitz(spec, P).dense())
        v = sla.cho_solve(cho, b, check_finite=False)
    return v


def it_return_acf(Xi_mu, L):
    """ACF of the insider price-estimate increments at lags 0..L.

    The estimate is the Gaussian projection of all future dividends on the
    dividends the insider has seen; white dividends make it vanish
    identically.
    """
    if Xi_mu.family == "white":
        return np.zeros(L + 1)
    v = _estimate_weights(Xi_mu)
    P = len(v)
    # increment weights on mu: first difference of the estimate's lag profile
    w = np.empty(P + 1)
    w[0] = v[0]
    w[1:P] = v[1:] - v[:-1]
    w[P] = -v[-1]
    e = np.correlate(w, w, "full")  # e[s + P] = sum_m w_m w_{m+s}
    r = acf_values(Xi_mu, L + P + 1)
    out = np.empty(L + 1)
    s = np.arange(-P, P + 1)
    for tau in range(L + 1):
        out[tau] = e @ r[np.abs(tau - s)]
    return out


def efficiency_error(xi_model, xi_ref):
    """Cumulative relative absolute error between two normalized return ACFs.

    err_tau = sum_{i<=tau} |Xi_i/Xi_0 - ref_i/ref_0| / sum_{i<=tau} |Xi_i/Xi_0|.
    """
    a = np.asarray(xi_model, dtype=float)
    b = np.asarray(xi_ref, dtype=float)
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    if a[0] == 0.0 or b[0] == 0.0:
        raise DomainError("efficiency error undefined for a vanishing lag-0 value")
    a = a / a[0]
    b = b / b[0]
    return np.cumsum(np.abs(a - b)) / np.cumsum(np.abs(a))


def camouflage_error(omega_model, omega_nt):
    """Cumulative relative absolute error of the excess-demand ACF against the
    noise shape, both normalized at lag 1; the lag-0 element is excluded (the
    equilibrium keeps a lag-0 excess by design) and reported as zero."""
    a = np.asarray(omega_model, dtype=float)
    b = np.asarray(omega_nt, dtype=float)
    n = min(len(a), len(b))
    if n < 2:
        raise DomainError("need at least lags 0 and 1")
    a, b = a[:n], b[:n]
    if a[1] == 0.0 or b[1] == 0.0:
        raise DomainError("camouflage error undefined for a vanishing lag-1 value")
    a = a / a[1]
    b = b / b[1]
    out = np.zeros(n)
    out[1:] = np.cumsum(np.abs(a[1:] - b[1:])) / np.cumsum(np.abs(a[1:]))
    return out


def _return_acf_from_sigma(sigma):
    """Price-return ACF from the price ACF: Xi_tau = 2 Sigma_tau - Sigma_{tau+1}
    - Sigma_{|tau-1|} (one lag shorter than the input)."""
    s = np.asarray(sigma, dtype=float)
    out = np.empty(len(s) - 1)
    out[0] = 2.0 * (s[0] - s[1])
    out[1:] = 2.0 * s[1:-1] - s[2:] - s[:-2]
    return out


def diagnostics_report(solution, Xi_mu, Omega_NT, L=50):
    """Assemble the diagnostic curves for a converged equilibrium solution."""
    sigma = price_acf_from_G(solution.G, solution.Omega_row, L + 1)
    xi_model = _return_acf_from_sigma(sigma)
    xi_it = it_return_acf(Xi_mu, L)
    omega_model = np.asarray(solution.Omega_row[: L + 1], dtype=float)
    omega_nt = acf_values(Omega_NT, L + 1)
    defect = solution.Omega_row[0] * omega_nt[1] / solution.Omega_row[1] - 1.0
    return DiagnosticsReport(
        err_xi=efficiency_error(xi_model, xi_it),
        err_omega=camouflage_error(omega_model, omega_nt),
        xi_model=xi_model,
        xi_it=xi_it,
        omega_model=omega_model,
        omega_nt=omega_nt,
        variogram=variogram_from_sigma(sigma),
        lag0_defect=float(defect),
        metadata={
            "L": L,
            "T_cut": solution.G.T_cut,
            "dividend_family": Xi_mu.family,
            "nt_family": Omega_NT.family,
        },
    )
