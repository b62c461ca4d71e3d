"""Fixed-point iteration for the equilibrium propagator, plus the price-ACF
reconstruction from a converged kernel."""

from dataclasses import dataclass, field

import numpy as np

from .acf import acf_values
from .errors import ConditioningError, DivergenceError
from .kernels import CausalKernel, DemandKernels
from .pricing import _update_full

__all__ = [
    "EquilibriumSolution",
    "solve_equilibrium",
    "price_acf_from_G",
    "variogram_from_sigma",
]


@dataclass(eq=False)
class EquilibriumSolution:
    """Converged (or best-effort) propagator with its derived second moments."""

    G: CausalKernel
    iterations_run: int
    converged: bool
    residual_history: np.ndarray
    Sigma: np.ndarray
    Omega_row: np.ndarray
    kernels: DemandKernels
    jitter_note: dict = field(default_factory=dict)


def _default_seed(Xi_mu, Omega_NT, T_cut):
    """Warm start: the uncorrelated-noise closed form at an effective decay rate.

    The effective timescale is the lag where the dividend ACF drops to 1/e of
    its variance; if it never does within the window, fall back to a delta
    kernel at the dimensional impact scale sqrt(Xi_0 / Omega_0).
    """
    scale = np.sqrt(Xi_mu.variance / Omega_NT.variance)
    vals = acf_values(Xi_mu, T_cut) / Xi_mu.variance
    below = np.nonzero(vals <= np.exp(-1.0))[0]
    if len(below) == 0 or below[0] == 0:
        return CausalKernel.delta(scale, T_cut)
    from .markov import closed_form_uncorrelated

    alpha_eff = np.exp(-1.0 / below[0])
    return closed_form_uncorrelated(alpha_eff, Xi_mu.variance, Omega_NT.variance, T_cut=T_cut)


def solve_equilibrium(Xi_mu, Omega_NT, T_cut, T_it, tol=None, seed=None, mixing=1.0,
                      _update_fn=None):
    """Iterate the propagator map to its fixed point.

    Parameters
    ----------
    Xi_mu, Omega_NT : AcfSpec
        Dividend and noise-flow autocovariances.
    T_cut : int
        Truncation window; kernels and filter blocks are T_cut long/wide.
    T_it : int
        Iteration budget.
    tol : float, optional
        Sup-norm convergence threshold.  Defaults to 1e-8 times the current
        iterate's lag-0 impact.
    seed : CausalKernel, optional
        Starting propagator; defaults to a closed-form warm start.
    mixing : float
        Under-relaxation weight in (0, 1]: G <- mixing*G' + (1-mixing)*G.
        If an iterate wanders somewhere the two-sided propagator block stops
        being positive definite, the solve restarts itself from the seed with
        the weight halved (up to three times) before giving up; restarts are
        recorded in ``jitter_note``.

    Raises
    ------
    DivergenceError
        If the update residual grows three iterations in a row beyond ten
        times its initial value.
    ConditioningError
        If an iterate stays numerically indefinite even at the smallest
        restart weight.
    """
    if _update_fn is None:
        def _update_fn(g):
            return _update_full(g, Xi_mu, Omega_NT, T_cut)[0]

    seed_kernel = seed if seed is not None else _default_seed(Xi_mu, Omega_NT, T_cut)
    mix = mixing
    note = {}
    for attempt in range(4):
        g = seed_kernel
        history = []
        converged = False
        grow = 0
        iterations = 0
        try:
            for iterations in range(1, T_it + 1):
                g_new = _update_fn(g)
                residual = float(np.max(np.abs(g_new.values - g.values)))
                history.append(residual)
                threshold = tol if tol is not None else 1e-8 * abs(g_new.values[0])
                if residual < threshold:
                    g = g_new
                    converged = True
                    break
                if len(history) > 1 and residual > history[-2]:
                    grow += 1
                    if grow >= 3 and residual > 10.0 * history[0]:
                        raise DivergenceError(
                            f"propagator iteration diverging: residual {residual:.3g} "
                            f"after {iterations} iterations (started at {history[0]:.3g})",
                            residual_history=np.asarray(history),
                        )
                else:
                    grow = 0
                g = g_new if mix == 1.0 else CausalKernel(mix * g_new.values + (1.0 - mix) * g.values)
            _, internals = _update_full(g, Xi_mu, Omega_NT, T_cut)
            break
        except ConditioningError:
            if attempt == 3:
                raise
            mix *= 0.5
            note = {"mixing_restarts": attempt + 1, "mixing_used": mix}

    omega_row = internals["Omega"][-1, ::-1].copy()
    sigma = price_acf_from_G(g, omega_row, T_cut)
    return EquilibriumSolution(
        G=g,
        iterations_run=iterations,
        converged=converged,
        residual_history=np.asarray(history),
        Sigma=sigma,
        Omega_row=omega_row,
        kernels=internals["kernels"],
        jitter_note=note,
    )


def price_acf_from_G(G, Omega, L):
    """Price autocovariance Sigma_tau, tau = 0..L, from the propagator and the
    excess-demand ACF (vector over lags, zero beyond its length)."""
    g = np.asarray(G.values if hasattr(G, "values") else G, dtype=float)
    om = np.asarray(Omega, dtype=float)
    n = len(g)
    # w[d] = sum_a g_a g_{a+d}: the propagator's own lag profile
    w = np.array([g[: n - d] @ g[d:] for d in range(n)])

    def om_at(lag):
        lag = np.abs(lag)
        return np.where(lag < len(om), om[np.minimum(lag, len(om) - 1)], 0.0)

    d = np.arange(1, n)
    sigma = np.empty(L + 1)
    for tau in range(L + 1):
        sigma[tau] = w[0] * om_at(tau) + w[1:] @ (om_at(tau - d) + om_at(tau + d))
    return sigma


def variogram_from_sigma(Sigma):
    """V_tau = E[(p_{t+tau} - p_t)^2] = 2 (Sigma_0 - Sigma_tau); flat at 2 Sigma_0
    once the price has decorrelated."""
    s = np.asarray(Sigma, dtype=float)
    return 2.0 * (s[0] - s)
