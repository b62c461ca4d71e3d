"""Insider best response: causal kernels and the demand weights they induce.

Given a candidate propagator G, the insider's optimal linear strategy weights
past total flow, past noise-trader flow, and past dividends.  All three weight
vectors come out of one quadratic program whose Hessian is the symmetric
propagator block; the solves below share that factorization.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .acf import cholesky_with_jitter
from .errors import SizeError

__all__ = [
    "CausalKernel",
    "DemandKernels",
    "symmetric_propagator_block",
    "demand_kernel_R",
    "demand_kernel_RNT",
    "demand_kernel_Rmu",
    "compute_demand_kernels",
]


@dataclass(frozen=True, eq=False)
class CausalKernel:
    """A causal lag kernel: ``values[tau]`` acts on inputs ``tau`` steps back.

    Demand kernels carry no instantaneous term, so their ``values[0]`` is 0;
    the propagator itself has ``values[0] = G_0 > 0``.  Entries beyond the
    stored length are treated as zero everywhere.
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def T_cut(self):
        return len(self.values)

    @classmethod
    def delta(cls, weight, T_cut):
        v = np.zeros(T_cut)
        v[0] = weight
        return cls(v)

    @classmethod
    def exponential(cls, amplitude, rate, T_cut):
        return cls(amplitude * rate ** np.arange(T_cut))


@dataclass(frozen=True, eq=False)
class DemandKernels:
    """The insider's three response kernels and the propagator they answer."""

    R: CausalKernel
    R_NT: CausalKernel
    R_mu: CausalKernel
    source_G: CausalKernel


def symmetric_propagator_block(G, n):
    """n-by-n block of G + G^T (G vanishes at negative lags; diagonal is 2 G_0)."""
    if n > G.T_cut:
        raise SizeError(f"block size {n} exceeds kernel length {G.T_cut}")
    low = sla.toeplitz(G.values[:n], np.zeros(n))
    return low + low.T


def _solve_first_row(G):
    """u = S^{-1} e_0 for the symmetric block S: the insider's influence weights."""
    n = G.T_cut
    cho, _ = cholesky_with_jitter(symmetric_propagator_block(G, n))
    e0 = np.zeros(n)
    e0[0] = 1.0
    return sla.cho_solve(cho, e0, check_finite=False)


def _pack(row, T_cut):
    """Lay a lag >= 1 weight row into a CausalKernel (values[0] = 0)."""
    v = np.zeros(T_cut)
    m = min(len(row), T_cut - 1)
    v[1 : 1 + m] = row[:m]
    return CausalKernel(v)


def _r_row(G, u):
    # Hankel block coupling future trades to past flow: entry (k, j) = G_{k+j+1}
    h = sla.hankel(np.r_[G.values[1:], 0.0], np.zeros(G.T_cut))
    return -(u @ h)


def _rnt_row(G, u, F_nt):
    low = sla.toeplitz(G.values, np.zeros(G.T_cut))
    # forecast columns arrive oldest-first; demand weights are recency-ordered
    return -((low.T @ u) @ F_nt[:, ::-1])


def _rmu_row(u, F_mu):
    # each future trade at t+k pairs with the dividends from t+k on, so the
    # forecast rows enter with the running sum of the influence weights
    return np.cumsum(u) @ F_mu[:, ::-1]


def demand_kernel_R(G):
    """Weights the insider puts on past total order flow."""
    return _pack(_r_row(G, _solve_first_row(G)), G.T_cut)


def demand_kernel_RNT(G, F_nt):
    """Weights on past noise-trader flow, through the forecast of its future.

    ``F_nt`` is a forecast matrix as produced by :func:`~.acf.forecast_matrix`
    (rows are future steps, most recent observation in the last column).
    """
    return _pack(_rnt_row(G, _solve_first_row(G), F_nt), G.T_cut)


def demand_kernel_Rmu(G, F_mu):
    """Weights on past dividends: the insider chases the forecast fundamental."""
    return _pack(_rmu_row(_solve_first_row(G), F_mu), G.T_cut)


def compute_demand_kernels(G, F_mu, F_nt):
    """All three demand kernels from a single factorization of the symmetric block.

    Pass ``None`` for a forecast matrix to declare that process unpredictable
    (white), which zeroes the corresponding kernel.
    """
    n = G.T_cut
    u = _solve_first_row(G)
    r = _pack(_r_row(G, u), n)
    r_nt = _pack(_rnt_row(G, u, F_nt), n) if F_nt is not None else CausalKernel(np.zeros(n))
    r_mu = _pack(_rmu_row(u, F_mu), n) if F_mu is not None else CausalKernel(np.zeros(n))
    return DemandKernels(R=r, R_NT=r_nt, R_mu=r_mu, source_G=G)
