"""Stationary autocovariance families and the structured linear algebra on them.

Everything downstream (insider demand kernels, market-maker filter, path
sampler) consumes second-order structure only through this module: parametric
autocovariance functions evaluated at integer lags, their Toeplitz blocks,
Gaussian forecast matrices, and the corner-modified tridiagonal inverse that
the exponential closed forms rest on.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, DomainError, SizeError

__all__ = [
    "AcfSpec",
    "ToeplitzMatrix",
    "acf_eval",
    "acf_values",
    "toeplitz",
    "forecast_matrix",
    "tridiag_corner_inverse",
    "cholesky_with_jitter",
]

_FAMILIES = ("exponential", "power_law", "damped_oscillation", "white", "tabulated")

#: Escalating relative diagonal loadings tried before declaring a matrix singular.
_JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


@dataclass(frozen=True)
class AcfSpec:
    """A stationary autocovariance, normalized so that lag 0 equals ``variance``.

    Use the family constructors (:meth:`exponential`, :meth:`power_law`,
    :meth:`damped_oscillation`, :meth:`white`, :meth:`tabulated`) rather than
    instantiating directly; they validate the parameter regime.
    """

    family: str
    variance: float = 1.0
    tau: float | None = None
    tau0: float | None = None
    gamma: float | None = None
    tau1: float | None = None
    tau2: float | None = None
    table: tuple | None = None

    @classmethod
    def exponential(cls, tau, variance=1.0):
        """exp(-|lag|/tau); the Markov (AR(1)-type) family."""
        _require(tau > 0, "exponential ACF needs tau > 0")
        _require(variance > 0, "variance must be positive")
        return cls("exponential", float(variance), tau=float(tau))

    @classmethod
    def power_law(cls, tau0, gamma, variance=1.0):
        """(1 + |lag|/tau0)^(-gamma).  gamma > 1 keeps the ACF summable."""
        _require(tau0 > 0, "power-law ACF needs tau0 > 0")
        _require(gamma > 1, "power-law ACF needs gamma > 1 (integrable tail)")
        _require(variance > 0, "variance must be positive")
        return cls("power_law", float(variance), tau0=float(tau0), gamma=float(gamma))

    @classmethod
    def damped_oscillation(cls, tau1, tau2, variance=1.0):
        """exp(-|lag|/tau1) * sin(|lag|/tau2 + pi/2), evaluated on the even extension."""
        _require(tau1 > 0 and tau2 > 0, "damped oscillation needs positive timescales")
        _require(variance > 0, "variance must be positive")
        return cls("damped_oscillation", float(variance), tau1=float(tau1), tau2=float(tau2))

    @classmethod
    def white(cls, variance=1.0):
        _require(variance > 0, "variance must be positive")
        return cls("white", float(variance))

    @classmethod
    def tabulated(cls, values):
        """Raw autocovariance table at lags 0, 1, ...; zero beyond the last entry.

        Positive-definiteness is the caller's assertion; construction only checks
        the lag-0 value.
        """
        vals = tuple(float(v) for v in values)
        _require(len(vals) >= 1 and vals[0] > 0, "tabulated ACF needs a positive lag-0 entry")
        return cls("tabulated", vals[0], table=vals)

    @property
    def alpha(self):
        """One-step decay factor e^(-1/tau) of the exponential family."""
        if self.family != "exponential":
            raise DomainError(f"alpha is defined for the exponential family, not {self.family!r}")
        return float(np.exp(-1.0 / self.tau))


def _require(cond, message):
    if not cond:
        raise DomainError(message)


def acf_eval(spec, lag):
    """Autocovariance of ``spec`` at integer lag(s); even in the sign of the lag."""
    t = np.abs(np.asarray(lag, dtype=float))
    f = spec.family
    if f == "exponential":
        shape = np.exp(-t / spec.tau)
    elif f == "power_law":
        shape = (1.0 + t / spec.tau0) ** (-spec.gamma)
    elif f == "damped_oscillation":
        shape = np.exp(-t / spec.tau1) * np.sin(t / spec.tau2 + 0.5 * np.pi)
    elif f == "white":
        shape = (t == 0).astype(float)
    elif f == "tabulated":
        tab = np.asarray(spec.table, dtype=float) / spec.table[0]
        idx = t.astype(int)
        shape = np.where(idx < len(tab), tab[np.minimum(idx, len(tab) - 1)], 0.0)
    else:
        raise DomainError(f"unknown ACF family {f!r}")
    out = spec.variance * shape
    return float(out) if np.ndim(lag) == 0 else out


def acf_values(spec, n):
    """Vector of autocovariances at lags 0..n-1."""
    return acf_eval(spec, np.arange(n))


@dataclass(frozen=True, eq=False)
class ToeplitzMatrix:
    """Symmetric Toeplitz block of an ACF, stored by its first row."""

    first_row: np.ndarray
    n: int

    def dense(self):
        return sla.toeplitz(self.first_row)


def toeplitz(spec, n):
    """Toeplitz covariance block with entry (i, j) = acf_eval(spec, i - j)."""
    if n < 1:
        raise SizeError(f"Toeplitz block needs n >= 1, got {n}")
    return ToeplitzMatrix(first_row=acf_values(spec, n), n=int(n))


def cholesky_with_jitter(a, scale=None):
    """Lower Cholesky factor of a nominally-PSD matrix, with escalating jitter.

    Near-singular Toeplitz blocks (slowly decaying ACFs at large sizes) can fail
    a bare factorization; a diagonal loading of eps * scale is added, with eps
    walked up a fixed ladder before giving up.

    Returns ``(cho, jitter)`` where ``cho`` is the ``(c, lower)`` pair accepted
    by ``scipy.linalg.cho_solve`` and ``jitter`` is the loading actually used.

    Raises
    ------
    ConditioningError
        If the matrix stays non-positive-definite at the top of the ladder.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if scale is None:
        scale = float(np.mean(np.diagonal(a)))
        if scale <= 0:
            scale = 1.0
    for eps in _JITTER_LADDER:
        m = a if eps == 0.0 else a + (eps * scale) * np.eye(n)
        try:
            return sla.cho_factor(m, lower=True, check_finite=False), eps * scale
        except np.linalg.LinAlgError:
            continue
    raise ConditioningError(
        f"{n}x{n} matrix not positive definite even with jitter {_JITTER_LADDER[-1] * scale:.3g}"
    )


def forecast_matrix(spec, n_past, n_future, method="dense"):
    """Gaussian forecast operator of a stationary process.

    Row k (k = 0..n_future-1) holds the coefficients of
    E[x_{t+k} | x_{t-1}, ..., x_{t-n_past}] on the past window, with the most
    recent observation in the *last* column: F = C_fp C_pp^{-1}, where C_pp is
    the past-past Toeplitz block and C_fp the future-past cross-covariance.

    ``method="levinson"`` routes the solve through the Toeplitz fast path; it is
    an optional accelerator and skips the jitter policy.
    """
    if n_past < 1 or n_future < 1:
        raise SizeError(f"forecast_matrix needs n_past, n_future >= 1, got ({n_past}, {n_future})")
    row = acf_values(spec, n_past)
    # lag between x_{t+k} and column p (holding x_{t-n_past+p}) is k + n_past - p
    lags = np.arange(n_past, n_past + n_future)[:, None] - np.arange(n_past)[None, :]
    cfp = acf_eval(spec, lags)
    if method == "levinson":
        return sla.solve_toeplitz(row, cfp.T).T
    cho, _ = cholesky_with_jitter(sla.toeplitz(row), scale=spec.variance)
    return sla.cho_solve(cho, cfp.T, check_finite=False).T


def tridiag_corner_inverse(diag, off, corner):
    """First row of the inverse of a semi-infinite tridiagonal operator whose
    (0, 0) entry is modified.

    The operator has ``corner`` at (0, 0), ``diag`` elsewhere on the main
    diagonal and ``off`` on the two adjacent diagonals.  Interior rows of the
    inverse's defining system admit a decaying mode gamma solving
    off * g^2 + diag * g + off = 0, and the boundary row then fixes the
    amplitude, so the first row of the inverse is exactly

        amplitude * rate**j,   amplitude = 1 / (corner + off * rate).

    Returns a dict with keys ``amplitude`` and ``rate``.

    Raises
    ------
    DomainError
        If the coupling has the wrong sign or no decaying mode exists
        ((diag/off)^2 < 4), signalling an invalid parameter regime.
    """
    if off >= 0 or diag <= 0:
        raise DomainError("expected diag > 0 and off < 0 (negatively coupled chain)")
    beta = -diag / off
    disc = beta * beta - 4.0
    if disc < 0:
        raise DomainError(f"no decaying mode: (diag/off)^2 = {beta * beta:.6g} < 4")
    rate = (beta - np.sqrt(disc)) / 2.0
    denom = corner + off * rate
    if denom <= 0:
        raise DomainError("boundary row is not invertible for these corner elements")
    return {"amplitude": 1.0 / denom, "rate": rate}
