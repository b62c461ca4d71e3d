"""Monte Carlo simulation of the dealer market.

A path is built in three vectorized stages: exact stationary sampling of the
exogenous processes (dividends and noise flow), the insider's linear feedback
recursion, and the propagator pricing convolution.  Accounting then follows
mechanically: each agent's cash collects dividends on inventory and pays for
trades at the transaction price.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.linalg import toeplitz as dense_toeplitz
from scipy.signal import lfilter

from .acf import acf_values, cholesky_with_jitter
from .errors import SizeError, TailError

__all__ = [
    "MarketPath",
    "sample_stationary_gaussian",
    "simulate_market",
    "empirical_acf",
    "payoff_and_risk_stats",
]


@dataclass(eq=False)
class MarketPath:
    """One realized market history, including the discarded warm-up.

    ``cash``, ``position`` and ``wealth`` are dicts keyed by agent
    ("it", "nt", "mm").  Positions include the trade of the same step; cash
    collects the dividend on that position and pays the transaction at the
    realized price.  The market-maker side is computed from its own accounting
    identities, so the conservation laws are measured, not imposed.
    """

    mu: np.ndarray
    q_nt: np.ndarray
    q_it: np.ndarray
    q: np.ndarray
    p: np.ndarray
    cash: dict
    position: dict
    wealth: dict
    burn_in: int
    rng_seed: int
    metadata: dict = field(default_factory=dict)

    @property
    def q_mm(self):
        return -self.q

    def __len__(self):
        return len(self.p)


# ---------------------------------------------------------------------------
# stationary Gaussian sampling
# ---------------------------------------------------------------------------

def _sample_ar1(spec, T, rng):
    alpha = spec.alpha
    eps = rng.standard_normal(T)
    eps[0] *= np.sqrt(spec.variance)
    if T > 1:
        eps[1:] *= np.sqrt(spec.variance * (1.0 - alpha * alpha))
    return lfilter([1.0], [1.0, -alpha], eps)


def _sample_circulant(r, T, rng):
    """Dietrich-Newsam spectral sampling; None if the embedding is not PSD."""
    n = 2 * T - 2 if T > 1 else 1
    c = np.concatenate([r, r[-2:0:-1]]) if T > 1 else r[:1]
    lam = np.fft.fft(c).real
    if lam.min() < -1e-8 * lam.max():
        return None
    lam = np.clip(lam, 0.0, None)
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x = np.fft.ifft(np.sqrt(lam) * w)
    return np.sqrt(n) * x.real[:T]


def _chol_factor(cov):
    cho, _ = cholesky_with_jitter(cov)
    return np.tril(cho[0])


def _sample_conditional(r, T, rng):
    """Exact Cholesky start, then block extension conditioned on the last K
    lags (K covers all ACF mass above 1e-10, so the truncation is idle)."""
    r0 = r[0]
    K = len(r)
    for L in range(1, len(r)):
        if abs(r[L]) < 1e-10 * r0:
            K = L
            break
    K = min(K, 2048)
    if T <= 2 * K:
        return _chol_factor(dense_toeplitz(r[:T])) @ rng.standard_normal(T)
    B = K
    x = np.empty(T)
    start_cov = dense_toeplitz(r[:K])
    x[:K] = _chol_factor(start_cov) @ rng.standard_normal(K)
    # stationary one-block predictor: coefficients and innovation factor reused
    pad = np.concatenate([r, np.zeros(max(0, K + B - len(r)))])
    cross = np.empty((K, B))
    for j in range(B):
        cross[:, j] = pad[j + 1 : j + 1 + K][::-1]
    coef = np.linalg.solve(start_cov, cross)
    inn_cov = dense_toeplitz(r[:B]) - cross.T @ coef
    inn_chol = _chol_factor(inn_cov + 1e-12 * r0 * np.eye(B))
    pos = K
    while pos < T:
        b = min(B, T - pos)
        mean = coef[:, :b].T @ x[pos - K : pos]
        x[pos : pos + b] = mean + (inn_chol[:b, :b] @ rng.standard_normal(b))
        pos += b
    return x


def _sample(spec, T, rng):
    if spec.family == "white":
        return np.sqrt(spec.variance) * rng.standard_normal(T), "white"
    if spec.family == "exponential":
        return _sample_ar1(spec, T, rng), "ar1"
    r = acf_values(spec, T)
    x = _sample_circulant(r, T, rng)
    if x is not None:
        return x, "circulant"
    return _sample_conditional(r, T, rng), "cholesky-extension"


def sample_stationary_gaussian(spec, T, seed):
    """Draw a zero-mean stationary Gaussian path with the requested ACF.

    Exponential specs use the exact AR(1) recursion; anything else goes
    through circulant embedding, falling back to Cholesky with conditional
    block extension when the embedding fails to be nonnegative.
    """
    if T < 1:
        raise SizeError(f"need T >= 1, got {T}")
    rng = np.random.default_rng(seed)
    x, _ = _sample(spec, int(T), rng)
    return x


# ---------------------------------------------------------------------------
# the market itself
# ---------------------------------------------------------------------------

def _accumulate(x):
    """Running sum carried in extended precision, rounded once per element.

    Keeps the agents' positions and cash accounts accurate enough that their
    conservation laws cancel to float64 rounding on every step of a
    million-step path (plain float64 running sums drift a few orders of
    magnitude above that).  Falls back to ordinary accumulation on platforms
    where long double is not actually wider.
    """
    return np.cumsum(x, dtype=np.longdouble).astype(np.float64)


def simulate_market(G, kernels, Xi_mu, Omega_NT, T, burn_in, seed):
    """Run the three-agent market for ``burn_in + T`` steps.

    The insider's trade solves the feedback recursion
    q_t = q^NT_t + (R * q)_t + (R^NT * q^NT)_t + (R^mu * mu)_t,
    implemented as a single IIR filter; prices follow by causal convolution
    of the propagator with the cleared flow.  The first ``burn_in`` steps let
    the kernels fill their history windows and are flagged for exclusion.
    """
    if T < 1:
        raise SizeError(f"need T >= 1, got {T}")
    if burn_in < 0:
        raise SizeError(f"need burn_in >= 0, got {burn_in}")
    N = int(burn_in + T)
    rng = np.random.default_rng(seed)
    mu, method_mu = _sample(Xi_mu, N, rng)
    q_nt, method_nt = _sample(Omega_NT, N, rng)

    drive = q_nt + lfilter(kernels.R_NT.values, [1.0], q_nt) \
        + lfilter(kernels.R_mu.values, [1.0], mu)
    ar = np.empty(kernels.R.T_cut)
    ar[0] = 1.0
    ar[1:] = -kernels.R.values[1:]
    q = lfilter([1.0], ar, drive)
    q_it = q - q_nt
    # rebuild the cleared flow as the literal sum so that clearing holds
    # bit-exactly; this moves q by at most one rounding of the recursion output
    q = q_it + q_nt
    p = lfilter(G.values, [1.0], q)

    q_mm = -q
    pos_it = _accumulate(q_it)
    pos_nt = _accumulate(q_nt)
    pos_mm = _accumulate(q_mm)
    cash_it = _accumulate(mu * pos_it - p * q_it)
    cash_nt = _accumulate(mu * pos_nt - p * q_nt)
    cash_mm = _accumulate(mu * pos_mm - p * q_mm)
    position = {"it": pos_it, "nt": pos_nt, "mm": pos_mm}
    cash = {"it": cash_it, "nt": cash_nt, "mm": cash_mm}
    wealth = {k: cash[k] + position[k] * p for k in cash}
    return MarketPath(
        mu=mu, q_nt=q_nt, q_it=q_it, q=q, p=p,
        cash=cash, position=position, wealth=wealth,
        burn_in=int(burn_in), rng_seed=seed,
        metadata={"sampler_mu": method_mu, "sampler_nt": method_nt},
    )


def empirical_acf(x, max_lag):
    """Biased (1/T) sample autocovariance at lags 0..max_lag, mean removed."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if max_lag >= n:
        raise SizeError(f"max_lag {max_lag} needs a series longer than {n}")
    x = x - x.mean()
    m = sfft.next_fast_len(2 * n)
    f = sfft.rfft(x, m)
    acov = sfft.irfft(f * np.conj(f), m)[: max_lag + 1]
    return acov / n


def _forward_window(Xi_mu, cap=20000):
    """Lag beyond which the dividend ACF mass is below 1e-10 of lag 0."""
    if Xi_mu.family == "white":
        return 1
    probe = 64
    while probe <= cap:
        r = acf_values(Xi_mu, probe)
        hit = np.nonzero(np.abs(r) < 1e-10 * r[0])[0]
        if hit.size:
            return int(hit[0])
        probe *= 2
    raise TailError(
        f"dividend ACF mass stays above 1e-10 beyond lag {cap}; "
        "forward sums would not converge on any feasible path"
    )


def payoff_and_risk_stats(path, Xi_mu, n_batches=50):
    """Per-step payoff averages and market-maker risk with batch-means errors.

    ``it_gain`` and ``nt_loss`` are the signed trading P&L per step of the
    insider and the noise trader against the realized fundamental (the
    truncated forward dividend sum): positive means the agent makes money, so
    at equilibrium the two sum to zero rather than cancel by sign convention.
    ``mm_risk`` is the second moment of the market maker's per-step exposure
    q_t (p_t - p^F_t), reported both directly and through the Gaussian
    moment factorization (``mm_risk_wick``).
    """
    Lf = _forward_window(Xi_mu)
    N = len(path)
    lo = path.burn_in
    hi = N - Lf
    if hi - lo < 10 * n_batches:
        raise TailError(
            f"only {max(hi - lo, 0)} usable steps after burn-in {lo} and "
            f"forward window {Lf}; need at least {10 * n_batches}"
        )
    S = np.concatenate([[0.0], np.cumsum(path.mu)])
    t = np.arange(lo, hi)
    p_fut = S[t + Lf] - S[t]
    Y = path.p[t] - p_fut
    q = path.q[t]
    gain_it = -path.q_it[t] * Y
    gain_nt = -path.q_nt[t] * Y
    dC_mm = path.mu[t] * path.position["mm"][t] - path.p[t] * (-q)
    qY = q * Y

    def batched(v):
        nb = (len(v) // n_batches) * n_batches
        return v[:nb].reshape(n_batches, -1).mean(axis=1)

    def se(bm):
        return float(bm.std(ddof=1) / np.sqrt(len(bm)))

    b_drift, b_it, b_nt = batched(dC_mm), batched(gain_it), batched(gain_nt)
    b_q2, b_y2, b_qy, b_qy2 = batched(q * q), batched(Y * Y), batched(qY), batched(qY * qY)
    b_wick = b_q2 * b_y2 + 2.0 * b_qy ** 2
    mm_risk = float(np.mean(qY * qY))
    mm_risk_wick = float(np.mean(q * q) * np.mean(Y * Y) + 2.0 * np.mean(qY) ** 2)
    return {
        "mm_drift": float(dC_mm.mean()),
        "nt_loss": float(gain_nt.mean()),
        "it_gain": float(gain_it.mean()),
        "mm_risk": mm_risk,
        "mm_risk_wick": mm_risk_wick,
        "risk_gap": mm_risk - mm_risk_wick,
        "risk_gap_se": se(b_qy2 - b_wick),
        "balance_se": se(b_it + b_nt),
        "standard_errors": {
            "mm_drift": se(b_drift),
            "nt_loss": se(b_nt),
            "it_gain": se(b_it),
            "mm_risk": se(b_qy2),
        },
        "n_samples": int(hi - lo),
        "forward_window": Lf,
    }
