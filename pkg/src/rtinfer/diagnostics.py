"""Posterior summaries, chain health metrics, and accuracy scoring.

Everything here is pure post-processing of a stored chain. Burn-in is
applied at summary time so the raw trace stays auditable; quantiles use
the type-7 (linear interpolation) convention throughout so golden values
are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .model import FixedRates
from .pmmh import ChainOutput

__all__ = [
    "PosteriorSummary",
    "ChainHealth",
    "summarize",
    "score_vs_truth",
    "chain_health",
    "effective_sample_size",
]

_LO = 0.025
_HI = 0.975


@dataclass(frozen=True)
class PosteriorSummary:
    """Post-burn-in posterior summary of one chain.

    Per-day arrays cover beta and R_t = beta / gamma; scalar parameters
    get a mean and the same central 95% interval. All quantiles are
    type-7.
    """

    beta_mean: np.ndarray
    beta_lo: np.ndarray
    beta_hi: np.ndarray
    rt_mean: np.ndarray
    rt_lo: np.ndarray
    rt_hi: np.ndarray
    x_mean: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    scalar_mean: Dict[str, float]
    scalar_lo: Dict[str, float]
    scalar_hi: Dict[str, float]
    acceptance_rate: float
    burn_in: int
    n_kept: int

    @property
    def n_days(self) -> int:
        return len(self.beta_mean)


@dataclass(frozen=True)
class ChainHealth:
    """Acceptance rate, per-parameter ESS, and the longest sticky run."""

    acceptance_rate: float
    ess: Dict[str, float]
    max_sticky_run: int
    all_rejected: bool


def _column_summary(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = samples.mean(axis=0)
    lo = np.quantile(samples, _LO, axis=0, method="linear")
    hi = np.quantile(samples, _HI, axis=0, method="linear")
    return mean, lo, hi


def summarize(
    chain: ChainOutput, rates: FixedRates, burn_in_fraction: float = 0.1
) -> PosteriorSummary:
    """Compute posterior means and central 95% intervals after burn-in.

    Parameters
    ----------
    chain : ChainOutput
        A stored PMMH trace.
    rates : FixedRates
        Supplies gamma for the R_t = beta / gamma conversion.
    burn_in_fraction : float
        Fraction of initial iterations to drop, in [0, 1).
    """
    if chain.n_iterations == 0:
        raise ValueError("cannot summarize an empty chain")
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValueError("burn_in_fraction must be in [0, 1)")
    burn = int(burn_in_fraction * chain.n_iterations)
    kept = slice(burn, None)

    beta = chain.beta[kept]
    x = chain.x[kept]
    beta_mean, beta_lo, beta_hi = _column_summary(beta)
    # R_t is beta scaled by 1/gamma, so its summary is the beta summary
    # scaled the same way; dividing the summary keeps that relation exact.
    rt_mean = beta_mean / rates.gamma
    rt_lo = beta_lo / rates.gamma
    rt_hi = beta_hi / rates.gamma
    x_mean, x_lo, x_hi = _column_summary(x.astype(float))

    scalar_mean = {}
    scalar_lo = {}
    scalar_hi = {}
    for name in ("sigma", "rho", "x0"):
        values = getattr(chain, name)[kept].astype(float)
        scalar_mean[name] = float(values.mean())
        scalar_lo[name] = float(np.quantile(values, _LO, method="linear"))
        scalar_hi[name] = float(np.quantile(values, _HI, method="linear"))

    return PosteriorSummary(
        beta_mean=beta_mean,
        beta_lo=beta_lo,
        beta_hi=beta_hi,
        rt_mean=rt_mean,
        rt_lo=rt_lo,
        rt_hi=rt_hi,
        x_mean=x_mean,
        x_lo=x_lo,
        x_hi=x_hi,
        scalar_mean=scalar_mean,
        scalar_lo=scalar_lo,
        scalar_hi=scalar_hi,
        acceptance_rate=chain.acceptance_rate,
        burn_in=burn,
        n_kept=chain.n_iterations - burn,
    )


def score_vs_truth(
    summary: PosteriorSummary, true_beta: np.ndarray
) -> Tuple[float, float, float]:
    """Score a summary against the known transmission-rate path.

    Returns (rmse, mean_ci_width, coverage) where rmse is over posterior
    means, width is the mean upper-minus-lower gap, and coverage is the
    fraction of days whose truth falls inside the interval (inclusive).
    """
    truth = np.asarray(true_beta, dtype=float)
    if truth.shape != summary.beta_mean.shape:
        raise ValueError(
            "truth has %d days but summary has %d" % (len(truth), summary.n_days)
        )
    rmse = float(np.sqrt(np.mean((summary.beta_mean - truth) ** 2)))
    width = float(np.mean(summary.beta_hi - summary.beta_lo))
    inside = (truth >= summary.beta_lo) & (truth <= summary.beta_hi)
    coverage = float(np.mean(inside))
    return rmse, width, coverage


def effective_sample_size(samples: np.ndarray) -> float:
    """MCMC effective sample size via initial-positive-sequence truncation.

    Autocovariances are summed while the pairwise sums of consecutive
    lags stay positive, the standard conservative truncation for
    reversible chains. A constant sequence has no information and maps
    to an ESS of 1.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 2:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 1.0

    # FFT autocovariance; normalized by n (biased) as usual for ESS.
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    rho = acov / acov[0]

    # Geyer's initial positive sequence: sum Gamma_k = rho_{2k} + rho_{2k+1}
    # while positive.
    total = -1.0  # compensates for rho_0 counted twice in the pair sums
    k = 0
    while 2 * k + 1 < n:
        gamma = rho[2 * k] + rho[2 * k + 1]
        if gamma <= 0.0:
            break
        total += 2.0 * gamma
        k += 1
    if total < 1.0:
        total = 1.0
    ess = n / total
    return float(min(ess, n))


def _max_run_length(accepted: np.ndarray) -> int:
    """Longest stretch of consecutive rejections in the accept flags."""
    worst = 0
    run = 0
    for a in accepted:
        if a:
            run = 0
        else:
            run += 1
            if run > worst:
                worst = run
    return worst


def chain_health(chain: ChainOutput) -> ChainHealth:
    """Report acceptance rate, per-parameter ESS, and stickiness.

    A chain that never accepted anything carries a single point of
    information; its ESS is pinned to 1 and the result is flagged.
    """
    if chain.n_iterations == 0:
        raise ValueError("cannot assess an empty chain")
    accepted = np.asarray(chain.accepted, dtype=bool)
    all_rejected = not accepted.any()
    ess = {}
    for name in ("sigma", "rho", "x0"):
        values = getattr(chain, name).astype(float)
        ess[name] = 1.0 if all_rejected else effective_sample_size(values)
    return ChainHealth(
        acceptance_rate=float(accepted.mean()),
        ess=ess,
        max_sticky_run=_max_run_length(accepted),
        all_rejected=all_rejected,
    )
