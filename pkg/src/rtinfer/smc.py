"""Particle filter for the day-sliced epidemic model.

Runs K weighted particles through the latent (beta, x) dynamics, scoring them
against the observed counts and the per-day coalescent summaries, and returns
an unbiased estimate of the marginal likelihood. Resampling is systematic and
happens only when the effective sample size drops below a set fraction of K;
weights carry over otherwise, and the estimator bookkeeping accounts for that.
Backward simulation draws smoothed latent trajectories from the stored cloud.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    FixedRates,
    NEG_INF,
    ObservedSeries,
    Theta,
    coal_slice_log_pmf,
    folded_normal_log_pdf,
    latent_step_log_pmf,
    neg_binomial_log_pmf,
    obs_log_pmf,
)

__all__ = [
    "ParticleHistory",
    "ProposalOverflowError",
    "SmcEstimate",
    "run_smc",
    "propose_prevalence",
    "step_log_weight",
    "systematic_resample",
    "multinomial_resample",
    "ess",
    "backward_simulate",
    "trace_genealogy",
]

# rounds of vectorized rejection for the nonnegative Skellam draw before the
# leftovers get clamped to zero; the acceptance probability per round is near
# one for any live particle, so this is a guard, not a code path
_MAX_REJECTION_ROUNDS = 200

# largest Poisson rate the proposal samplers will attempt; parameters that
# push rates past this cannot be evaluated in floating point at all, so the
# filter reports such runs as degenerate instead of crashing mid-draw
_POISSON_LAM_CAP = 1e15


class ProposalOverflowError(ValueError):
    """Proposal rates grew beyond what the samplers can draw from."""


def _logsumexp(values: np.ndarray) -> float:
    top = values.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(values - top).sum()))


def mixture_weight(rho: float) -> float:
    """Probability of proposing from the data-driven component."""
    return min(rho / 0.1, 0.95)


@dataclass
class ParticleHistory:
    """Everything the filter saw, day by day, before any end-of-day resample.

    Row n-1 of each array describes day n: the proposed states, the carried
    unnormalized log-weights after that day's scoring, the normalized weights,
    and the index of each particle's parent in the previous row (identity
    unless a resample happened at the end of day n-1). ``resampled[n-1]`` says
    whether a resample was applied after day n's scoring.
    """

    x0: int
    beta: np.ndarray
    x: np.ndarray
    log_weights: np.ndarray
    weights: np.ndarray
    ancestors: np.ndarray
    resampled: np.ndarray
    increments: np.ndarray
    fixed_beta: Optional[float] = None
    degenerate_day: Optional[int] = None

    @property
    def n_days(self) -> int:
        return self.beta.shape[0]

    @property
    def n_particles(self) -> int:
        return self.beta.shape[1]


@dataclass
class SmcEstimate:
    log_likelihood: float
    history: ParticleHistory
    degenerate: bool = False

    def __post_init__(self):
        if self.degenerate and self.log_likelihood != NEG_INF:
            raise ValueError("a degenerate run must report -inf log-likelihood")


def ess(normalized_weights) -> float:
    """Effective sample size, 1 / sum of squared normalized weights."""
    w = np.asarray(normalized_weights, dtype=np.float64)
    return float(1.0 / np.sum(w * w))


def systematic_resample(normalized_weights, rng) -> np.ndarray:
    """One uniform draw stratified across K equal strata; ascending indices."""
    w = np.asarray(normalized_weights, dtype=np.float64)
    k = w.size
    if k == 0:
        raise ValueError("cannot resample zero particles")
    total = w.sum()
    if total <= 0.0:
        raise ValueError("all weights are zero, the filter is degenerate")
    if abs(total - 1.0) > 1e-9:
        raise ValueError("weights must be normalized")
    points = rng.uniform(0.0, 1.0 / k) + np.arange(k) / k
    idx = np.searchsorted(np.cumsum(w), points, side="left")
    return np.minimum(idx, k - 1).astype(np.int64)


def multinomial_resample(normalized_weights, rng) -> np.ndarray:
    """Independent draws; test-only alternative to systematic resampling."""
    w = np.asarray(normalized_weights, dtype=np.float64)
    if w.sum() <= 0.0:
        raise ValueError("all weights are zero, the filter is degenerate")
    idx = rng.choice(w.size, size=w.size, p=w / w.sum())
    return np.sort(idx).astype(np.int64)


def _draw_skellam_nonneg(x_prev, mu1, mu2, rng):
    """Vectorized x_prev + Poisson(mu1) - Poisson(mu2), redrawn until >= 0."""
    if np.any(mu1 > _POISSON_LAM_CAP) or np.any(mu2 > _POISSON_LAM_CAP):
        raise ProposalOverflowError("birth/death rates exceed the samplable range")
    out = np.zeros(x_prev.shape, dtype=np.int64)
    todo = np.arange(x_prev.size)
    for _ in range(_MAX_REJECTION_ROUNDS):
        births = rng.poisson(mu1[todo])
        deaths = rng.poisson(mu2[todo])
        val = x_prev[todo] + births - deaths
        ok = val >= 0
        out[todo[ok]] = val[ok]
        todo = todo[~ok]
        if todo.size == 0:
            break
    return out


def _propose_prevalence_batch(x_prev, beta_n, rates, y_n, rho, rng):
    """Propose next-day prevalence for a batch of particles.

    Returns (x_next, log_q, log_step) where log_step is the unconditioned
    model transition density, shared with the weight computation so the
    Skellam pmf is evaluated once per particle.
    """
    x_prev = np.asarray(x_prev, dtype=np.int64)
    beta_arr = np.broadcast_to(np.asarray(beta_n, dtype=np.float64), x_prev.shape)
    k = x_prev.size
    x_next = np.zeros(k, dtype=np.int64)
    alive = x_prev > 0
    data_driven = y_n is not None and y_n > 0

    if np.any(alive):
        idx = np.flatnonzero(alive)
        mu1 = beta_arr[idx] * x_prev[idx].astype(np.float64)
        mu2 = rates.gamma * x_prev[idx].astype(np.float64)
        if data_driven:
            if y_n / rho > _POISSON_LAM_CAP:
                raise ProposalOverflowError("data-driven proposal mean exceeds the samplable range")
            p = mixture_weight(rho)
            from_nb = rng.random(idx.size) < p
            n_nb = int(from_nb.sum())
            if n_nb:
                x_next[idx[from_nb]] = y_n + rng.negative_binomial(y_n, rho, size=n_nb)
            if n_nb < idx.size:
                sk = idx[~from_nb]
                x_next[sk] = _draw_skellam_nonneg(
                    x_prev[sk], mu1[~from_nb], mu2[~from_nb], rng
                )
        else:
            x_next[idx] = _draw_skellam_nonneg(x_prev[idx], mu1, mu2, rng)

    log_step = latent_step_log_pmf(x_prev, x_next, beta_n, rates)
    log_step = np.atleast_1d(np.asarray(log_step, dtype=np.float64))
    if data_driven:
        p = mixture_weight(rho)
        log_nb = neg_binomial_log_pmf(x_next - y_n, y_n, rho)
        log_q = np.logaddexp(np.log(p) + log_nb, np.log1p(-p) + log_step)
        # a dead particle stays at zero with certainty, outside the mixture
        log_q = np.where(alive, log_q, log_step)
    else:
        log_q = log_step.copy()
    return x_next, log_q, log_step


def propose_prevalence(x_prev, beta_n, rates, y_n, rho, rng):
    """Draw one next-day prevalence and return (x_next, log proposal density).

    With data present, a coin with bias min(rho/0.1, 0.95) picks between a
    negative-binomial guess centred on y_n/rho and the model's own Skellam
    step restricted to nonnegative values by rejection; the reported density
    is the full mixture (Skellam part left unconditioned). Missing or zero
    counts fall back to the pure Skellam branch, and an extinct particle stays
    at zero with log-density 0.
    """
    if x_prev < 0:
        raise ValueError("x_prev must be nonnegative")
    x_arr, log_q, _ = _propose_prevalence_batch(
        np.array([x_prev], dtype=np.int64), beta_n, rates, y_n, rho, rng
    )
    return int(x_arr[0]), float(log_q[0])


def step_log_weight(x_prev, x_next, beta_n, rates, y_n, rho, a_n, c_n, log_proposal_density):
    """Log incremental particle weight: model terms minus proposal density.

    The birth-rate prior factor is absent because beta is proposed from its
    prior and cancels. The observation term is dropped on missing days.
    """
    total = latent_step_log_pmf(x_prev, x_next, beta_n, rates)
    total = total + coal_slice_log_pmf(a_n, c_n, beta_n, np.asarray(x_next))
    if y_n is not None:
        total = total + obs_log_pmf(y_n, np.asarray(x_next), rho)
    return total - np.asarray(log_proposal_density, dtype=np.float64)


def _slice_arrays(g, n_days):
    try:
        a_seq, c_seq = g.a, g.c
    except AttributeError:
        a_seq, c_seq = g
    a = np.asarray(a_seq, dtype=np.int64)
    c = np.asarray(c_seq, dtype=np.int64)
    if a.shape != (n_days,) or c.shape != (n_days,):
        raise ValueError("slice summaries must have one (a, c) pair per day")
    return a, c


def run_smc(
    theta: Theta,
    rates: FixedRates,
    y: ObservedSeries,
    g,
    K: int,
    ess_threshold_fraction: float = 0.5,
    rng=None,
    fixed_beta: Optional[float] = None,
    resampling: str = "systematic",
) -> SmcEstimate:
    """Run the particle filter and return the log marginal likelihood estimate.

    g holds the per-day coalescent summaries aligned to epidemic days (either
    an object with .a/.c or a pair of sequences). Birth rates follow their
    prior (Exp with mean 2*gamma on day 1, folded normal steps after) unless
    fixed_beta pins them for testing. A day on which every particle hits an
    impossible state yields a degenerate estimate with -inf log-likelihood
    rather than an exception.
    """
    theta.validate()
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0 < ess_threshold_fraction <= 1:
        raise ValueError("ess_threshold_fraction must be in (0, 1]")
    if resampling == "systematic":
        resample = systematic_resample
    elif resampling == "multinomial":
        resample = multinomial_resample
    else:
        raise ValueError(f"unknown resampling scheme {resampling!r}")
    if rng is None:
        rng = np.random.default_rng()

    n_days = y.n_days
    a_all, c_all = _slice_arrays(g, n_days)

    beta_hist = np.zeros((n_days, K))
    x_hist = np.zeros((n_days, K), dtype=np.int64)
    logw_hist = np.zeros((n_days, K))
    w_hist = np.zeros((n_days, K))
    anc_hist = np.zeros((n_days, K), dtype=np.int64)
    resampled = np.zeros(n_days, dtype=bool)
    increments = np.zeros(n_days)

    history = ParticleHistory(
        x0=theta.x0,
        beta=beta_hist,
        x=x_hist,
        log_weights=logw_hist,
        weights=w_hist,
        ancestors=anc_hist,
        resampled=resampled,
        increments=increments,
        fixed_beta=fixed_beta,
    )
    if n_days == 0:
        return SmcEstimate(0.0, history)

    identity = np.arange(K, dtype=np.int64)
    x_prev = np.full(K, theta.x0, dtype=np.int64)
    beta_prev = None
    log_carried = np.zeros(K)
    lse_before = np.log(K)
    parents = identity

    for n in range(1, n_days + 1):
        if fixed_beta is not None:
            beta_n = np.full(K, float(fixed_beta))
        elif n == 1:
            beta_n = rng.exponential(scale=2.0 * rates.gamma, size=K)
        else:
            beta_n = np.abs(rng.normal(beta_prev, theta.sigma))

        y_n = y.day(n)
        try:
            x_n, log_q, log_step = _propose_prevalence_batch(
                x_prev, beta_n, rates, y_n, theta.rho, rng
            )
        except ProposalOverflowError:
            history.degenerate_day = n
            increments[n - 1] = NEG_INF
            return SmcEstimate(NEG_INF, history, degenerate=True)
        log_w = log_step + coal_slice_log_pmf(a_all[n - 1], c_all[n - 1], beta_n, x_n) - log_q
        if y_n is not None:
            log_w = log_w + obs_log_pmf(y_n, x_n, theta.rho)

        log_carried = log_carried + log_w
        beta_hist[n - 1] = beta_n
        x_hist[n - 1] = x_n
        logw_hist[n - 1] = log_carried
        anc_hist[n - 1] = parents

        if not np.any(np.isfinite(log_carried)):
            history.degenerate_day = n
            increments[n - 1] = NEG_INF
            return SmcEstimate(NEG_INF, history, degenerate=True)

        lse_after = _logsumexp(log_carried)
        increments[n - 1] = lse_after - lse_before
        weights = np.exp(log_carried - lse_after)
        weights = weights / weights.sum()
        w_hist[n - 1] = weights

        if n < n_days and (ess_threshold_fraction >= 1.0 or ess(weights) < ess_threshold_fraction * K):
            idx = resample(weights, rng)
            beta_prev = beta_n[idx]
            x_prev = x_n[idx]
            log_carried = np.zeros(K)
            lse_before = np.log(K)
            parents = idx
            resampled[n - 1] = True
        else:
            beta_prev = beta_n
            x_prev = x_n
            lse_before = lse_after
            parents = identity

    return SmcEstimate(float(np.sum(increments)), history)


def backward_simulate(history: ParticleHistory, theta: Theta, rates: FixedRates, rng):
    """Sample one smoothed (beta, x) trajectory from a stored particle cloud.

    The terminal particle is drawn from the final weights; earlier indices are
    drawn from the filtering weights tilted by the model transition into the
    already-chosen successor state. With a pinned birth rate the folded-normal
    factor is constant and drops out.
    """
    if history.degenerate_day is not None:
        raise ValueError("cannot smooth a degenerate filter run")
    n_days = history.n_days
    if n_days == 0:
        raise ValueError("history is empty")
    k = history.n_particles
    beta_path = np.zeros(n_days)
    x_path = np.zeros(n_days, dtype=np.int64)

    j = int(rng.choice(k, p=history.weights[n_days - 1]))
    beta_path[n_days - 1] = history.beta[n_days - 1, j]
    x_path[n_days - 1] = history.x[n_days - 1, j]

    for i in range(n_days - 2, -1, -1):
        logw = history.log_weights[i] + latent_step_log_pmf(
            history.x[i], x_path[i + 1], beta_path[i + 1], rates
        )
        if history.fixed_beta is None:
            logw = logw + folded_normal_log_pdf(
                beta_path[i + 1], history.beta[i], theta.sigma
            )
        top = np.max(logw)
        if not np.isfinite(top):
            raise ValueError(f"no particle on day {i + 1} can reach the chosen successor")
        w = np.exp(logw - top)
        j = int(rng.choice(k, p=w / w.sum()))
        beta_path[i] = history.beta[i, j]
        x_path[i] = history.x[i, j]
    return beta_path, x_path


def trace_genealogy(history: ParticleHistory, rng):
    """Sample one trajectory by following stored ancestor links backward.

    This is the no-extra-work alternative to backward simulation; repeated
    resampling collapses the early part of these paths onto few ancestors.
    """
    if history.degenerate_day is not None:
        raise ValueError("cannot trace a degenerate filter run")
    n_days = history.n_days
    if n_days == 0:
        raise ValueError("history is empty")
    beta_path = np.zeros(n_days)
    x_path = np.zeros(n_days, dtype=np.int64)
    j = int(rng.choice(history.n_particles, p=history.weights[n_days - 1]))
    for i in range(n_days - 1, -1, -1):
        beta_path[i] = history.beta[i, j]
        x_path[i] = history.x[i, j]
        j = int(history.ancestors[i, j])
    return beta_path, x_path
