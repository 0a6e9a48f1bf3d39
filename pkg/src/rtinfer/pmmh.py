"""Particle marginal Metropolis-Hastings over (sigma, rho, x0).

The chain walks an unconstrained space u = (log sigma, logit rho, log x0)
with a Gaussian random-walk kernel. The kernel covariance adapts by the
rank-one empirical recursion on the chain's transformed states, and a global
scale follows a Robbins-Monro update targeting a fixed acceptance rate.
Each proposal is scored with the unbiased SMC likelihood estimate; a
rejected iteration keeps the retained state's estimate and sampled path
untouched, and a fresh backward-simulated trajectory is drawn only when a
proposal is accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .model import FixedRates, ObservedSeries, PriorConfig, Theta, log_prior_theta
from .smc import backward_simulate, run_smc

__all__ = [
    "AdaptState",
    "ChainConfig",
    "ChainInitError",
    "ChainOutput",
    "adapt",
    "propose_theta",
    "run_pmmh",
    "transform_theta",
    "untransform_theta",
]

# expit saturates to 1.0 past ~37; keep rho strictly inside (0, 1) so the
# logit transform stays finite on the way back out
_RHO_MAX = float(np.nextafter(1.0, 0.0))


class ChainInitError(RuntimeError):
    """The SMC estimate collapsed at the chain's starting parameters."""


def transform_theta(theta: Theta) -> np.ndarray:
    """Map theta to the unconstrained walk space (log sigma, logit rho, log x0)."""
    return np.array(
        [
            math.log(theta.sigma),
            math.log(theta.rho) - math.log1p(-theta.rho),
            math.log(theta.x0),
        ]
    )


def untransform_theta(u) -> Theta:
    """Inverse of transform_theta; x0 rounds to the nearest integer >= 1."""
    u = np.asarray(u, dtype=np.float64)
    sigma = math.exp(u[0])
    rho = min(1.0 / (1.0 + math.exp(-u[1])), _RHO_MAX)
    x0 = max(1, int(math.floor(math.exp(u[2]) + 0.5)))
    return Theta(sigma=sigma, rho=rho, x0=x0)


def _log_jacobian(theta: Theta) -> float:
    # |d theta / d u| = sigma * rho(1-rho) * x0, evaluated at the stored
    # (rounded) state; the rounding itself is treated as part of the
    # deterministic map
    return (
        math.log(theta.sigma)
        + math.log(theta.rho)
        + math.log1p(-theta.rho)
        + math.log(theta.x0)
    )


def propose_theta(current: Theta, adapted_cov, scale: float, rng):
    """Draw a random-walk proposal and return it with its log proposal ratio.

    The walk is Gaussian in u-space with covariance scale^2 * adapted_cov,
    so the kernel itself is symmetric; the returned ratio is the Jacobian
    correction for the change of variables back to theta.
    """
    if scale == 0.0:
        return current, 0.0
    cov = np.asarray(adapted_cov, dtype=np.float64)
    chol = np.linalg.cholesky(cov)
    u = transform_theta(current)
    u_new = u + scale * (chol @ rng.standard_normal(3))
    proposal = untransform_theta(u_new)
    return proposal, _log_jacobian(proposal) - _log_jacobian(current)


@dataclass
class AdaptState:
    """Running state of the adaptive kernel.

    cov and mean follow the empirical recursion over the chain's transformed
    post-decision states; log_scale follows the acceptance-rate targeting
    update. jitter_count records how often positive definiteness had to be
    restored by a diagonal bump.
    """

    u: np.ndarray
    log_scale: float = 0.0
    mean: np.ndarray = None
    cov: np.ndarray = None
    target_acceptance: float = 0.10
    decay: float = 0.66
    jitter_count: int = 0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.mean is None:
            self.mean = self.u.copy()
        if self.cov is None:
            self.cov = 0.01 * np.eye(len(self.u))

    @property
    def scale(self) -> float:
        return math.exp(self.log_scale)


def adapt(state: AdaptState, accepted: bool, proposal_u, iteration: int) -> AdaptState:
    """One diminishing-adaptation step after an accept/reject decision.

    The scale update uses eta_i = i^(-decay) on the realized acceptance
    indicator; the mean/covariance recursion uses (i+1)^(-decay) so its
    convex mixing weight stays below one from the first iteration and the
    covariance cannot collapse to the newest rank-one term.
    """
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    u_next = np.asarray(proposal_u, dtype=np.float64) if accepted else state.u
    eta = float(iteration) ** (-state.decay)
    log_scale = state.log_scale + eta * ((1.0 if accepted else 0.0) - state.target_acceptance)

    w = float(iteration + 1) ** (-state.decay)
    d = u_next - state.mean
    mean = state.mean + w * d
    cov = state.cov + w * (np.outer(d, d) - state.cov)
    cov = 0.5 * (cov + cov.T)
    jitter_count = state.jitter_count
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = cov + (1e-10 * (np.trace(cov) / len(cov) + 1e-12)) * np.eye(len(cov))
        jitter_count += 1
    return replace(
        state,
        u=u_next,
        log_scale=log_scale,
        mean=mean,
        cov=cov,
        jitter_count=jitter_count,
    )


@dataclass(frozen=True)
class ChainConfig:
    """Settings for one PMMH chain."""

    iterations: int
    init_theta: Theta
    K: int
    target_acceptance: float = 0.10
    decay: float = 0.66
    seed: Optional[int] = None

    def validate(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target_acceptance must be in (0, 1)")
        if not 0.5 < self.decay <= 1.0:
            raise ValueError("decay must be in (0.5, 1]")
        self.init_theta.validate()
        if self.init_theta.rho >= 1.0:
            raise ValueError("init rho must be strictly below 1 for the logit walk")


@dataclass
class ChainOutput:
    """One chain's stored trace: one row per iteration, post decision.

    Row i of beta/x is the backward-simulated path attached to the theta
    state retained at iteration i; on rejections it repeats the previous row.
    """

    sigma: np.ndarray
    rho: np.ndarray
    x0: np.ndarray
    log_lik: np.ndarray
    accepted: np.ndarray
    beta: np.ndarray
    x: np.ndarray

    @property
    def n_iterations(self) -> int:
        return len(self.sigma)

    @property
    def n_days(self) -> int:
        return self.beta.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


def _log_accept_ratio(curr_lp, prop_lp, curr_ll, prop_ll, log_proposal_ratio):
    if prop_lp == -math.inf:
        return -math.inf
    return (prop_lp - curr_lp) + (prop_ll - curr_ll) + log_proposal_ratio


def run_pmmh(
    config: ChainConfig,
    rates: FixedRates,
    y: ObservedSeries,
    g,
    prior_config: PriorConfig = PriorConfig(),
    smc_runner: Optional[Callable] = None,
) -> ChainOutput:
    """Run one PMMH chain and return its full trace.

    smc_runner(theta, rng) -> SmcEstimate may be injected for testing; the
    default runs the particle filter on (y, g) with config.K particles.
    """
    config.validate()
    rates.validate()
    n_days = y.n_days
    if n_days < 1:
        raise ValueError("need at least one day of data (values may all be missing)")
    rng = np.random.default_rng(config.seed)
    if smc_runner is None:
        def smc_runner(theta, rng):
            return run_smc(theta, rates, y, g, K=config.K, rng=rng)

    cur = config.init_theta
    cur_lp = log_prior_theta(cur, prior_config)
    if cur_lp == -math.inf:
        raise ValueError("initial theta has zero prior density")
    est = smc_runner(cur, rng)
    if est.degenerate:
        raise ChainInitError(
            "the particle filter collapsed at the initial parameters; "
            "start the chain from a different theta"
        )
    cur_ll = est.log_likelihood
    cur_beta, cur_x = backward_simulate(est.history, cur, rates, rng)

    n_iter = config.iterations
    out = ChainOutput(
        sigma=np.zeros(n_iter),
        rho=np.zeros(n_iter),
        x0=np.zeros(n_iter, dtype=np.int64),
        log_lik=np.zeros(n_iter),
        accepted=np.zeros(n_iter, dtype=bool),
        beta=np.zeros((n_iter, n_days)),
        x=np.zeros((n_iter, n_days), dtype=np.int64),
    )
    state = AdaptState(
        u=transform_theta(cur),
        target_acceptance=config.target_acceptance,
        decay=config.decay,
    )

    for i in range(1, n_iter + 1):
        prop, log_jac = propose_theta(cur, state.cov, state.scale, rng)
        prop_lp = log_prior_theta(prop, prior_config)
        accepted = False
        if prop_lp > -math.inf:
            est = smc_runner(prop, rng)
            if not est.degenerate:
                log_r = _log_accept_ratio(cur_lp, prop_lp, cur_ll, est.log_likelihood, log_jac)
                if log_r >= 0.0 or rng.uniform() < math.exp(log_r):
                    accepted = True
                    cur, cur_lp, cur_ll = prop, prop_lp, est.log_likelihood
                    cur_beta, cur_x = backward_simulate(est.history, cur, rates, rng)
        state = adapt(state, accepted, transform_theta(prop), i)

        j = i - 1
        out.sigma[j] = cur.sigma
        out.rho[j] = cur.rho
        out.x0[j] = cur.x0
        out.log_lik[j] = cur_ll
        out.accepted[j] = accepted
        out.beta[j] = cur_beta
        out.x[j] = cur_x
    return out
