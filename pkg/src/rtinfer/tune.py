"""Particle-count selection by log-likelihood variance targeting.

A short pilot chain at a generous particle count estimates the posterior
mean parameters; repeated SMC probes at a small particle count measure the
variance of the log-likelihood estimate there; and the count is scaled so
that variance lands on the 0.92^2 target, clamped to a configured floor and
cap. The whole scheme repeats a few times and the largest answer wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .model import FixedRates, ObservedSeries, PriorConfig, Theta
from .pmmh import ChainConfig, run_pmmh
from .smc import run_smc

__all__ = [
    "TuneSpec",
    "TuneRepeat",
    "TuneReport",
    "TuningFailedError",
    "choose_particles",
    "clamp_particles",
    "k_opt_raw",
]

_TARGET_SD = 0.92
_PILOT_BURN = 0.1


class TuningFailedError(RuntimeError):
    """Every tuning repeat was discarded, so no particle count can be chosen."""


@dataclass(frozen=True)
class TuneSpec:
    """Settings for the variance-targeting scheme."""

    pilot_iterations: int = 500
    K_large: int = 5000
    K_s: int = 500
    R: int = 100
    floor: int = 1000
    cap: int = 25000
    repeats: int = 3

    def validate(self):
        if self.floor > self.cap:
            raise ValueError("floor must not exceed cap")
        if self.R < 2:
            raise ValueError("R must be at least 2")
        if min(self.pilot_iterations, self.K_large, self.K_s, self.repeats) < 1:
            raise ValueError("pilot_iterations, K_large, K_s, repeats must be positive")


@dataclass
class TuneRepeat:
    """One repeat's intermediate results."""

    theta_bar: Optional[Theta]
    sigma2_hat: float
    k_opt_raw: float
    n_finite: int
    discarded: bool = False


@dataclass
class TuneReport:
    """Everything choose_particles measured on the way to its answer."""

    repeats: List[TuneRepeat] = field(default_factory=list)
    k_opt: int = 0
    injected: bool = False

    @property
    def n_discarded(self) -> int:
        return sum(r.discarded for r in self.repeats)


def k_opt_raw(k_s: int, sigma2_hat: float) -> float:
    """Scale the probe count so the log-likelihood variance hits 0.92^2.

    The ratio is taken before multiplying by the count so that a variance
    equal to the target reproduces the probe count exactly.
    """
    if k_s < 1:
        raise ValueError("k_s must be positive")
    if sigma2_hat < 0:
        raise ValueError("variance cannot be negative")
    return k_s * (sigma2_hat / (_TARGET_SD * _TARGET_SD))


def clamp_particles(value: float, floor: int, cap: int) -> int:
    """Round to an integer count and clamp into [floor, cap]."""
    return int(min(max(math.floor(value + 0.5), floor), cap))


def _posterior_mean_theta(chain) -> Theta:
    burn = int(_PILOT_BURN * chain.n_iterations)
    x0_bar = float(np.mean(chain.x0[burn:]))
    return Theta(
        sigma=float(np.mean(chain.sigma[burn:])),
        rho=float(np.mean(chain.rho[burn:])),
        x0=max(1, int(math.floor(x0_bar + 0.5))),
    )


def choose_particles(
    spec: TuneSpec,
    rates: Optional[FixedRates] = None,
    y: Optional[ObservedSeries] = None,
    g=None,
    init_theta: Optional[Theta] = None,
    prior_config: PriorConfig = PriorConfig(),
    seed: Optional[int] = None,
    smc_runner: Optional[Callable] = None,
    sigma2_values=None,
):
    """Pick a particle count for the main chain; returns (K_opt, report).

    smc_runner(theta, K, rng) -> SmcEstimate may be injected for testing.
    sigma2_values, when given, supplies one measured variance per repeat and
    skips the pilot/probe stages entirely, leaving only the arithmetic.

    The variance of each probe batch is taken over its finite log-likelihood
    estimates (population form, matching a plain two-pass computation); a
    batch with fewer than two finite values is discarded with a warning entry
    in the report.
    """
    spec.validate()
    report = TuneReport()

    if sigma2_values is not None:
        if len(sigma2_values) != spec.repeats:
            raise ValueError("need one injected variance per repeat")
        report.injected = True
        for s2 in sigma2_values:
            raw = k_opt_raw(spec.K_s, float(s2))
            report.repeats.append(
                TuneRepeat(theta_bar=None, sigma2_hat=float(s2), k_opt_raw=raw, n_finite=spec.R)
            )
        best = max(r.k_opt_raw for r in report.repeats)
        report.k_opt = clamp_particles(best, spec.floor, spec.cap)
        return report.k_opt, report

    if rates is None or y is None or g is None or init_theta is None:
        raise ValueError("rates, y, g, and init_theta are required unless variances are injected")
    if smc_runner is None:
        def smc_runner(theta, K, rng):
            return run_smc(theta, rates, y, g, K=K, rng=rng)

    seed_seq = np.random.SeedSequence(seed)
    for rep_seeds in seed_seq.spawn(spec.repeats):
        pilot_seed, probe_seed = rep_seeds.spawn(2)
        pilot_cfg = ChainConfig(
            iterations=spec.pilot_iterations,
            init_theta=init_theta,
            K=spec.K_large,
            seed=pilot_seed,
        )
        chain = run_pmmh(
            pilot_cfg,
            rates,
            y,
            g,
            prior_config=prior_config,
            smc_runner=lambda theta, rng: smc_runner(theta, spec.K_large, rng),
        )
        theta_bar = _posterior_mean_theta(chain)

        probe_rng = np.random.default_rng(probe_seed)
        logs = np.array(
            [smc_runner(theta_bar, spec.K_s, probe_rng).log_likelihood for _ in range(spec.R)]
        )
        finite = logs[np.isfinite(logs)]
        if len(finite) < 2:
            report.repeats.append(
                TuneRepeat(theta_bar=theta_bar, sigma2_hat=math.nan, k_opt_raw=math.nan,
                           n_finite=len(finite), discarded=True)
            )
            continue
        sigma2_hat = float(np.var(finite))
        report.repeats.append(
            TuneRepeat(
                theta_bar=theta_bar,
                sigma2_hat=sigma2_hat,
                k_opt_raw=k_opt_raw(spec.K_s, sigma2_hat),
                n_finite=len(finite),
            )
        )

    kept = [r.k_opt_raw for r in report.repeats if not r.discarded]
    if not kept:
        raise TuningFailedError("every tuning repeat produced a degenerate probe batch")
    report.k_opt = clamp_particles(max(kept), spec.floor, spec.cap)
    return report.k_opt, report
