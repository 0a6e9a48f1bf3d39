"""Tests for posterior summaries, scoring, and chain health metrics."""

import numpy as np
import pytest
from scipy import signal

from rtinfer.diagnostics import (
    ChainHealth,
    PosteriorSummary,
    chain_health,
    effective_sample_size,
    score_vs_truth,
    summarize,
)
from rtinfer.model import FixedRates
from rtinfer.pmmh import ChainOutput

GAMMA = FixedRates(gamma=0.1)


def make_chain(sigma, rho, x0, accepted, beta, x, log_lik=None):
    sigma = np.asarray(sigma, dtype=float)
    if log_lik is None:
        log_lik = np.zeros_like(sigma)
    return ChainOutput(
        sigma=sigma,
        rho=np.asarray(rho, dtype=float),
        x0=np.asarray(x0, dtype=int),
        log_lik=np.asarray(log_lik, dtype=float),
        accepted=np.asarray(accepted, dtype=bool),
        beta=np.asarray(beta, dtype=float),
        x=np.asarray(x, dtype=int),
    )


def random_chain(rng, n=200, days=5):
    return make_chain(
        sigma=rng.lognormal(-2.0, 0.3, n),
        rho=rng.uniform(0.1, 0.9, n),
        x0=rng.integers(1, 20, n),
        accepted=rng.random(n) < 0.3,
        beta=rng.lognormal(-1.5, 0.4, (n, days)),
        x=rng.integers(1, 100, (n, days)),
    )


def dummy_summary(mean, lo, hi):
    mean = np.asarray(mean, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    empty = {"sigma": 0.0, "rho": 0.0, "x0": 0.0}
    return PosteriorSummary(
        beta_mean=mean,
        beta_lo=lo,
        beta_hi=hi,
        rt_mean=mean / GAMMA.gamma,
        rt_lo=lo / GAMMA.gamma,
        rt_hi=hi / GAMMA.gamma,
        x_mean=mean,
        x_lo=lo,
        x_hi=hi,
        scalar_mean=empty,
        scalar_lo=empty,
        scalar_hi=empty,
        acceptance_rate=0.2,
        burn_in=0,
        n_kept=len(mean),
    )


class TestSummarize:
    def test_constant_chain_zero_width(self):
        n, days = 50, 4
        chain = make_chain(
            sigma=np.full(n, 0.07),
            rho=np.full(n, 0.4),
            x0=np.full(n, 3),
            accepted=np.zeros(n),
            beta=np.full((n, days), 0.25),
            x=np.full((n, days), 12),
        )
        s = summarize(chain, GAMMA, burn_in_fraction=0.1)
        assert np.all(s.beta_mean == 0.25)
        assert np.all(s.beta_lo == s.beta_hi)
        assert np.all(s.beta_lo == 0.25)
        assert s.scalar_mean["sigma"] == pytest.approx(0.07)
        assert s.scalar_lo["rho"] == s.scalar_hi["rho"] == 0.4

    def test_type7_quantile_on_1_to_100(self):
        # h = (n-1) p + 1 = 3.475 picks x_3 + 0.475 (x_4 - x_3) = 3.475.
        n = 100
        rng = np.random.default_rng(0)
        column = rng.permutation(np.arange(1.0, 101.0))
        chain = make_chain(
            sigma=column,
            rho=np.full(n, 0.5),
            x0=np.ones(n),
            accepted=np.ones(n),
            beta=column[:, None],
            x=np.ones((n, 1)),
        )
        s = summarize(chain, GAMMA, burn_in_fraction=0.0)
        assert s.beta_lo[0] == pytest.approx(3.475, rel=1e-12)
        assert s.beta_hi[0] == pytest.approx(97.525, rel=1e-12)
        assert s.scalar_lo["sigma"] == pytest.approx(3.475, rel=1e-12)

    def test_rt_equals_beta_over_gamma_exactly(self):
        rng = np.random.default_rng(1)
        chain = random_chain(rng)
        s = summarize(chain, GAMMA, burn_in_fraction=0.1)
        assert np.array_equal(s.rt_mean, s.beta_mean / GAMMA.gamma)
        assert np.array_equal(s.rt_lo, s.beta_lo / GAMMA.gamma)
        assert np.array_equal(s.rt_hi, s.beta_hi / GAMMA.gamma)

    def test_burn_in_ignores_prefix(self):
        rng = np.random.default_rng(2)
        chain = random_chain(rng, n=100)
        mangled = make_chain(
            sigma=np.concatenate([np.full(10, 99.0), chain.sigma[10:]]),
            rho=np.concatenate([np.full(10, 0.999), chain.rho[10:]]),
            x0=np.concatenate([np.full(10, 500), chain.x0[10:]]),
            accepted=chain.accepted,
            beta=np.vstack([np.full((10, 5), 9.0), chain.beta[10:]]),
            x=np.vstack([np.full((10, 5), 9), chain.x[10:]]),
        )
        a = summarize(chain, GAMMA, burn_in_fraction=0.1)
        b = summarize(mangled, GAMMA, burn_in_fraction=0.1)
        assert np.array_equal(a.beta_mean, b.beta_mean)
        assert a.scalar_mean == b.scalar_mean
        assert a.burn_in == 10
        assert a.n_kept == 90

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        n, days = 80, 3
        chain = make_chain(
            sigma=rng.integers(1, 30, n).astype(float),
            rho=rng.integers(1, 9, n) / 10.0,
            x0=rng.integers(1, 6, n),
            accepted=rng.random(n) < 0.5,
            beta=rng.integers(1, 50, (n, days)).astype(float),
            x=rng.integers(1, 50, (n, days)),
        )
        perm = rng.permutation(n)
        shuffled = make_chain(
            sigma=chain.sigma[perm],
            rho=chain.rho[perm],
            x0=chain.x0[perm],
            accepted=chain.accepted[perm],
            beta=chain.beta[perm],
            x=chain.x[perm],
        )
        a = summarize(chain, GAMMA, burn_in_fraction=0.0)
        b = summarize(shuffled, GAMMA, burn_in_fraction=0.0)
        assert np.array_equal(a.beta_mean, b.beta_mean)
        assert np.array_equal(a.beta_lo, b.beta_lo)
        assert np.array_equal(a.beta_hi, b.beta_hi)
        assert a.scalar_lo == b.scalar_lo

    def test_interval_brackets_mean(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            s = summarize(random_chain(rng, n=400), GAMMA, burn_in_fraction=0.1)
            assert np.all(s.beta_lo <= s.beta_mean)
            assert np.all(s.beta_mean <= s.beta_hi)
            for name in ("sigma", "rho", "x0"):
                assert s.scalar_lo[name] <= s.scalar_mean[name] <= s.scalar_hi[name]

    def test_acceptance_rate_passthrough(self):
        rng = np.random.default_rng(4)
        chain = random_chain(rng)
        s = summarize(chain, GAMMA)
        assert s.acceptance_rate == chain.acceptance_rate

    def test_empty_chain_rejected(self):
        chain = make_chain(
            sigma=[], rho=[], x0=[], accepted=[],
            beta=np.zeros((0, 3)), x=np.zeros((0, 3)),
        )
        with pytest.raises(ValueError):
            summarize(chain, GAMMA)

    @pytest.mark.parametrize("frac", [-0.1, 1.0, 1.5])
    def test_bad_burn_fraction_rejected(self, frac):
        rng = np.random.default_rng(5)
        with pytest.raises(ValueError):
            summarize(random_chain(rng), GAMMA, burn_in_fraction=frac)


class TestScoreVsTruth:
    def test_perfect_point_estimate(self):
        s = dummy_summary([0.2, 0.3, 0.25], [0.1, 0.2, 0.15], [0.3, 0.4, 0.35])
        rmse, width, coverage = score_vs_truth(s, np.array([0.2, 0.3, 0.25]))
        assert rmse == 0.0
        assert coverage == 1.0

    def test_hand_computed_example(self):
        s = dummy_summary([1.0, 2.0], [0.5, 1.0], [1.5, 3.0])
        rmse, width, coverage = score_vs_truth(s, np.array([1.25, 4.0]))
        assert rmse == pytest.approx(np.sqrt((0.0625 + 4.0) / 2.0))
        assert width == pytest.approx(1.5)
        assert coverage == 0.5

    def test_interval_endpoints_count_as_covered(self):
        s = dummy_summary([1.0], [0.5], [1.5])
        assert score_vs_truth(s, np.array([0.5]))[2] == 1.0
        assert score_vs_truth(s, np.array([1.5]))[2] == 1.0
        assert score_vs_truth(s, np.array([1.50001]))[2] == 0.0

    def test_length_mismatch_rejected(self):
        s = dummy_summary([1.0, 2.0], [0.5, 1.0], [1.5, 3.0])
        with pytest.raises(ValueError):
            score_vs_truth(s, np.array([1.0]))

    def test_bounds(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            mean = rng.uniform(0.0, 1.0, 8)
            half = rng.uniform(0.0, 0.5, 8)
            s = dummy_summary(mean, mean - half, mean + half)
            rmse, width, coverage = score_vs_truth(s, rng.uniform(0.0, 1.0, 8))
            assert rmse >= 0.0
            assert width >= 0.0
            assert 0.0 <= coverage <= 1.0


class TestEffectiveSampleSize:
    def test_iid_close_to_length(self):
        n = 20000
        for seed in range(10):
            rng = np.random.default_rng(seed)
            ess = effective_sample_size(rng.normal(size=n))
            assert abs(ess - n) / n < 0.10

    def test_ar1_matches_theory(self):
        # ESS of an AR(1) chain is n (1 - phi) / (1 + phi).
        n, phi = 40000, 0.5
        rng = np.random.default_rng(11)
        x = signal.lfilter([1.0], [1.0, -phi], rng.normal(size=n))
        expected = n * (1 - phi) / (1 + phi)
        assert effective_sample_size(x) == pytest.approx(expected, rel=0.15)

    def test_strong_correlation_shrinks_ess(self):
        n, phi = 5000, 0.95
        rng = np.random.default_rng(12)
        x = signal.lfilter([1.0], [1.0, -phi], rng.normal(size=n))
        assert effective_sample_size(x) < n / 10

    def test_constant_sequence_is_one(self):
        assert effective_sample_size(np.full(100, 3.7)) == 1.0

    def test_tiny_sequences(self):
        assert effective_sample_size(np.array([1.0])) == 1.0
        assert effective_sample_size(np.array([])) == 1.0

    def test_never_exceeds_length(self):
        # Antithetic pairs have negative lag-1 correlation; the estimate
        # is capped at the chain length.
        rng = np.random.default_rng(13)
        z = rng.normal(size=500)
        x = np.empty(1000)
        x[0::2] = z
        x[1::2] = -z
        assert effective_sample_size(x) <= 1000


class TestChainHealth:
    def test_alternating_acceptance_is_half(self):
        n = 100
        rng = np.random.default_rng(7)
        chain = random_chain(rng, n=n)
        chain = make_chain(
            sigma=chain.sigma, rho=chain.rho, x0=chain.x0,
            accepted=np.arange(n) % 2 == 0,
            beta=chain.beta, x=chain.x,
        )
        health = chain_health(chain)
        assert health.acceptance_rate == 0.5
        assert not health.all_rejected

    def test_iid_chain_ess_near_length(self):
        n = 20000
        for seed in range(10):
            rng = np.random.default_rng(seed)
            chain = random_chain(rng, n=n)
            health = chain_health(chain)
            for name in ("sigma", "rho", "x0"):
                assert abs(health.ess[name] - n) / n < 0.10, (seed, name)

    def test_all_rejected_flagged(self):
        n = 60
        chain = make_chain(
            sigma=np.full(n, 0.1),
            rho=np.full(n, 0.3),
            x0=np.full(n, 2),
            accepted=np.zeros(n),
            beta=np.full((n, 3), 0.2),
            x=np.full((n, 3), 5),
        )
        health = chain_health(chain)
        assert health.all_rejected
        assert health.acceptance_rate == 0.0
        assert health.ess == {"sigma": 1.0, "rho": 1.0, "x0": 1.0}
        assert health.max_sticky_run == n

    def test_sticky_run_hand_cases(self):
        rng = np.random.default_rng(8)
        base = random_chain(rng, n=7)

        def with_flags(flags):
            return make_chain(
                sigma=base.sigma, rho=base.rho, x0=base.x0,
                accepted=np.asarray(flags),
                beta=base.beta, x=base.x,
            )

        assert chain_health(with_flags([1, 0, 0, 0, 1, 0, 0])).max_sticky_run == 3
        assert chain_health(with_flags([1, 1, 1, 1, 1, 1, 1])).max_sticky_run == 0
        assert chain_health(with_flags([0, 0, 1, 0, 0, 0, 0])).max_sticky_run == 4

    def test_empty_chain_rejected(self):
        chain = make_chain(
            sigma=[], rho=[], x0=[], accepted=[],
            beta=np.zeros((0, 2)), x=np.zeros((0, 2)),
        )
        with pytest.raises(ValueError):
            chain_health(chain)

    def test_returns_dataclass(self):
        rng = np.random.default_rng(9)
        health = chain_health(random_chain(rng))
        assert isinstance(health, ChainHealth)
        assert set(health.ess) == {"sigma", "rho", "x0"}
