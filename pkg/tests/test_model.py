import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from rtinfer.model import (
    FixedRates,
    ObservedSeries,
    PriorConfig,
    Theta,
    binomial_log_pmf,
    coal_slice_log_pmf,
    folded_normal_log_pdf,
    latent_step_log_pmf,
    log_bessel_i,
    log_beta1_prior,
    log_prior_theta,
    log_priors,
    neg_binomial_log_pmf,
    obs_log_pmf,
    skellam_log_pmf,
)

import oracles


class TestSkellam:
    def test_point_mass_at_zero(self):
        assert skellam_log_pmf(0, 0.0, 0.0) == 0.0
        assert skellam_log_pmf(1, 0.0, 0.0) == -np.inf
        assert skellam_log_pmf(-2, 0.0, 0.0) == -np.inf

    def test_zero_death_rate_is_poisson(self):
        got = skellam_log_pmf(3, 2.5, 0.0)
        want = math.log(2.5**3 / math.factorial(3)) - 2.5
        assert got == pytest.approx(want, abs=1e-12)
        assert skellam_log_pmf(-1, 2.5, 0.0) == -np.inf

    def test_zero_birth_rate_is_reflected_poisson(self):
        got = skellam_log_pmf(-2, 0.0, 1.7)
        want = math.log(1.7**2 / 2.0) - 1.7
        assert got == pytest.approx(want, abs=1e-12)
        assert skellam_log_pmf(1, 0.0, 1.7) == -np.inf

    def test_convolution_example(self):
        # k=1, mu1=2, mu2=1 against the truncated double sum
        want = oracles.skellam_pmf(1, 2.0, 1.0)
        got = math.exp(skellam_log_pmf(1, 2.0, 1.0))
        assert got == pytest.approx(want, abs=1e-12)

    def test_convolution_oracle_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(250):
            mu1 = float(rng.uniform(0.01, 50.0))
            mu2 = float(rng.uniform(0.01, 50.0))
            k = int(rng.integers(-30, 31))
            got = math.exp(skellam_log_pmf(k, mu1, mu2))
            assert got == pytest.approx(oracles.skellam_pmf(k, mu1, mu2), abs=1e-10)

    @given(
        k=st.integers(min_value=-40, max_value=40),
        mu1=st.floats(min_value=0.01, max_value=100.0),
        mu2=st.floats(min_value=0.01, max_value=100.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_symmetry_is_exact(self, k, mu1, mu2):
        assert skellam_log_pmf(k, mu1, mu2) == skellam_log_pmf(-k, mu2, mu1)

    def test_normalization(self):
        for mu1, mu2 in [(0.5, 0.3), (3.0, 7.0), (25.0, 25.0)]:
            ks = np.arange(-300, 301)
            total = np.exp(skellam_log_pmf(ks, mu1, mu2)).sum()
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_log_space_stability(self):
        big = skellam_log_pmf(0, 1e5, 1e5)
        assert np.isfinite(big)
        # cross-check the documented stability point against extended precision
        want = -(2e5) + oracles.log_bessel_i_mp(0, 2e5)
        assert big == pytest.approx(want, rel=1e-10)
        for k, m1, m2 in [(10**6, 1e6, 1e6), (-(10**6), 1e6, 1e6), (10**6, 1e-3, 1e-3), (0, 1e6, 1e-6)]:
            v = skellam_log_pmf(k, m1, m2)
            assert np.isfinite(v), (k, m1, m2, v)

    def test_vector_broadcast(self):
        ks = np.array([-1, 0, 1, 2])
        vals = skellam_log_pmf(ks, 2.0, 1.0)
        singles = [skellam_log_pmf(int(k), 2.0, 1.0) for k in ks]
        np.testing.assert_allclose(vals, singles, rtol=0, atol=0)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            skellam_log_pmf(0, -1.0, 1.0)
        with pytest.raises(ValueError):
            skellam_log_pmf(0.5, 1.0, 1.0)


class TestLogBesselFallbacks:
    # scipy's scaled Bessel underflows for large order at moderate argument;
    # these points force the series and uniform-expansion paths.
    @pytest.mark.parametrize(
        "v,z",
        [
            (0, 1e-3),
            (5, 0.1),
            (50, 2.0),
            (800, 1.0),
            (800, 450.0),
            (5000, 100.0),
            (5000, 599.0),
            (2000, 601.0),
            (20000, 5000.0),
            (100000, 30000.0),
        ],
    )
    def test_matches_mpmath(self, v, z):
        got = log_bessel_i(v, z)
        want = oracles.log_bessel_i_mp(v, z)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9)

    def test_zero_argument(self):
        assert log_bessel_i(0, 0.0) == 0.0
        assert log_bessel_i(3, 0.0) == -np.inf

    def test_batched_fallback_matches_scalar(self):
        # a whole particle cloud lands in the fallback at once when a huge
        # proposed step scale sends every jump past the fast path, so the
        # batched route must agree with the scalar one in both regimes
        rng = np.random.default_rng(11)
        ks = np.concatenate([
            rng.integers(10**3, 10**6, size=100),
            -rng.integers(10**5, 10**7, size=100),
        ])
        root = np.concatenate([
            rng.uniform(0.05, 3.0, size=100),      # series regime, 2*root < 600
            rng.uniform(301.0, 2500.0, size=100),  # uniform-expansion regime
        ])
        ratio = rng.uniform(0.2, 5.0, size=200)
        mu1 = root * ratio
        mu2 = root / ratio
        vals = skellam_log_pmf(ks, mu1, mu2)
        singles = [
            -(a + b) + 0.5 * float(k) * (math.log(a) - math.log(b))
            + log_bessel_i(abs(int(k)), 2.0 * math.sqrt(a * b))
            for k, a, b in zip(ks, mu1, mu2)
        ]
        np.testing.assert_allclose(vals, singles, rtol=1e-10)


class TestLatentStep:
    def test_extinction_absorbs(self):
        r = FixedRates(gamma=0.1)
        assert latent_step_log_pmf(0, 0, 0.3, r) == 0.0
        assert latent_step_log_pmf(0, 1, 0.3, r) == -np.inf

    def test_matches_skellam_oracle(self):
        r = FixedRates(gamma=0.1)
        got = math.exp(latent_step_log_pmf(10, 12, 0.3, r))
        want = oracles.skellam_pmf(2, 3.0, 1.0)
        assert got == pytest.approx(want, abs=1e-12)

    def test_vectorized_over_particles(self):
        r = FixedRates(gamma=0.2)
        x_prev = np.array([0, 5, 10, 10])
        x_next = np.array([0, 5, 8, 25])
        beta = np.array([0.3, 0.2, 0.1, 0.9])
        vals = latent_step_log_pmf(x_prev, x_next, beta, r)
        for i in range(4):
            want = latent_step_log_pmf(int(x_prev[i]), int(x_next[i]), float(beta[i]), r)
            assert vals[i] == want


class TestObservation:
    def test_full_reporting(self):
        assert obs_log_pmf(7, 7, 1.0) == 0.0
        assert obs_log_pmf(6, 7, 1.0) == -np.inf

    def test_more_observed_than_exist(self):
        assert obs_log_pmf(8, 7, 0.5) == -np.inf

    def test_exact_halves(self):
        assert obs_log_pmf(5, 10, 0.5) == pytest.approx(math.log(252 / 1024), abs=1e-12)

    def test_binomial_oracle_sweep(self):
        rng = np.random.default_rng(12)
        for _ in range(250):
            n = int(rng.integers(0, 50))
            k = int(rng.integers(0, n + 1)) if n else 0
            p = float(rng.uniform(0.01, 1.0))
            got = math.exp(binomial_log_pmf(k, n, p))
            assert got == pytest.approx(oracles.binomial_pmf(k, n, p), abs=1e-10)

    def test_normalization(self):
        n, p = 23, 0.37
        total = np.exp(binomial_log_pmf(np.arange(n + 1), n, p)).sum()
        assert total == pytest.approx(1.0, abs=1e-10)


class TestCoalescentSlice:
    def test_single_lineage_cannot_coalesce(self):
        assert coal_slice_log_pmf(1, 0, 0.3, 10) == 0.0
        assert coal_slice_log_pmf(0, 0, 0.3, 10) == 0.0

    def test_single_pair_formula(self):
        got = coal_slice_log_pmf(2, 1, 0.3, 10)
        assert got == pytest.approx(math.log(1 - math.exp(-0.06)), abs=1e-12)

    def test_four_lineages_two_events(self):
        got = math.exp(coal_slice_log_pmf(4, 2, 0.3, 10))
        p = 1 - math.exp(-0.06)
        want = math.comb(6, 2) * p**2 * (1 - p) ** 4
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(oracles.coal_slice_pmf(4, 2, 0.3, 10), abs=1e-12)

    def test_impossible_states(self):
        assert coal_slice_log_pmf(4, 1, 0.3, 3) == -np.inf  # more lineages than hosts
        assert coal_slice_log_pmf(2, 0, 0.3, 0) == -np.inf  # extinct but lineages remain

    def test_too_many_events_is_domain_error(self):
        with pytest.raises(ValueError):
            coal_slice_log_pmf(3, 4, 0.3, 10)

    def test_oracle_sweep(self):
        rng = np.random.default_rng(13)
        for _ in range(250):
            a = int(rng.integers(0, 12))
            trials = a * (a - 1) // 2
            c = int(rng.integers(0, trials + 1))
            beta = float(rng.uniform(0.01, 2.0))
            x = int(rng.integers(a, a + 40)) if a else int(rng.integers(0, 40))
            got = math.exp(coal_slice_log_pmf(a, c, beta, x))
            assert got == pytest.approx(oracles.coal_slice_pmf(a, c, beta, x), abs=1e-10)

    def test_normalization_over_events(self):
        a, beta, x = 5, 0.4, 12
        trials = a * (a - 1) // 2
        total = sum(math.exp(coal_slice_log_pmf(a, c, beta, x)) for c in range(trials + 1))
        assert total == pytest.approx(1.0, abs=1e-10)


class TestFoldedNormal:
    def test_symmetric_at_origin(self):
        want = math.log(2.0) - 0.5 * math.log(2 * math.pi) - 0.5
        assert folded_normal_log_pdf(1.0, 0.0, 1.0) == pytest.approx(want, abs=1e-12)

    def test_negative_support(self):
        assert folded_normal_log_pdf(-0.5, 0.2, 0.1) == -np.inf

    def test_integrates_to_one(self):
        total, err = quad(lambda x: math.exp(folded_normal_log_pdf(x, 0.3, 0.05)), 0.0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_oracle_sweep(self):
        rng = np.random.default_rng(14)
        for _ in range(250):
            mu = float(rng.uniform(-3.0, 3.0))
            sigma = float(rng.uniform(0.01, 2.0))
            x = float(rng.uniform(0.0, 5.0))
            got = math.exp(folded_normal_log_pdf(x, mu, sigma))
            assert got == pytest.approx(oracles.folded_normal_pdf(x, mu, sigma), abs=1e-10)


class TestNegBinomial:
    def test_real_r_oracle_sweep(self):
        rng = np.random.default_rng(15)
        for _ in range(250):
            r = float(rng.uniform(0.05, 20.0))
            p = float(rng.uniform(0.01, 0.99))
            k = int(rng.integers(0, 60))
            got = math.exp(neg_binomial_log_pmf(k, r, p))
            assert got == pytest.approx(oracles.neg_binomial_pmf(k, r, p), abs=1e-10)

    def test_large_r_point(self):
        # the kind of r used for a tightly informative initial-prevalence prior
        got = math.exp(neg_binomial_log_pmf(40, 514.14, 0.93))
        assert got == pytest.approx(oracles.neg_binomial_pmf(40, 514.14, 0.93), rel=1e-9)

    def test_p_one_degenerate(self):
        assert neg_binomial_log_pmf(0, 2.0, 1.0) == 0.0
        assert neg_binomial_log_pmf(1, 2.0, 1.0) == -np.inf

    def test_normalization(self):
        r, p = 0.56, 0.1
        ks = np.arange(0, 2000)
        total = np.exp(neg_binomial_log_pmf(ks, r, p)).sum()
        assert total == pytest.approx(1.0, abs=1e-8)


class TestPriors:
    def test_default_x0_prior_moments(self):
        # NegBin(r=0.56, p=0.1) over failures: mean 5.04, variance 50.4
        cfg = PriorConfig()
        ks = np.arange(0, 5000)
        pmf = np.exp(neg_binomial_log_pmf(ks, cfg.x0_r, cfg.x0_p))
        mean = float(np.sum(ks * pmf))
        var = float(np.sum((ks - mean) ** 2 * pmf))
        assert mean == pytest.approx(5.04, abs=1e-6)
        assert var == pytest.approx(50.4, abs=1e-4)

    def test_beta1_prior_mean(self):
        rates = FixedRates(gamma=0.1)
        # Exponential with rate 1/(2 gamma): density at 0 is the rate, mean 2 gamma
        assert log_beta1_prior(0.0, rates) == pytest.approx(math.log(5.0), abs=1e-12)
        xs = np.linspace(0, 50, 400001)
        pdf = np.exp(log_beta1_prior(xs, rates))
        mean = np.trapezoid(xs * pdf, xs)
        assert mean == pytest.approx(0.2, abs=1e-4)

    def test_support(self):
        cfg = PriorConfig()
        assert log_prior_theta(Theta(0.05, 1.5, 5), cfg) == -np.inf
        assert log_prior_theta(Theta(-0.1, 0.5, 5), cfg) == -np.inf
        assert log_prior_theta(Theta(0.05, 0.5, 0), cfg) == -np.inf
        assert np.isfinite(log_prior_theta(Theta(0.05, 1.0, 5), cfg))

    def test_log_priors_is_sum(self):
        cfg = PriorConfig()
        rates = FixedRates(gamma=0.1)
        th = Theta(0.07, 0.4, 3)
        want = log_prior_theta(th, cfg) + log_beta1_prior(0.25, rates)
        assert log_priors(th, 0.25, rates, cfg) == pytest.approx(want, abs=1e-12)

    def test_components(self):
        cfg = PriorConfig(sigma_rate=10.0)
        th = Theta(0.05, 0.3, 2)
        want = math.log(10.0) - 0.5 + float(neg_binomial_log_pmf(2, cfg.x0_r, cfg.x0_p))
        assert log_prior_theta(th, cfg) == pytest.approx(want, abs=1e-12)


class TestObservedSeries:
    def test_from_optional(self):
        s = ObservedSeries.from_optional([5, None, 0, 7])
        assert s.n_days == 4
        assert s.day(1) == 5
        assert s.day(2) is None
        assert s.day(3) == 0  # an observed zero is data
        assert s.day(4) == 7

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ObservedSeries.from_optional([-1])

    def test_all_missing(self):
        s = ObservedSeries.all_missing(3)
        assert s.n_days == 3
        assert all(s.day(n) is None for n in (1, 2, 3))
