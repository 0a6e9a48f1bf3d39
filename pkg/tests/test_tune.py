"""Tests for particle-count selection."""

import math

import numpy as np
import pytest

from rtinfer.model import FixedRates, ObservedSeries, Theta
from rtinfer.smc import SmcEstimate, run_smc
from rtinfer.tune import (
    TuneReport,
    TuneSpec,
    TuningFailedError,
    choose_particles,
    clamp_particles,
    k_opt_raw,
)

RATES = FixedRates(gamma=0.1)


def tiny_inputs():
    y = ObservedSeries.from_optional([2, 3, 2])
    g = (np.array([0, 2, 2]), np.array([0, 0, 1]))
    return y, g


class TestArithmetic:
    def test_fixed_point(self):
        assert k_opt_raw(500, 0.8464) == 500.0

    def test_linear_scaling(self):
        assert k_opt_raw(500, 1.6928) == 1000.0

    def test_monotone_in_variance(self):
        values = [k_opt_raw(500, s2) for s2 in np.linspace(0.0, 5.0, 40)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            k_opt_raw(500, -0.1)

    def test_clamping(self):
        assert clamp_particles(120.0, 1000, 25000) == 1000
        assert clamp_particles(31250.0, 1000, 25000) == 25000
        assert clamp_particles(1500.4, 1000, 25000) == 1500
        assert clamp_particles(1500.5, 1000, 25000) == 1501

    def test_variance_matches_two_pass_form(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=200)
        mean = v.sum() / len(v)
        two_pass = ((v - mean) ** 2).sum() / len(v)
        assert np.var(v) == pytest.approx(two_pass, abs=1e-12)


class TestInjectedVariances:
    def spec(self, **kw):
        args = dict(repeats=3, K_s=500, floor=1000, cap=25000)
        args.update(kw)
        return TuneSpec(**args)

    def test_exact_formula_and_max_rule(self):
        k, report = choose_particles(self.spec(), sigma2_values=[0.8464, 1.6928, 0.4232])
        assert report.injected
        assert [r.k_opt_raw for r in report.repeats] == [500.0, 1000.0, 250.0]
        assert k == 1000

    def test_floor_applies(self):
        k, _ = choose_particles(self.spec(), sigma2_values=[0.2, 0.1, 0.05])
        assert k == 1000

    def test_cap_applies(self):
        k, _ = choose_particles(self.spec(), sigma2_values=[100.0, 1.0, 1.0])
        assert k == 25000

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            choose_particles(self.spec(), sigma2_values=[1.0])

    def test_missing_inputs_rejected_without_injection(self):
        with pytest.raises(ValueError):
            choose_particles(self.spec())


class TestSpecValidation:
    def test_bad_specs_raise(self):
        with pytest.raises(ValueError):
            TuneSpec(floor=2000, cap=1000).validate()
        with pytest.raises(ValueError):
            TuneSpec(R=1).validate()
        with pytest.raises(ValueError):
            TuneSpec(repeats=0).validate()


class TestFullScheme:
    def spec(self):
        return TuneSpec(
            pilot_iterations=60,
            K_large=80,
            K_s=40,
            R=16,
            floor=8,
            cap=64,
            repeats=2,
        )

    def test_runs_and_reports(self):
        y, g = tiny_inputs()
        k, report = choose_particles(
            self.spec(), RATES, y, g, Theta(0.05, 0.3, 10), seed=4
        )
        assert 8 <= k <= 64
        assert len(report.repeats) == 2
        for rep in report.repeats:
            assert not rep.discarded
            assert rep.n_finite == 16
            assert rep.sigma2_hat >= 0
            assert rep.theta_bar.sigma > 0
            assert 0 < rep.theta_bar.rho < 1
            assert rep.theta_bar.x0 >= 1
        assert k == clamp_particles(max(r.k_opt_raw for r in report.repeats), 8, 64)

    def test_determinism(self):
        y, g = tiny_inputs()
        k1, r1 = choose_particles(self.spec(), RATES, y, g, Theta(0.05, 0.3, 10), seed=7)
        k2, r2 = choose_particles(self.spec(), RATES, y, g, Theta(0.05, 0.3, 10), seed=7)
        assert k1 == k2
        assert [r.sigma2_hat for r in r1.repeats] == [r.sigma2_hat for r in r2.repeats]
        assert [r.theta_bar for r in r1.repeats] == [r.theta_bar for r in r2.repeats]

    def test_degenerate_batches_discarded(self):
        y, g = tiny_inputs()
        calls = {"n": 0}

        def runner(theta, K, rng):
            est = run_smc(theta, RATES, y, g, K=K, rng=rng)
            if K == 40:  # probe stage only
                calls["n"] += 1
                if calls["n"] <= 16:  # first repeat's whole batch
                    return SmcEstimate(-math.inf, est.history, degenerate=True)
            return est

        k, report = choose_particles(
            self.spec(), RATES, y, g, Theta(0.05, 0.3, 10), seed=4, smc_runner=runner
        )
        assert report.repeats[0].discarded
        assert report.n_discarded == 1
        assert not report.repeats[1].discarded
        assert 8 <= k <= 64

    def test_all_degenerate_fails(self):
        y, g = tiny_inputs()

        def runner(theta, K, rng):
            est = run_smc(theta, RATES, y, g, K=K, rng=rng)
            if K == 40:
                return SmcEstimate(-math.inf, est.history, degenerate=True)
            return est

        with pytest.raises(TuningFailedError):
            choose_particles(
                self.spec(), RATES, y, g, Theta(0.05, 0.3, 10), seed=4, smc_runner=runner
            )
