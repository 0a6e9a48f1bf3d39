"""Probability kernels and parameter containers for the epidemic state-space model.

The latent state is daily prevalence x_n driven by a birth rate beta_n and a
fixed death rate gamma: x_n = x_{n-1} + Births - Deaths with independent
Poisson counts, so the increment is Skellam(beta*x, gamma*x). Two data
channels hang off the state: a binomial prevalence observation with reporting
probability rho, and per-day coalescent counts from a time-sliced dated
phylogeny. Everything here is log-space and vectorizes over particle arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ive, logsumexp

__all__ = [
    "Theta",
    "FixedRates",
    "PriorConfig",
    "LatentPath",
    "ObservedSeries",
    "log_bessel_i",
    "skellam_log_pmf",
    "latent_step_log_pmf",
    "binomial_log_pmf",
    "obs_log_pmf",
    "coal_slice_log_pmf",
    "folded_normal_log_pdf",
    "neg_binomial_log_pmf",
    "log_prior_theta",
    "log_beta1_prior",
    "log_priors",
]

NEG_INF = float("-inf")


@dataclass(frozen=True)
class Theta:
    """Inferred scalar parameters: random-walk scale, reporting prob, day-0 prevalence."""

    sigma: float
    rho: float
    x0: int

    def validate(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.x0 < 1:
            raise ValueError(f"x0 must be a positive integer, got {self.x0}")


@dataclass(frozen=True)
class FixedRates:
    """Rates treated as known: the per-capita death/recovery rate gamma."""

    gamma: float

    def validate(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the parameter priors.

    sigma ~ Exponential(rate=sigma_rate); rho ~ Uniform(0, 1];
    x0 ~ NegBinomial(r=x0_r, p=x0_p) restricted to x0 >= 1 (the restriction
    drops a constant, which Metropolis ratios never see).
    """

    sigma_rate: float = 10.0
    x0_r: float = 0.56
    x0_p: float = 0.1


@dataclass
class LatentPath:
    """One realization of the hidden epidemic: beta[n] and x[n] for days 1..N."""

    x0: int
    beta: np.ndarray
    x: np.ndarray

    @property
    def n_days(self) -> int:
        return len(self.x)

    @property
    def extinct(self) -> bool:
        return bool(self.n_days > 0 and self.x[-1] == 0)


@dataclass
class ObservedSeries:
    """Per-day prevalence observations; a day can be missing (no report).

    values[n-1] holds y_n, observed[n-1] says whether day n was reported.
    y = 0 is data (an observed zero), not a missing day.
    """

    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.values.shape != self.observed.shape:
            raise ValueError("values and observed must have equal length")
        if np.any(self.values[self.observed] < 0):
            raise ValueError("observed counts must be nonnegative")

    @classmethod
    def from_optional(cls, ys) -> "ObservedSeries":
        """Build from a sequence where None marks a missing day."""
        vals = np.array([0 if y is None else int(y) for y in ys], dtype=np.int64)
        obs = np.array([y is not None for y in ys], dtype=bool)
        return cls(vals, obs)

    @classmethod
    def all_missing(cls, n_days: int) -> "ObservedSeries":
        return cls(np.zeros(n_days, dtype=np.int64), np.zeros(n_days, dtype=bool))

    @property
    def n_days(self) -> int:
        return len(self.values)

    def day(self, n: int):
        """Return y_n (1-based day) or None if that day is missing."""
        return int(self.values[n - 1]) if self.observed[n - 1] else None


# ---------------------------------------------------------------------------
# modified Bessel function of the first kind, log scale
# ---------------------------------------------------------------------------

_SERIES_Z_MAX = 600.0


def _log_bessel_series(v: float, z: float) -> float:
    # ascending series sum_m (z/2)^(2m+v) / (m! Gamma(m+v+1)), in log space.
    # The largest term sits near m* = (-(v+1) + sqrt((v+1)^2 + z^2)) / 2,
    # which stays below z/2, so a few hundred terms always suffice here.
    half = z / 2.0
    m_star = 0.5 * (-(v + 1.0) + math.sqrt((v + 1.0) ** 2 + z * z))
    m_max = int(m_star) + 60 + int(4.0 * math.sqrt(m_star + 1.0))
    m = np.arange(m_max + 1, dtype=np.float64)
    log_terms = (2.0 * m + v) * math.log(half) - gammaln(m + 1.0) - gammaln(m + v + 1.0)
    return float(logsumexp(log_terms))


def _log_bessel_uniform(v: float, z: float) -> float:
    # large-order uniform asymptotic expansion of I_v(v * zt); accurate to
    # O(v^-5) once v is in the hundreds, which is the only regime where the
    # scaled-Bessel fast path can underflow at large z.
    zt = z / v
    s = math.sqrt(1.0 + zt * zt)
    t = 1.0 / s
    eta = s + math.log(zt / (1.0 + s))
    t2 = t * t
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 - t2 * (462.0 - 385.0 * t2)) / 1152.0
    u3 = t * t2 * (30375.0 - t2 * (369603.0 - t2 * (765765.0 - 425425.0 * t2))) / 414720.0
    u4 = (
        t2
        * t2
        * (4465125.0 - t2 * (94121676.0 - t2 * (349922430.0 - t2 * (446185740.0 - 185910725.0 * t2))))
        / 39813120.0
    )
    series = 1.0 + u1 / v + u2 / v**2 + u3 / v**3 + u4 / v**4
    return v * eta - 0.5 * math.log(2.0 * math.pi * v) - 0.25 * math.log1p(zt * zt) + math.log(series)


def _log_bessel_series_vec(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    # batched form of _log_bessel_series: one row of terms per (v, z) pair,
    # rows sorted by their own series length and processed in chunks whose
    # row count times width stays bounded, so memory cannot blow up when a
    # few rows need a much longer series than the rest
    half = z / 2.0
    m_star = 0.5 * (-(v + 1.0) + np.sqrt((v + 1.0) ** 2 + z * z))
    m_max = m_star.astype(np.int64) + 60 + (4.0 * np.sqrt(m_star + 1.0)).astype(np.int64)
    out = np.empty(v.shape)
    order = np.argsort(m_max, kind="stable")
    n = v.size
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and (stop - start + 1) * (int(m_max[order[stop]]) + 1) <= 4_194_304:
            stop += 1
        idx = order[start:stop]
        width = int(m_max[idx[-1]]) + 1
        m = np.arange(width, dtype=np.float64)
        log_terms = (
            (2.0 * m + v[idx, None]) * np.log(half[idx])[:, None]
            - gammaln(m + 1.0)
            - gammaln(m + v[idx, None] + 1.0)
        )
        log_terms[m[None, :] > m_max[idx, None]] = NEG_INF
        out[idx] = logsumexp(log_terms, axis=1)
        start = stop
    return out


def _log_bessel_uniform_vec(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    # elementwise copy of _log_bessel_uniform
    zt = z / v
    s = np.sqrt(1.0 + zt * zt)
    t = 1.0 / s
    eta = s + np.log(zt / (1.0 + s))
    t2 = t * t
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 - t2 * (462.0 - 385.0 * t2)) / 1152.0
    u3 = t * t2 * (30375.0 - t2 * (369603.0 - t2 * (765765.0 - 425425.0 * t2))) / 414720.0
    u4 = (
        t2
        * t2
        * (4465125.0 - t2 * (94121676.0 - t2 * (349922430.0 - t2 * (446185740.0 - 185910725.0 * t2))))
        / 39813120.0
    )
    series = 1.0 + u1 / v + u2 / v**2 + u3 / v**3 + u4 / v**4
    return v * eta - 0.5 * np.log(2.0 * np.pi * v) - 0.25 * np.log1p(zt * zt) + np.log(series)


def log_bessel_i(v: float, z: float) -> float:
    """log I_v(z) for integer order v >= 0 and z >= 0, scalar.

    Fast path is the exponentially scaled Bessel from scipy; when that
    underflows (large order, comparatively small argument) we fall back to an
    ascending series in log space, or to the uniform large-order expansion
    when the argument is too big for the series to be cheap.
    """
    if v < 0 or z < 0:
        raise ValueError("order and argument must be nonnegative")
    if z == 0.0:
        return 0.0 if v == 0 else NEG_INF
    scaled = ive(v, z)
    if scaled > 0 and math.isfinite(scaled):
        return math.log(scaled) + z
    if z < _SERIES_Z_MAX:
        return _log_bessel_series(v, z)
    return _log_bessel_uniform(v, z)


def _log_bessel_i_vec(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorized log I_v(z); batched fallback only where the fast path fails.

    ive(v, 0) is 1 for v = 0 and 0 otherwise, so log(ive) + z covers the
    z = 0 edge for free; only genuine underflow or overflow of the scaled
    Bessel needs the slow series/asymptotic route. That route is batched
    because whole particle clouds land in it at once when a proposed step
    scale is huge, and a per-element fallback dominated the filter's cost
    on exactly those doomed proposals.
    """
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    v, z = np.broadcast_arrays(v, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = ive(v, z)
        out = np.asarray(np.log(scaled) + z)
    bad = np.asarray(~((scaled > 0) & np.isfinite(scaled)) & (z != 0.0)).reshape(-1)
    if np.any(bad):
        fv = v.reshape(-1)[bad]
        fz = z.reshape(-1)[bad]
        res = np.empty(fv.shape)
        ser = fz < _SERIES_Z_MAX
        if ser.any():
            res[ser] = _log_bessel_series_vec(fv[ser], fz[ser])
        uni = ~ser
        if uni.any():
            res[uni] = _log_bessel_uniform_vec(fv[uni], fz[uni])
        out.reshape(-1)[bad] = res
    return out


# ---------------------------------------------------------------------------
# Skellam and the latent transition
# ---------------------------------------------------------------------------


def skellam_log_pmf(k, mu1, mu2):
    """log P(K = k) for K = Poisson(mu1) - Poisson(mu2), elementwise.

    Evaluated as -(mu1+mu2) + (k/2) log(mu1/mu2) + log I_|k|(2 sqrt(mu1 mu2)),
    which stays finite for rates and |k| up to 1e6. Degenerate rates reduce to
    (possibly reflected) Poisson pmfs.
    """
    k = np.asarray(k)
    if not np.issubdtype(k.dtype, np.integer):
        kf = np.asarray(k, dtype=np.float64)
        if np.any(kf != np.round(kf)):
            raise ValueError("k must be integer")
        k = kf.astype(np.int64)
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    if np.any(mu1 < 0) or np.any(mu2 < 0):
        raise ValueError("rates must be nonnegative")
    k, mu1, mu2 = np.broadcast_arrays(k, mu1, mu2)

    if mu1.all() and mu2.all():
        logi = _log_bessel_i_vec(np.abs(k), 2.0 * np.sqrt(mu1 * mu2))
        out = -(mu1 + mu2) + 0.5 * k * (np.log(mu1) - np.log(mu2)) + logi
        if out.ndim == 0:
            return float(out)
        return out

    out = np.full(k.shape, NEG_INF)

    both = (mu1 == 0) & (mu2 == 0)
    out[both & (k == 0)] = 0.0
    only1 = (mu1 > 0) & (mu2 == 0)  # pure birth: Poisson(k; mu1), k >= 0
    m = only1 & (k >= 0)
    if np.any(m):
        out[m] = -mu1[m] + k[m] * np.log(mu1[m]) - gammaln(k[m] + 1.0)
    only2 = (mu1 == 0) & (mu2 > 0)  # pure death: Poisson(-k; mu2), k <= 0
    m = only2 & (k <= 0)
    if np.any(m):
        out[m] = -mu2[m] + (-k[m]) * np.log(mu2[m]) - gammaln(-k[m] + 1.0)

    core = (mu1 > 0) & (mu2 > 0)
    if np.any(core):
        kk, m1, m2 = k[core], mu1[core], mu2[core]
        logi = _log_bessel_i_vec(np.abs(kk), 2.0 * np.sqrt(m1 * m2))
        out[core] = -(m1 + m2) + 0.5 * kk * (np.log(m1) - np.log(m2)) + logi
    if out.ndim == 0:
        return float(out)
    return out


def latent_step_log_pmf(x_prev, x_next, beta_n, rates):
    """log P(x_next | x_prev) for the one-day prevalence step, elementwise.

    From x_prev the increment is Skellam(beta_n*x_prev, gamma*x_prev). The pmf
    is deliberately NOT conditioned on staying nonnegative; the proposal side
    handles support. From x_prev = 0 the epidemic is extinct and stays at 0.
    """
    gamma = rates.gamma if isinstance(rates, FixedRates) else float(rates)
    x_next = np.asarray(x_next, dtype=np.int64)
    x_prev = np.asarray(x_prev, dtype=np.int64)
    if np.any(x_next < 0) or np.any(x_prev < 0):
        raise ValueError("prevalence must be nonnegative")
    beta_n = np.asarray(beta_n, dtype=np.float64)
    x_next, x_prev, beta_n = np.broadcast_arrays(x_next, x_prev, beta_n)
    dead = x_prev == 0
    if not dead.any():
        return skellam_log_pmf(x_next - x_prev, beta_n * x_prev, gamma * x_prev)
    out = np.full(x_prev.shape, NEG_INF)
    out[dead & (x_next == 0)] = 0.0
    alive = ~dead
    if alive.any():
        out[alive] = skellam_log_pmf(
            x_next[alive] - x_prev[alive],
            beta_n[alive] * x_prev[alive],
            gamma * x_prev[alive],
        )
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# observation channels
# ---------------------------------------------------------------------------


def binomial_log_pmf(k, n, p):
    """log C(n,k) p^k (1-p)^(n-k), elementwise; -inf outside 0 <= k <= n."""
    k = np.asarray(k, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p must be in [0, 1]")
    k, n, p = np.broadcast_arrays(k, n, p)
    valid = (k >= 0) & (k <= n) & (n >= 0)
    if valid.all() and p.all() and np.all(p < 1):
        out = (
            gammaln(n + 1.0)
            - gammaln(k + 1.0)
            - gammaln(n - k + 1.0)
            + k * np.log(p)
            + (n - k) * np.log1p(-p)
        )
        if out.ndim == 0:
            return float(out)
        return out
    out = np.full(k.shape, NEG_INF)
    if np.any(valid):
        kv, nv, pv = k[valid], n[valid], p[valid]
        lc = gammaln(nv + 1.0) - gammaln(kv + 1.0) - gammaln(nv - kv + 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            succ = np.where(kv > 0, kv * np.log(pv), 0.0)
            fail = np.where(nv - kv > 0, (nv - kv) * np.log1p(-pv), 0.0)
        out[valid] = lc + succ + fail
    if out.ndim == 0:
        return float(out)
    return out


def obs_log_pmf(y, x, rho):
    """log-likelihood of reported count y given prevalence x: Binomial(x, rho)."""
    return binomial_log_pmf(y, x, rho)


def coal_slice_log_pmf(a, c, beta_n, x):
    """log-likelihood of c coalescences in a day slice with a extant lineages.

    Each of the C(a,2) lineage pairs coalesces within the day independently
    with probability 1 - exp(-2 beta_n / x). With fewer than two lineages no
    coalescence can occur, so the likelihood is 1 iff c == 0. A day with
    x < a is impossible (more lineages than infected individuals), log-lik -inf.
    """
    c = int(c)
    a = int(a)
    if c < 0 or a < 0:
        raise ValueError("lineage and coalescence counts must be nonnegative")
    trials = a * (a - 1) // 2
    if c > trials:
        raise ValueError(f"c={c} exceeds the {trials} lineage pairs of a={a}")
    beta_n = np.asarray(beta_n, dtype=np.float64)
    x = np.asarray(x, dtype=np.int64)
    beta_n, x = np.broadcast_arrays(beta_n, x)
    scalar = beta_n.ndim == 0
    beta_n = np.atleast_1d(beta_n)
    x = np.atleast_1d(x)

    if a < 2:
        out = np.zeros(beta_n.shape) if c == 0 else np.full(beta_n.shape, NEG_INF)
        return float(out[0]) if scalar else out

    out = np.full(beta_n.shape, NEG_INF)
    ok = x >= a
    if np.any(ok):
        w = 2.0 * beta_n[ok] / x[ok]  # -log(1 - p) exactly
        lc = gammaln(trials + 1.0) - gammaln(c + 1.0) - gammaln(trials - c + 1.0)
        with np.errstate(divide="ignore"):
            log_p = np.log(-np.expm1(-w))
        term = c * log_p if c > 0 else 0.0
        out[ok] = lc + term - (trials - c) * w
    return float(out[0]) if scalar else out


def folded_normal_log_pdf(x, mu, sigma):
    """log-density of |N(mu, sigma^2)| at x >= 0, elementwise."""
    if not np.all(np.asarray(sigma) > 0):
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    x, mu, sigma = np.broadcast_arrays(x, mu, sigma)
    const = -0.5 * math.log(2.0 * math.pi) - np.log(sigma)
    a = const - 0.5 * ((x - mu) / sigma) ** 2
    b = const - 0.5 * ((x + mu) / sigma) ** 2
    out = np.where(x >= 0, np.logaddexp(a, b), NEG_INF)
    if out.ndim == 0:
        return float(out)
    return out


def neg_binomial_log_pmf(k, r, p):
    """log P(K = k) for K failures before r successes, success prob p.

    r may be any positive real (the Polya / Gamma-Poisson generalization).
    """
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    if not r > 0:
        raise ValueError("r must be positive")
    k = np.asarray(k, dtype=np.int64)
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    out = np.full(k.shape, NEG_INF)
    ok = k >= 0
    if p == 1.0:
        out[ok & (k == 0)] = 0.0
    elif np.any(ok):
        kv = k[ok]
        out[ok] = (
            gammaln(kv + r)
            - gammaln(r)
            - gammaln(kv + 1.0)
            + r * math.log(p)
            + kv * math.log1p(-p)
        )
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------


def log_prior_theta(theta: Theta, priors: PriorConfig = PriorConfig()) -> float:
    """Joint log prior density of (sigma, rho, x0); -inf outside support."""
    if theta.sigma <= 0 or not 0 < theta.rho <= 1 or theta.x0 < 1:
        return NEG_INF
    lp = math.log(priors.sigma_rate) - priors.sigma_rate * theta.sigma
    # rho uniform on (0, 1]: density 1
    lp += float(neg_binomial_log_pmf(theta.x0, priors.x0_r, priors.x0_p))
    return lp


def log_beta1_prior(beta1, rates: FixedRates):
    """log-density of the day-1 birth rate prior, Exponential with mean 2*gamma."""
    rate = 1.0 / (2.0 * rates.gamma)
    beta1 = np.asarray(beta1, dtype=np.float64)
    out = np.where(beta1 >= 0, math.log(rate) - rate * beta1, NEG_INF)
    if out.ndim == 0:
        return float(out)
    return out


def log_priors(theta: Theta, beta1: float, rates: FixedRates, prior_config: PriorConfig = PriorConfig()) -> float:
    """Joint log prior of the sampled quantities: theta plus the day-1 birth rate."""
    lp = log_prior_theta(theta, prior_config)
    if lp == NEG_INF:
        return NEG_INF
    return lp + float(log_beta1_prior(beta1, rates))
