"""Forward simulation of epidemics, partial observations, and coalescent trees.

Everything here generates data exactly from the model the inference targets:
daily Poisson births/deaths for prevalence, per-day binomial thinning for the
observed series, and per-day pairwise coalescence for the phylogeny. Used for
validation studies and for producing test fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import FixedRates, LatentPath, ObservedSeries
from .phylo import DatedTree, TreeSlices, discretize

__all__ = [
    "ConstantSchedule",
    "PeakedSchedule",
    "ChangepointSchedule",
    "ScenarioSpec",
    "SimOutput",
    "InfeasibleSamplingError",
    "ScenarioInfeasibleError",
    "simulate_epidemic",
    "simulate_observations",
    "simulate_tree",
    "run_scenario",
]


class InfeasibleSamplingError(ValueError):
    """Requested more leaves on a day than there are infected individuals."""


class ScenarioInfeasibleError(RuntimeError):
    """Every simulation attempt went extinct before the horizon."""


@dataclass(frozen=True)
class ConstantSchedule:
    level: float

    def expand(self, n_days: int) -> np.ndarray:
        return np.full(n_days, float(self.level))


@dataclass(frozen=True)
class PeakedSchedule:
    """Birth rate rising linearly from low to high at mid-epidemic, then back."""

    low: float
    high: float

    def expand(self, n_days: int) -> np.ndarray:
        days = np.arange(1, n_days + 1, dtype=np.float64)
        mid = max(1.0, round(n_days / 2))
        return np.interp(days, [1.0, mid, float(n_days)], [self.low, self.high, self.low])


@dataclass(frozen=True)
class ChangepointSchedule:
    """Two levels switching at a given day: level[0] before `day`, level[1] from it on."""

    levels: tuple
    day: int

    def expand(self, n_days: int) -> np.ndarray:
        lo, hi = self.levels
        days = np.arange(1, n_days + 1)
        return np.where(days < self.day, float(lo), float(hi))


@dataclass(frozen=True)
class ScenarioSpec:
    n_days: int
    beta_schedule: object
    gamma: float
    x0: int
    rho: float
    genetic_sampling_fraction: float = 0.0

    def validate(self):
        if self.n_days < 1:
            raise ValueError("n_days must be at least 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.x0 < 1:
            raise ValueError("x0 must be at least 1")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must be in (0, 1]")
        if not 0 <= self.genetic_sampling_fraction <= 1:
            raise ValueError("genetic sampling fraction must be in [0, 1]")
        beta = self.expand_beta()
        if np.any(beta < 0):
            raise ValueError("beta schedule must be nonnegative")

    def expand_beta(self) -> np.ndarray:
        return self.beta_schedule.expand(self.n_days)


@dataclass
class SimOutput:
    path: LatentPath
    observed: ObservedSeries
    tree: Optional[DatedTree]
    slices: TreeSlices
    extinct: bool
    attempts: int = 1
    forced_root: bool = False
    clamped_coalescences: int = 0
    leaf_days: list = field(default_factory=list)


def simulate_epidemic(beta, rates: FixedRates, x0: int, rng) -> tuple:
    """Daily birth-death prevalence path; returns (path, extinct flag).

    Births ~ Poisson(beta_n * x_{n-1}), deaths ~ Poisson(gamma * x_{n-1});
    the count is clamped at 0, and 0 is absorbing.
    """
    beta = np.asarray(beta, dtype=np.float64)
    n_days = len(beta)
    x = np.zeros(n_days, dtype=np.int64)
    x_prev = int(x0)
    extinct = x_prev == 0
    for n in range(n_days):
        if x_prev == 0:
            x[n] = 0
            continue
        births = rng.poisson(beta[n] * x_prev)
        deaths = rng.poisson(rates.gamma * x_prev)
        x_next = x_prev + births - deaths
        if x_next <= 0:
            x_next = 0
            extinct = True
        x[n] = x_next
        x_prev = x_next
    return LatentPath(x0=int(x0), beta=beta.copy(), x=x), extinct


def simulate_observations(path: LatentPath, rho: float, rng) -> ObservedSeries:
    """Binomial thinning of the true prevalence, every day observed."""
    if not 0 <= rho <= 1:
        raise ValueError("rho must be in [0, 1]")
    y = rng.binomial(path.x, rho)
    return ObservedSeries(np.asarray(y, dtype=np.int64), np.ones(path.n_days, dtype=bool))


@dataclass
class _TreeRecord:
    """The simulator's own per-day bookkeeping, for validation against discretize."""

    a: np.ndarray
    c: np.ndarray
    forced_root: bool
    forced_root_merges: int
    clamped: int


def _simulate_tree_detailed(path: LatentPath, beta, leaf_days, rng):
    beta = np.asarray(beta, dtype=np.float64)
    n_days = path.n_days
    counts = np.zeros(n_days + 1, dtype=np.int64)
    for d in leaf_days:
        d = int(d)
        if not 1 <= d <= n_days:
            raise InfeasibleSamplingError(f"leaf day {d} outside 1..{n_days}")
        counts[d] += 1
    for d in range(1, n_days + 1):
        if counts[d] > path.x[d - 1]:
            raise InfeasibleSamplingError(
                f"day {d}: {counts[d]} leaves requested but prevalence is {path.x[d - 1]}"
            )
    if counts.sum() == 0:
        raise InfeasibleSamplingError("at least one leaf is required")

    times: list = []
    parents: list = []
    labels: list = []
    lineages: list = []
    next_leaf = 0

    def new_node(t, label=None) -> int:
        times.append(float(t))
        parents.append(-1)
        labels.append(label)
        return len(times) - 1

    a_rec = np.zeros(n_days, dtype=np.int64)
    c_rec = np.zeros(n_days, dtype=np.int64)
    clamped = 0

    for day in range(n_days, 0, -1):
        for _ in range(counts[day]):
            lineages.append(new_node(float(day), f"L{next_leaf}"))
            next_leaf += 1
        a = len(lineages)
        a_rec[day - 1] = a
        if a < 2:
            continue
        x_day = int(path.x[day - 1])
        p = -np.expm1(-2.0 * beta[day - 1] / x_day)
        pairs = a * (a - 1) // 2
        c = int(rng.binomial(pairs, p))
        c_eff = min(c, a // 2)
        if c_eff < c:
            clamped += c - c_eff
        c_rec[day - 1] = c_eff
        if c_eff == 0:
            continue
        chosen = rng.choice(a, size=2 * c_eff, replace=False)
        merge_times = np.sort(rng.uniform(day - 1.0, float(day), size=c_eff))[::-1]
        merged_parents = []
        for j in range(c_eff):
            i1, i2 = lineages[chosen[2 * j]], lineages[chosen[2 * j + 1]]
            parent = new_node(merge_times[j])
            parents[i1] = parent
            parents[i2] = parent
            merged_parents.append(parent)
        keep = [lin for idx, lin in enumerate(lineages) if idx not in set(chosen)]
        lineages = keep + merged_parents

    forced = len(lineages) > 1
    forced_merges = 0
    if forced:
        # join survivors below day 1, clear of slice boundaries
        m = len(lineages)
        merge_times = [-0.25 - 0.5 * k / (m - 1) for k in range(m - 1)]
        current = lineages[0]
        for k, other in enumerate(lineages[1:]):
            parent = new_node(merge_times[k])
            parents[current] = parent
            parents[other] = parent
            current = parent
        forced_merges = m - 1

    tree = DatedTree(np.asarray(times), np.asarray(parents), labels)
    tree.validate()
    record = _TreeRecord(a_rec, c_rec, forced, forced_merges, clamped)
    return tree, record


def simulate_tree(path: LatentPath, beta, leaf_days, rng) -> DatedTree:
    """Backward-in-time coalescent simulation over the day grid.

    Visiting days newest-first, the extant lineages (leaves sampled on the day
    included) coalesce as c ~ Binomial(C(a,2), 1 - exp(-2 beta_n / x_n));
    merged pairs are disjoint and uniformly placed within the day. Lineages
    surviving past day 1 are chain-joined below it (forced root).
    """
    tree, _ = _simulate_tree_detailed(path, beta, leaf_days, rng)
    return tree


def run_scenario(spec: ScenarioSpec, rng, max_retries: int = 100) -> SimOutput:
    """Compose the three simulators, retrying extinct epidemics.

    Genetic leaves are drawn per day as Binomial(x[n], fraction); with no
    leaves at all the output carries an empty slicing and no tree.
    """
    spec.validate()
    beta = spec.expand_beta()
    rates = FixedRates(gamma=spec.gamma)
    attempts = 0
    while True:
        attempts += 1
        path, extinct = simulate_epidemic(beta, rates, spec.x0, rng)
        if not extinct:
            break
        if attempts > max_retries:
            raise ScenarioInfeasibleError(
                f"all {attempts} attempts went extinct before day {spec.n_days}"
            )
    observed = simulate_observations(path, spec.rho, rng)

    leaf_counts = rng.binomial(path.x, spec.genetic_sampling_fraction)
    leaf_days = [d for d in range(1, spec.n_days + 1) for _ in range(int(leaf_counts[d - 1]))]
    if not leaf_days:
        zeros = np.zeros(spec.n_days, dtype=np.int64)
        return SimOutput(
            path=path,
            observed=observed,
            tree=None,
            slices=TreeSlices(zeros, zeros.copy()),
            extinct=False,
            attempts=attempts,
        )
    tree, record = _simulate_tree_detailed(path, beta, leaf_days, rng)
    slices = discretize(tree, day_length=1.0, present=float(spec.n_days))
    return SimOutput(
        path=path,
        observed=observed,
        tree=tree,
        slices=slices,
        extinct=False,
        attempts=attempts,
        forced_root=record.forced_root,
        clamped_coalescences=record.clamped,
        leaf_days=leaf_days,
    )
