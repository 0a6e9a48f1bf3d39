"""Inference of time-varying epidemic reproduction numbers from prevalence
series and dated phylogenies, using a particle marginal Metropolis-Hastings
sampler over a daily birth-death state-space model."""

from .diagnostics import (
    ChainHealth,
    PosteriorSummary,
    chain_health,
    score_vs_truth,
    summarize,
)
from .model import (
    FixedRates,
    LatentPath,
    ObservedSeries,
    PriorConfig,
    Theta,
)
from .phylo import AlignedSlices, DatedTree, TreeSlices, align_to_epidemic
from .pmmh import ChainConfig, ChainInitError, ChainOutput, run_pmmh
from .simulate import PeakedSchedule, ScenarioSpec, SimOutput, run_scenario
from .smc import SmcEstimate, run_smc
from .tune import TuneReport, TuneSpec, TuningFailedError, choose_particles

__version__ = "0.1.0"

__all__ = [
    "AlignedSlices",
    "ChainConfig",
    "ChainHealth",
    "ChainInitError",
    "ChainOutput",
    "DatedTree",
    "FixedRates",
    "LatentPath",
    "ObservedSeries",
    "PeakedSchedule",
    "PosteriorSummary",
    "PriorConfig",
    "ScenarioSpec",
    "SimOutput",
    "SmcEstimate",
    "Theta",
    "TreeSlices",
    "TuneReport",
    "TuneSpec",
    "TuningFailedError",
    "align_to_epidemic",
    "chain_health",
    "choose_particles",
    "run_pmmh",
    "run_scenario",
    "run_smc",
    "score_vs_truth",
    "summarize",
    "__version__",
]
