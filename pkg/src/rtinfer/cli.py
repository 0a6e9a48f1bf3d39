"""Command-line entry point: simulate, discretize, smc, tune, pmmh, summarize.

Every subcommand writes its artifacts into a run directory together with a
manifest recording the resolved configuration, the seed, package versions,
and wall time. Given the same configuration and seed, the data artifacts
(all CSVs) are byte-identical across runs on one machine; the manifest
differs only in its wall-time field.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .diagnostics import chain_health, summarize
from .model import FixedRates, ObservedSeries, PriorConfig, Theta
from .phylo import (
    AlignedSlices,
    NewickParseError,
    TipDateError,
    TreeSlices,
    align_to_epidemic,
    apply_tip_dates,
    discretize,
    parse_newick,
    read_slices_csv,
    read_tip_dates,
    to_newick,
    write_slices_csv,
)
from .pmmh import ChainConfig, ChainInitError, ChainOutput, run_pmmh
from .simulate import (
    ChangepointSchedule,
    ConstantSchedule,
    PeakedSchedule,
    ScenarioInfeasibleError,
    ScenarioSpec,
    run_scenario,
)
from .smc import backward_simulate, run_smc
from .tune import TuneSpec, TuningFailedError, choose_particles

__all__ = [
    "RunConfig",
    "InputFormatError",
    "ConfigError",
    "ingest_prevalence",
    "dispatch",
    "main",
    "EXIT_OK",
    "EXIT_PARSE_ERROR",
    "EXIT_INFEASIBLE",
    "EXIT_DEGENERATE_INIT",
]

EXIT_OK = 0
EXIT_PARSE_ERROR = 3
EXIT_INFEASIBLE = 4
EXIT_DEGENERATE_INIT = 5

_ENV_OUT = "RTINFER_OUT"
_ENV_THREADS = "RTINFER_THREADS"


class InputFormatError(ValueError):
    """An input file exists but its contents violate the documented format."""


class ConfigError(ValueError):
    """The run configuration is incomplete or self-contradictory."""


@dataclass
class RunConfig:
    """One resolved CLI invocation: which subcommand, with what settings."""

    command: str
    settings: dict
    out_dir: Optional[Path] = None
    seed: Optional[int] = None
    threads: int = 1
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Data ingestion
# ---------------------------------------------------------------------------


def ingest_prevalence(path) -> ObservedSeries:
    """Read a `day,observed` CSV into a dense series over days 1..max day.

    Days absent from the file, and rows whose value column is empty, come
    back as missing. Duplicate days and negative counts are format errors;
    a file holding only the header yields an empty series (inference then
    runs on genetic data alone).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise InputFormatError(f"{path}: empty file, expected header 'day,observed'")
    header = [h.strip() for h in rows[0]]
    if header != ["day", "observed"]:
        raise InputFormatError(
            f"{path}: expected header 'day,observed', got {','.join(rows[0])!r}"
        )
    seen = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise InputFormatError(f"{path}:{lineno}: expected two columns")
        try:
            day = int(row[0].strip())
        except ValueError:
            raise InputFormatError(f"{path}:{lineno}: day {row[0]!r} is not an integer")
        if day < 1:
            raise InputFormatError(f"{path}:{lineno}: day must be >= 1, got {day}")
        if day in seen:
            raise InputFormatError(f"{path}:{lineno}: duplicate day {day}")
        cell = row[1].strip()
        if cell == "":
            seen[day] = None
            continue
        try:
            value = int(cell)
        except ValueError:
            raise InputFormatError(f"{path}:{lineno}: count {cell!r} is not an integer")
        if value < 0:
            raise InputFormatError(f"{path}:{lineno}: negative count {value}")
        seen[day] = value
    if not seen:
        return ObservedSeries.all_missing(0)
    n_days = max(seen)
    return ObservedSeries.from_optional([seen.get(d) for d in range(1, n_days + 1)])


def _pad_missing(y: ObservedSeries, n_days: int) -> ObservedSeries:
    if y.n_days >= n_days:
        return y
    extra = n_days - y.n_days
    return ObservedSeries(
        np.concatenate([y.values, np.zeros(extra, dtype=np.int64)]),
        np.concatenate([y.observed, np.zeros(extra, dtype=bool)]),
    )


# ---------------------------------------------------------------------------
# Config files (TOML or JSON)
# ---------------------------------------------------------------------------

_CONFIG_DEFAULTS = {
    "inputs": {
        "prevalence": None,
        "slices": None,
        "tree": None,
        "tip_dates": None,
        "most_recent_tip": 0.0,
    },
    "model": {"gamma": None, "n_days": None, "time_unit": "day"},
    "prior": {"sigma_rate": 10.0, "x0_r": 0.56, "x0_p": 0.1},
    "chain": {
        "iterations": None,
        "particles": None,
        "seed": None,
        "target_acceptance": 0.10,
        "decay": 0.66,
        "ess_threshold": 0.5,
    },
    "init": {"sigma": None, "rho": None, "x0": None},
    "tune": {
        "pilot_iterations": 500,
        "k_large": 5000,
        "k_s": 500,
        "r": 100,
        "floor": 1000,
        "cap": 25000,
        "repeats": 3,
    },
}


def _load_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: invalid TOML: {err}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}")


def _resolve_config(raw: dict, config_dir: Path) -> dict:
    resolved = {}
    for section, defaults in _CONFIG_DEFAULTS.items():
        user = raw.get(section, {})
        if not isinstance(user, dict):
            raise ConfigError(f"section [{section}] must be a table")
        merged = dict(defaults)
        for key, value in user.items():
            if key not in defaults:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            merged[key] = value
        resolved[section] = merged
    for section in raw:
        if section not in _CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
    for key in ("prevalence", "slices", "tree", "tip_dates"):
        value = resolved["inputs"][key]
        if value is not None:
            resolved["inputs"][key] = str((config_dir / value).resolve())
    return resolved


def _require(resolved: dict, section: str, key: str):
    value = resolved[section][key]
    if value is None:
        raise ConfigError(f"config is missing required key '{key}' in [{section}]")
    return value


# ---------------------------------------------------------------------------
# Shared input assembly
# ---------------------------------------------------------------------------


def _load_tree_slices(
    tree_path: str, tip_dates: Optional[str], most_recent_tip: float
) -> TreeSlices:
    try:
        text = Path(tree_path).read_text()
    except FileNotFoundError:
        raise InputFormatError(f"tree file {tree_path} does not exist")
    tree = parse_newick(text, most_recent_tip_time=most_recent_tip)
    if tip_dates is not None:
        tree = apply_tip_dates(tree, read_tip_dates(tip_dates))
    return discretize(tree, day_length=1.0)


def _load_epidemic_inputs(
    prevalence: Optional[str],
    slices_path: Optional[str],
    tree_path: Optional[str],
    tip_dates: Optional[str],
    most_recent_tip: float,
    n_days_cfg: Optional[int],
):
    """Assemble (y, g, n_days, info) from whichever inputs were given."""
    y = None
    if prevalence is not None:
        if not Path(prevalence).exists():
            raise InputFormatError(f"prevalence file {prevalence} does not exist")
        y = ingest_prevalence(prevalence)
    slices = None
    if slices_path is not None:
        try:
            slices = read_slices_csv(slices_path)
        except FileNotFoundError:
            raise InputFormatError(f"slices file {slices_path} does not exist")
        except ValueError as err:
            raise InputFormatError(str(err))
    elif tree_path is not None:
        slices = _load_tree_slices(tree_path, tip_dates, most_recent_tip)
    if y is None and slices is None:
        raise ConfigError(
            "no data: provide a prevalence CSV, a slices CSV, or a tree file"
        )

    # The prevalence series fixes the epidemic horizon when present; tree
    # slices older than day 1 are truncated by the alignment below. With
    # genetic data alone the tree's own coverage is the horizon.
    if n_days_cfg is not None:
        n_days = int(n_days_cfg)
        if y is not None and n_days < y.n_days:
            raise ConfigError(
                f"n_days={n_days} is shorter than the prevalence series ({y.n_days} days)"
            )
    elif y is not None and y.n_days > 0:
        n_days = y.n_days
    elif slices is not None:
        n_days = slices.n_slices
    else:
        n_days = 0
    if n_days < 1:
        raise ConfigError("inputs cover zero days; nothing to infer")

    y = ObservedSeries.all_missing(n_days) if y is None else _pad_missing(y, n_days)
    if slices is None:
        zeros = np.zeros(n_days, dtype=np.int64)
        g = AlignedSlices(zeros, zeros.copy())
    else:
        g = align_to_epidemic(slices, n_days)
    info = {
        "n_days": n_days,
        "observed_days": int(np.sum(y.observed)),
        "dropped_slices": g.dropped_slices,
        "dropped_events": g.dropped_events,
    }
    return y, g, n_days, info


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def _versions() -> dict:
    return {
        "rtinfer": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_json(path: Path, data: dict):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_manifest(out_dir: Path, command, config, seed, wall_time, extras):
    _write_json(
        out_dir / "manifest.json",
        {
            "command": command,
            "config": config,
            "seed": seed,
            "versions": _versions(),
            "wall_time_sec": wall_time,
            **extras,
        },
    )


def _write_theta_trace(path: Path, chain: ChainOutput):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "sigma", "rho", "x0", "log_lik", "accepted"])
        for i in range(chain.n_iterations):
            w.writerow(
                [
                    i + 1,
                    _fmt(chain.sigma[i]),
                    _fmt(chain.rho[i]),
                    int(chain.x0[i]),
                    _fmt(chain.log_lik[i]),
                    int(chain.accepted[i]),
                ]
            )


def _write_day_matrix(path: Path, matrix: np.ndarray, integer=False):
    n_days = matrix.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + [f"day_{d}" for d in range(1, n_days + 1)])
        for i in range(matrix.shape[0]):
            row = matrix[i]
            if integer:
                w.writerow([i + 1] + [int(v) for v in row])
            else:
                w.writerow([i + 1] + [_fmt(v) for v in row])


def _write_day_summary(path: Path, mean, lo, hi):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "mean", "lo", "hi"])
        for d in range(len(mean)):
            w.writerow([d + 1, _fmt(mean[d]), _fmt(lo[d]), _fmt(hi[d])])


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


def _generated_seed() -> int:
    return int(np.random.SeedSequence().entropy) % (2**63)


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _parse_schedule(text: str):
    parts = text.split(":")
    kind = parts[0]
    try:
        if kind == "constant" and len(parts) == 2:
            return ConstantSchedule(float(parts[1]))
        if kind == "peaked" and len(parts) == 3:
            return PeakedSchedule(float(parts[1]), float(parts[2]))
        if kind == "changepoint" and len(parts) == 4:
            return ChangepointSchedule((float(parts[1]), float(parts[2])), int(parts[3]))
    except ValueError:
        pass
    raise ConfigError(
        f"bad schedule {text!r}; use constant:LEVEL, peaked:LOW:HIGH, "
        "or changepoint:BEFORE:AFTER:DAY"
    )


def _cmd_simulate(cfg: RunConfig, out_dir: Path) -> dict:
    s = cfg.settings
    schedule = _parse_schedule(s["schedule"])
    spec = ScenarioSpec(
        n_days=s["days"],
        beta_schedule=schedule,
        gamma=s["gamma"],
        x0=s["x0"],
        rho=s["rho"],
        genetic_sampling_fraction=s["genetic_fraction"],
    )
    try:
        spec.validate()
    except ValueError as err:
        raise ConfigError(str(err))
    rng = np.random.default_rng(cfg.seed)
    sim = run_scenario(spec, rng, max_retries=s["max_retries"])

    beta = spec.expand_beta()
    with open(out_dir / "prevalence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "true_x", "observed_y"])
        for d in range(1, spec.n_days + 1):
            y = sim.observed.day(d)
            w.writerow([d, int(sim.path.x[d - 1]), "" if y is None else y])
    with open(out_dir / "observations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "observed"])
        for d in range(1, spec.n_days + 1):
            y = sim.observed.day(d)
            w.writerow([d, "" if y is None else y])
    with open(out_dir / "beta_truth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "beta", "r_t"])
        for d in range(1, spec.n_days + 1):
            b = beta[d - 1]
            w.writerow([d, _fmt(b), _fmt(b / spec.gamma)])
    write_slices_csv(sim.slices, out_dir / "slices.csv")
    if sim.tree is not None:
        (out_dir / "tree.nwk").write_text(to_newick(sim.tree) + "\n")

    return {
        "scenario": {
            "n_days": spec.n_days,
            "schedule": s["schedule"],
            "gamma": spec.gamma,
            "x0": spec.x0,
            "rho": spec.rho,
            "genetic_sampling_fraction": spec.genetic_sampling_fraction,
        },
        "attempts": sim.attempts,
        "extinct": sim.extinct,
        "forced_root": sim.forced_root,
        "clamped_coalescences": sim.clamped_coalescences,
        "n_leaves": len(sim.leaf_days),
        "tree_written": sim.tree is not None,
    }


def _cmd_discretize(cfg: RunConfig, out_dir: Path) -> dict:
    s = cfg.settings
    try:
        text = Path(s["tree"]).read_text()
    except FileNotFoundError:
        raise InputFormatError(f"tree file {s['tree']} does not exist")
    tree = parse_newick(text, most_recent_tip_time=s["most_recent_tip"])
    if s["tip_dates"] is not None:
        tree = apply_tip_dates(tree, read_tip_dates(s["tip_dates"]))
    slices = discretize(tree, day_length=s["day_length"], present=s["present"])
    write_slices_csv(slices, out_dir / "slices.csv")
    return {
        "n_slices": slices.n_slices,
        "n_leaves": int(np.sum(tree.leaf_mask)),
        "total_coalescences": int(slices.c.sum()),
    }


def _cmd_smc(cfg: RunConfig, out_dir: Path) -> dict:
    s = cfg.settings
    y, g, n_days, info = _load_epidemic_inputs(
        s["prevalence"], s["slices"], None, None, 0.0, s["n_days"]
    )
    theta = Theta(sigma=s["sigma"], rho=s["rho"], x0=s["x0"])
    try:
        theta.validate()
    except ValueError as err:
        raise ConfigError(str(err))
    rates = FixedRates(gamma=s["gamma"])
    rng = np.random.default_rng(cfg.seed)
    est = run_smc(
        theta,
        rates,
        y,
        g,
        K=s["particles"],
        ess_threshold_fraction=s["ess_threshold"],
        rng=rng,
        fixed_beta=s["fixed_beta"],
        resampling=s["resampling"],
    )
    _write_json(
        out_dir / "smc.json",
        {
            "log_likelihood": _finite_or_none(est.log_likelihood),
            "degenerate": est.degenerate,
            "degenerate_day": est.history.degenerate_day,
            "particles": s["particles"],
            "theta": {"sigma": s["sigma"], "rho": s["rho"], "x0": s["x0"]},
            **info,
        },
    )
    if s["sample_path"] and not est.degenerate:
        beta_path, x_path = backward_simulate(est.history, theta, rates, rng)
        with open(out_dir / "path.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "beta", "x"])
            for d in range(1, n_days + 1):
                w.writerow([d, _fmt(beta_path[d - 1]), int(x_path[d - 1])])
    return {"log_likelihood": _finite_or_none(est.log_likelihood), **info}


def _config_inputs(resolved: dict):
    inputs = resolved["inputs"]
    model = resolved["model"]
    return _load_epidemic_inputs(
        inputs["prevalence"],
        inputs["slices"],
        inputs["tree"],
        inputs["tip_dates"],
        inputs["most_recent_tip"],
        model["n_days"],
    )


def _config_prior(resolved: dict) -> PriorConfig:
    p = resolved["prior"]
    return PriorConfig(sigma_rate=p["sigma_rate"], x0_r=p["x0_r"], x0_p=p["x0_p"])


def _config_init_theta(resolved: dict) -> Theta:
    init = resolved["init"]
    theta = Theta(
        sigma=float(_require(resolved, "init", "sigma")),
        rho=float(_require(resolved, "init", "rho")),
        x0=int(_require(resolved, "init", "x0")),
    )
    try:
        theta.validate()
    except ValueError as err:
        raise ConfigError(f"bad initial parameters: {err}")
    return theta


def _config_tune_spec(resolved: dict) -> TuneSpec:
    t = resolved["tune"]
    spec = TuneSpec(
        pilot_iterations=t["pilot_iterations"],
        K_large=t["k_large"],
        K_s=t["k_s"],
        R=t["r"],
        floor=t["floor"],
        cap=t["cap"],
        repeats=t["repeats"],
    )
    try:
        spec.validate()
    except ValueError as err:
        raise ConfigError(f"bad [tune] section: {err}")
    return spec


def _tune_report_dict(report) -> dict:
    rows = []
    for rep in report.repeats:
        theta_bar = None
        if rep.theta_bar is not None:
            theta_bar = {
                "sigma": rep.theta_bar.sigma,
                "rho": rep.theta_bar.rho,
                "x0": rep.theta_bar.x0,
            }
        rows.append(
            {
                "theta_bar": theta_bar,
                "sigma2_hat": _finite_or_none(rep.sigma2_hat),
                "k_opt_raw": _finite_or_none(rep.k_opt_raw),
                "n_finite": rep.n_finite,
                "discarded": rep.discarded,
            }
        )
    return {
        "k_opt": report.k_opt,
        "n_discarded": report.n_discarded,
        "injected": report.injected,
        "repeats": rows,
    }


def _cmd_tune(cfg: RunConfig, out_dir: Path) -> dict:
    s = cfg.settings
    resolved = _resolve_config(
        _load_config_file(Path(s["config"])), Path(s["config"]).resolve().parent
    )
    y, g, n_days, info = _config_inputs(resolved)
    rates = FixedRates(gamma=float(_require(resolved, "model", "gamma")))
    spec = _config_tune_spec(resolved)
    seed = cfg.seed if cfg.seed is not None else resolved["chain"]["seed"]
    if seed is None:
        seed = _generated_seed()
    cfg.seed = int(seed)
    resolved["chain"]["seed"] = cfg.seed
    k_opt, report = choose_particles(
        spec,
        rates=rates,
        y=y,
        g=g,
        init_theta=_config_init_theta(resolved),
        prior_config=_config_prior(resolved),
        seed=cfg.seed,
    )
    _write_json(out_dir / "tune.json", _tune_report_dict(report))
    cfg.extras["config"] = resolved
    return {"k_opt": k_opt, **info}


def _cmd_pmmh(cfg: RunConfig, out_dir: Path) -> dict:
    s = cfg.settings
    resolved = _resolve_config(
        _load_config_file(Path(s["config"])), Path(s["config"]).resolve().parent
    )
    chain_cfg = resolved["chain"]
    if s["iterations"] is not None:
        chain_cfg["iterations"] = s["iterations"]
    if s["particles"] is not None:
        chain_cfg["particles"] = s["particles"]
    iterations = int(_require(resolved, "chain", "iterations"))
    particles = _require(resolved, "chain", "particles")

    seed = cfg.seed if cfg.seed is not None else chain_cfg["seed"]
    if seed is None:
        seed = _generated_seed()
    cfg.seed = int(seed)
    chain_cfg["seed"] = cfg.seed

    y, g, n_days, info = _config_inputs(resolved)
    rates = FixedRates(gamma=float(_require(resolved, "model", "gamma")))
    prior = _config_prior(resolved)
    init_theta = _config_init_theta(resolved)

    extras = dict(info)
    if isinstance(particles, str):
        if particles != "auto":
            raise ConfigError(f"particles must be an integer or 'auto', got {particles!r}")
        spec = _config_tune_spec(resolved)
        k_opt, report = choose_particles(
            spec,
            rates=rates,
            y=y,
            g=g,
            init_theta=init_theta,
            prior_config=prior,
            seed=cfg.seed,
        )
        _write_json(out_dir / "tune.json", _tune_report_dict(report))
        extras["tune"] = {"k_opt": k_opt, "n_discarded": report.n_discarded}
        particles = k_opt
    particles = int(particles)
    chain_cfg["particles"] = particles

    config = ChainConfig(
        iterations=iterations,
        init_theta=init_theta,
        K=particles,
        target_acceptance=float(chain_cfg["target_acceptance"]),
        decay=float(chain_cfg["decay"]),
        seed=cfg.seed,
    )
    try:
        config.validate()
    except ValueError as err:
        raise ConfigError(str(err))
    ess_threshold = float(chain_cfg["ess_threshold"])

    def runner(theta, rng):
        return run_smc(
            theta, rates, y, g, K=particles,
            ess_threshold_fraction=ess_threshold, rng=rng,
        )

    chain = run_pmmh(config, rates, y, g, prior_config=prior, smc_runner=runner)

    _write_theta_trace(out_dir / "theta_trace.csv", chain)
    _write_day_matrix(out_dir / "beta_trace.csv", chain.beta)
    _write_day_matrix(out_dir / "x_trace.csv", chain.x, integer=True)

    cfg.extras["config"] = resolved
    extras.update(
        {
            "acceptance_rate": chain.acceptance_rate,
            "iterations": iterations,
            "particles_used": particles,
        }
    )
    return extras


def _read_day_matrix(path: Path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except FileNotFoundError:
        raise InputFormatError(f"{path} does not exist")
    except ValueError as err:
        raise InputFormatError(f"{path}: {err}")
    return data[:, 1:]


def _cmd_summarize(cfg: RunConfig, out_dir: Path) -> dict:
    s = cfg.settings
    run_dir = Path(s["run"])
    gamma = s["gamma"]
    time_unit = "day"
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        model = manifest.get("config", {}).get("model", {})
        if gamma is None:
            gamma = model.get("gamma")
        time_unit = model.get("time_unit", time_unit)
    if gamma is None:
        raise ConfigError(
            "gamma not found in the run manifest; pass it with --gamma"
        )
    gamma = float(gamma)

    theta_path = run_dir / "theta_trace.csv"
    try:
        raw = np.loadtxt(theta_path, delimiter=",", skiprows=1, ndmin=2)
    except FileNotFoundError:
        raise InputFormatError(f"{theta_path} does not exist")
    except ValueError as err:
        raise InputFormatError(f"{theta_path}: {err}")
    if raw.shape[0] == 0 or raw.shape[1] != 6:
        raise InputFormatError(f"{theta_path}: expected six columns and some rows")
    chain = ChainOutput(
        sigma=raw[:, 1],
        rho=raw[:, 2],
        x0=raw[:, 3].astype(np.int64),
        log_lik=raw[:, 4],
        accepted=raw[:, 5].astype(bool),
        beta=_read_day_matrix(run_dir / "beta_trace.csv"),
        x=_read_day_matrix(run_dir / "x_trace.csv").astype(np.int64),
    )
    if chain.beta.shape[0] != chain.n_iterations or chain.x.shape != chain.beta.shape:
        raise InputFormatError(f"{run_dir}: trace files disagree on dimensions")

    summary = summarize(chain, FixedRates(gamma=gamma), s["burn_in"])
    health = chain_health(chain)

    _write_day_summary(out_dir / "rt_summary.csv", summary.rt_mean, summary.rt_lo, summary.rt_hi)
    _write_day_summary(out_dir / "beta_summary.csv", summary.beta_mean, summary.beta_lo, summary.beta_hi)
    _write_day_summary(out_dir / "x_summary.csv", summary.x_mean, summary.x_lo, summary.x_hi)
    scalars = {
        name: {
            "mean": summary.scalar_mean[name],
            "lo": summary.scalar_lo[name],
            "hi": summary.scalar_hi[name],
        }
        for name in ("sigma", "rho", "x0")
    }
    _write_json(
        out_dir / "summary.json",
        {
            "run": str(run_dir),
            "gamma": gamma,
            "time_unit": time_unit,
            "burn_in": summary.burn_in,
            "burn_in_fraction": s["burn_in"],
            "n_kept": summary.n_kept,
            "n_days": summary.n_days,
            "acceptance_rate": summary.acceptance_rate,
            "scalars": scalars,
            "health": {
                "ess": health.ess,
                "max_sticky_run": health.max_sticky_run,
                "all_rejected": health.all_rejected,
            },
            "versions": _versions(),
        },
    )
    # Writing into the source run directory must not clobber the manifest
    # of the command that produced the traces; summary.json already carries
    # the summarize provenance.
    if out_dir.resolve() == run_dir.resolve() and manifest_path.exists():
        cfg.extras["skip_manifest"] = True
    return {
        "n_days": summary.n_days,
        "n_kept": summary.n_kept,
        "acceptance_rate": summary.acceptance_rate,
    }


_COMMANDS = {
    "simulate": _cmd_simulate,
    "discretize": _cmd_discretize,
    "smc": _cmd_smc,
    "tune": _cmd_tune,
    "pmmh": _cmd_pmmh,
    "summarize": _cmd_summarize,
}

# tune and pmmh resolve their own seeds (CLI flag, then config file, then
# generated) so a config-file seed is not masked by pre-generation here
_NEEDS_SEED = {"simulate", "smc"}


def dispatch(config: RunConfig) -> int:
    """Run one resolved subcommand, writing artifacts and a manifest.

    Returns 0 on success; 3 for input or config format problems; 4 when a
    scenario cannot produce a surviving epidemic; 5 when the sampler cannot
    be initialized (degenerate starting point or failed tuning).
    """
    started = time.perf_counter()
    try:
        if config.out_dir is None:
            raise ConfigError(
                f"no output directory: pass --out or set ${_ENV_OUT}"
            )
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if config.seed is None and config.command in _NEEDS_SEED:
            config.seed = _generated_seed()
        extras = _COMMANDS[config.command](config, out_dir)
    except (InputFormatError, ConfigError, NewickParseError, TipDateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except ScenarioInfeasibleError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ChainInitError, TuningFailedError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DEGENERATE_INIT
    except FileNotFoundError as err:
        print(f"error: missing file: {err}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    wall = time.perf_counter() - started
    if not config.extras.pop("skip_manifest", False):
        manifest_config = config.extras.pop("config", dict(config.settings))
        _write_manifest(
            out_dir,
            config.command,
            manifest_config,
            config.seed,
            wall,
            {"threads": config.threads, **extras},
        )
    print(f"{config.command}: wrote {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtinfer",
        description=(
            "Infer time-varying reproduction numbers from partially observed "
            "prevalence and a dated phylogeny."
        ),
    )
    parser.add_argument("--version", action="version", version=f"rtinfer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (or ${_ENV_OUT})")
    common.add_argument("--threads", type=int, help=f"worker bound (or ${_ENV_THREADS})")

    p = sub.add_parser("simulate", parents=[common], help="simulate an epidemic, observations, and a tree")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--schedule", required=True, help="constant:L | peaked:LO:HI | changepoint:B:A:DAY")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--x0", type=int, default=1)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--genetic-fraction", type=float, default=0.0, dest="genetic_fraction")
    p.add_argument("--max-retries", type=int, default=100, dest="max_retries")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("discretize", parents=[common], help="slice a Newick tree into per-day (a, c) counts")
    p.add_argument("--tree", required=True)
    p.add_argument("--tip-dates", dest="tip_dates")
    p.add_argument("--day-length", type=float, default=1.0, dest="day_length")
    p.add_argument("--present", type=float)
    p.add_argument("--most-recent-tip", type=float, default=0.0, dest="most_recent_tip")

    p = sub.add_parser("smc", parents=[common], help="run the particle filter once at fixed parameters")
    p.add_argument("--prevalence")
    p.add_argument("--slices")
    p.add_argument("--n-days", type=int, dest="n_days")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--x0", type=int, required=True)
    p.add_argument("--particles", type=int, required=True)
    p.add_argument("--ess-threshold", type=float, default=0.5, dest="ess_threshold")
    p.add_argument("--fixed-beta", type=float, dest="fixed_beta")
    p.add_argument("--resampling", choices=["systematic", "multinomial"], default="systematic")
    p.add_argument("--sample-path", action="store_true", dest="sample_path")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("tune", parents=[common], help="choose a particle count by variance targeting")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("pmmh", parents=[common], help="run the full MCMC chain")
    p.add_argument("--config", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--particles", help="particle count, or 'auto'")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("summarize", parents=[common], help="summarize a stored chain into per-day intervals")
    p.add_argument("--run", required=True, help="run directory holding the trace CSVs")
    p.add_argument("--burn-in", type=float, default=0.1, dest="burn_in")
    p.add_argument("--gamma", type=float, help="needed only when the run manifest lacks it")

    return parser


def _to_run_config(args: argparse.Namespace) -> RunConfig:
    settings = dict(vars(args))
    command = settings.pop("command")
    out = settings.pop("out", None) or os.environ.get(_ENV_OUT)
    threads = settings.pop("threads", None)
    if threads is None:
        threads = int(os.environ.get(_ENV_THREADS, "1"))
    seed = settings.pop("seed", None)
    if command == "pmmh" and settings.get("particles") not in (None, "auto"):
        try:
            settings["particles"] = int(settings["particles"])
        except ValueError:
            raise ConfigError(
                f"--particles must be an integer or 'auto', got {settings['particles']!r}"
            )
    if command == "summarize" and out is None:
        out = settings["run"]
    return RunConfig(
        command=command,
        settings=settings,
        out_dir=Path(out) if out else None,
        seed=seed,
        threads=int(threads),
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _to_run_config(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    return dispatch(config)


if __name__ == "__main__":
    sys.exit(main())
