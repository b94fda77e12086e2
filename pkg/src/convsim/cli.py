"""Command-line entry point: run simulations, write CSV logs and summaries.

Outputs in the chosen directory:

  trials.csv      one row per trial per run
  alignment.csv   sim3 only, one row per agent pair, block, and target
  summary.csv     per-trial means with bootstrapped 95% CIs
  manifest.json   the fully resolved configuration; re-running with
                  --config manifest.json reproduces the outputs byte
                  for byte

Configuration is a flat JSON document; command-line flags and --set
key=value pairs override file values.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .inference import FitConfig, PoolingRegime, PriorSpec
from .lexicon import Vocabulary
from .rsa import RsaConfig
from .simulations import (
    SimulationError,
    run_sim1,
    run_sim2,
    run_sim3,
    summarize,
    summarize_alignment,
)

REGIME_ORDER = ("partial", "complete", "none")

TRIALS_COLUMNS = ["run_id", "sim", "regime", "block", "trial", "partner_index",
                  "speaker_id", "listener_id", "target", "utterance", "choice",
                  "listener_target_prob", "utterance_length"]
ALIGNMENT_COLUMNS = ["run_id", "block", "pair_type", "agent_a", "agent_b", "aligned"]
SUMMARY_COLUMNS = ["sim", "regime", "trial", "mean", "ci_low", "ci_high", "metric"]


@dataclass
class RunConfig:
    """Flat, JSON-serializable run configuration."""

    sim: str = "sim1"
    regime: str = "all"
    n_runs: int = 16
    seed: int = 0
    output_dir: str = ""
    workers: int = 1
    # inference
    n_steps: int = 2000
    learning_rate: float = 0.05
    n_mc_elbo: int = 8
    n_mc_predictive: int = 2000
    # pragmatics
    w_informativity: float = 11.0
    w_cost: float = 7.0
    # priors
    theta_prior_std: float = 1.0
    phi_drift_std: float = 1.0
    speaker_bias: float = 0.3
    # scenario structure
    sim1_n_partners: int = 4
    sim2_n_partners: int = 3
    trials_per_partner: int = 4
    sim3_n_agents: int = 4
    sim3_trials_per_pair: int = 8
    alignment_from_samples: bool = False
    n_bootstrap: int = 1000


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    kind = _FIELDS[name].type
    if kind == "bool":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "1", "yes"):
            return True
        if text in ("false", "0", "no"):
            return False
        raise ValueError(f"{name}: cannot parse boolean from {value!r}")
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return str(value)


def build_config(file_values: dict | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Layer defaults, config-file values, and CLI overrides."""
    merged = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if key == "tool_version":
                continue
            if key not in _FIELDS:
                raise ValueError(f"unknown config key: {key}")
            merged[key] = _coerce(key, value)
    return RunConfig(**merged)


def validate(config: RunConfig) -> list[str]:
    """All configuration problems, without side effects."""
    problems = []
    if config.sim not in ("sim1", "sim2", "sim3"):
        problems.append(f"sim: unknown simulation {config.sim!r}")
    if config.regime not in REGIME_ORDER + ("all",):
        problems.append(f"regime: unknown regime {config.regime!r}")
    if not config.output_dir:
        problems.append("output_dir: missing output directory")
    for name in ("n_runs", "n_steps", "n_mc_elbo", "n_mc_predictive",
                 "sim1_n_partners", "sim2_n_partners", "trials_per_partner",
                 "sim3_trials_per_pair", "n_bootstrap", "workers"):
        if getattr(config, name) < 1:
            problems.append(f"{name}: must be positive")
    for name in ("learning_rate", "theta_prior_std", "phi_drift_std"):
        if getattr(config, name) <= 0:
            problems.append(f"{name}: must be positive")
    if config.seed < 0:
        problems.append("seed: must be nonnegative")
    for name in ("w_informativity", "w_cost"):
        value = getattr(config, name)
        if not (value == value and abs(value) != float("inf")):
            problems.append(f"{name}: must be finite")
        elif value < 0:
            problems.append(f"{name}: must be nonnegative")
    if config.sim3_n_agents < 2 or config.sim3_n_agents % 2:
        problems.append("sim3_n_agents: must be even and at least 2")
    return problems


def _scenario(config: RunConfig):
    """Vocabulary, prior, and RSA config for the chosen simulation."""
    if config.sim == "sim1":
        vocab = Vocabulary(2, 2)
        prior = PriorSpec(
            theta_prior_mean=PriorSpec.standard(vocab).theta_prior_mean,
            theta_prior_std=config.theta_prior_std,
            phi_drift_std=config.phi_drift_std,
        )
    else:
        vocab = Vocabulary(2, 4, include_conjunctions=True)
        biased = PriorSpec.word_biased(vocab, config.speaker_bias)
        prior = PriorSpec(
            theta_prior_mean=biased.theta_prior_mean,
            theta_prior_std=config.theta_prior_std,
            phi_drift_std=config.phi_drift_std,
        )
    rsa_cfg = RsaConfig(vocab, w_informativity=config.w_informativity,
                        w_cost=config.w_cost)
    return prior, rsa_cfg


def _fit_config(config: RunConfig) -> FitConfig:
    return FitConfig(n_steps=config.n_steps, learning_rate=config.learning_rate,
                     n_mc_elbo=config.n_mc_elbo,
                     n_mc_predictive=config.n_mc_predictive, seed=config.seed)


def _object_label(index: int) -> str:
    return f"o{index + 1}"


def run(config: RunConfig) -> int:
    """Execute the configured simulation; returns a process exit status."""
    problems = validate(config)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2

    out_dir = Path(config.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"cannot create output dir {out_dir}: {e}", file=sys.stderr)
        return 2

    regimes = REGIME_ORDER if config.regime == "all" else (config.regime,)
    prior, rsa_cfg = _scenario(config)
    fit_cfg = _fit_config(config)

    trial_rows, align_rows, summary_rows = [], [], []
    try:
        for regime_name in regimes:
            regime = PoolingRegime(regime_name)
            if config.sim == "sim1":
                records = run_sim1(fit_cfg, prior, rsa_cfg, regime, config.n_runs,
                                   config.seed, n_partners=config.sim1_n_partners,
                                   trials_per_partner=config.trials_per_partner,
                                   workers=config.workers)
                aligns = []
                metrics = ["listener_target_prob"]
            elif config.sim == "sim2":
                records = run_sim2(fit_cfg, prior, rsa_cfg, regime, config.n_runs,
                                   config.seed, n_partners=config.sim2_n_partners,
                                   trials_per_partner=config.trials_per_partner,
                                   workers=config.workers)
                aligns = []
                metrics = ["utterance_length"]
            else:
                records, aligns = run_sim3(
                    fit_cfg, prior, rsa_cfg, regime, config.n_runs, config.seed,
                    n_agents=config.sim3_n_agents,
                    trials_per_pair=config.sim3_trials_per_pair,
                    alignment_from_samples=config.alignment_from_samples,
                    workers=config.workers)
                metrics = ["listener_target_prob", "utterance_length"]

            for rec in records:
                trial_rows.append([
                    rec.run_id, config.sim, regime_name, rec.block, rec.trial,
                    rec.block, rec.speaker_id, rec.listener_id,
                    _object_label(rec.target), rec.utterance.label(),
                    _object_label(rec.choice), repr(rec.listener_target_prob),
                    repr(rec.utterance_length),
                ])
            for rec in aligns:
                align_rows.append([
                    rec.run_id, rec.block, rec.pair_type, rec.agent_a,
                    rec.agent_b, "true" if rec.aligned else "false",
                ])
            if config.n_runs >= 2:
                for metric in metrics:
                    for row in summarize(records, metric, config.n_bootstrap,
                                         config.seed):
                        summary_rows.append([config.sim, regime_name, row.trial,
                                             repr(row.mean), repr(row.ci_low),
                                             repr(row.ci_high), row.metric])
                if aligns:
                    for row in summarize_alignment(aligns, config.n_bootstrap,
                                                   config.seed):
                        summary_rows.append([config.sim, regime_name, row.trial,
                                             repr(row.mean), repr(row.ci_low),
                                             repr(row.ci_high), row.metric])
    except SimulationError as e:
        print(f"simulation failed: {e}", file=sys.stderr)
        return 1

    _write_csv(out_dir / "trials.csv", TRIALS_COLUMNS, trial_rows)
    if config.sim == "sim3":
        _write_csv(out_dir / "alignment.csv", ALIGNMENT_COLUMNS, align_rows)
    _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary_rows)
    manifest = dict(dataclasses.asdict(config), tool_version=__version__)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="convsim",
        description="Run reference-game convention formation simulations.")
    parser.add_argument("--config", help="JSON config file (flat keys)")
    parser.add_argument("--sim", choices=["sim1", "sim2", "sim3"])
    parser.add_argument("--regime", choices=["partial", "complete", "none", "all"])
    parser.add_argument("--runs", type=int, help="number of independent runs")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config field")
    args = parser.parse_args(argv)

    file_values = {}
    if args.config:
        try:
            file_values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            print(f"cannot read config {args.config}: {e}", file=sys.stderr)
            return 2

    overrides = {}
    for flag, key in (("sim", "sim"), ("regime", "regime"), ("runs", "n_runs"),
                      ("seed", "seed"), ("out", "output_dir"),
                      ("workers", "workers")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    for item in args.set:
        if "=" not in item:
            print(f"--set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        key, _, value = item.partition("=")
        overrides[key] = value

    try:
        config = build_config(file_values, overrides)
    except (ValueError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
