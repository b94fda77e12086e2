"""Scenario harness: schedules, trial loops, and metric extraction.

Three scenarios mirror the single-agent and network settings:

  sim1  a listener learns from scripted speakers, one new partner every
        few trials; tracks the predictive probability of the target.
  sim2  a speaker with a weakly word-biased prior talks to oracle
        listeners; tracks expected utterance length.
  sim3  four adaptive agents meet round-robin; tracks whether agents'
        preferred one-word labels align within and across dyads.

Runs are deterministic given (seed, config): every agent draws from its
own stream keyed by (run seed, agent id), and parallel execution only
fans out independent runs.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .agents import Agent, ScriptedAgent, ScriptedBehavior
from .inference import FitConfig, PoolingRegime, PriorSpec
from .lexicon import ObjectId, Role, Utterance, utterance_cost
from .rsa import RsaConfig


class SimulationError(RuntimeError):
    """Wraps failures with run/trial coordinates."""


@dataclass(frozen=True)
class Schedule:
    """Round-robin pairing plan.

    blocks[b] lists the (agent_a, agent_b) pairs meeting in block b;
    roles alternate between the two agents from trial to trial within a
    block.
    """

    blocks: tuple[tuple[tuple[int, int], ...], ...]
    trials_per_block: int
    role_policy: str = "alternate-within-block"

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


def round_robin(n_agents: int, trials_per_block: int = 8) -> Schedule:
    """Circle-method schedule: every pair meets exactly once over
    n_agents - 1 blocks, every agent plays in every block."""
    if n_agents < 2 or n_agents % 2 != 0:
        raise ValueError("round robin needs an even number of agents >= 2")
    order = list(range(n_agents))
    blocks = []
    for _ in range(n_agents - 1):
        pairs = tuple(
            (min(order[i], order[-1 - i]), max(order[i], order[-1 - i]))
            for i in range(n_agents // 2)
        )
        blocks.append(pairs)
        order = [order[0], order[-1]] + order[1:-1]
    return Schedule(tuple(blocks), trials_per_block)


@dataclass(frozen=True)
class TrialRecord:
    run_id: int
    block: int
    trial: int
    speaker_id: int
    listener_id: int
    target: ObjectId
    utterance: Utterance
    choice: ObjectId
    listener_target_prob: float
    utterance_length: float


@dataclass(frozen=True)
class AlignmentRecord:
    run_id: int
    block: int
    pair_type: str  # "within" | "across"
    agent_a: int
    agent_b: int
    aligned: bool


def _run_seed(seed: int, run_id: int) -> int:
    ss = np.random.SeedSequence([seed & (2**63 - 1), run_id])
    return int(ss.generate_state(1, np.uint64)[0])


def _map_runs(fn, arg_tuples, workers: int):
    if workers <= 1:
        return [fn(*args) for args in arg_tuples]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args) for args in arg_tuples]
        return [f.result() for f in futures]


# --- Simulation 1: listener accuracy across partners -----------------------

def _sim1_single(run_id, regime, rsa_cfg, prior, fit_cfg, seed,
                 n_partners, trials_per_partner):
    learner = Agent.create(0, regime, rsa_cfg, prior, fit_cfg,
                           _run_seed(seed, run_id))
    speaker = ScriptedAgent(ScriptedBehavior.ALWAYS_U1_FOR_O1)
    target = 0
    records = []
    trial = 0
    for p in range(1, n_partners + 1):
        for _ in range(trials_per_partner):
            trial += 1
            u = speaker.speak(target)
            try:
                dist = learner.listener_distribution(u, p)
                choice = dist.sample(learner.rng)
                records.append(TrialRecord(
                    run_id=run_id, block=p, trial=trial, speaker_id=p,
                    listener_id=0, target=target, utterance=u, choice=choice,
                    listener_target_prob=dist.prob_of(target),
                    utterance_length=utterance_cost(u),
                ))
                learner.observe(p, u, target, Role.SPEAKER)
            except Exception as e:
                raise SimulationError(f"sim1 run {run_id} trial {trial}: {e}") from e
    return records


def run_sim1(fit_cfg: FitConfig, prior: PriorSpec, rsa_cfg: RsaConfig,
             regime: PoolingRegime, n_runs: int, seed: int, *,
             n_partners: int = 4, trials_per_partner: int = 4,
             workers: int = 1) -> list[TrialRecord]:
    """Scripted speaker names object 0 with the same word on every trial;
    a fresh partner arrives every `trials_per_partner` trials."""
    args = [(r, regime, rsa_cfg, prior, fit_cfg, seed, n_partners, trials_per_partner)
            for r in range(n_runs)]
    return [rec for run in _map_runs(_sim1_single, args, workers) for rec in run]


# --- Simulation 2: speaker utterance length across partners ----------------

def _sim2_single(run_id, regime, rsa_cfg, prior, fit_cfg, seed,
                 n_partners, trials_per_partner):
    learner = Agent.create(0, regime, rsa_cfg, prior, fit_cfg,
                           _run_seed(seed, run_id))
    oracle = ScriptedAgent(ScriptedBehavior.ORACLE_LISTENER)
    costs = rsa_cfg.vocabulary.costs
    records = []
    trial = 0
    for p in range(1, n_partners + 1):
        for t in range(trials_per_partner):
            trial += 1
            target = t % rsa_cfg.vocabulary.n_objects
            try:
                dist = learner.speaker_distribution(target, p)
                expected_len = float(dist.probs @ costs)
                u = dist.sample(learner.rng)
                choice = oracle.listen(u, target)
                records.append(TrialRecord(
                    run_id=run_id, block=p, trial=trial, speaker_id=0,
                    listener_id=p, target=target, utterance=u, choice=choice,
                    listener_target_prob=1.0, utterance_length=expected_len,
                ))
                learner.observe(p, u, choice, Role.LISTENER)
            except Exception as e:
                raise SimulationError(f"sim2 run {run_id} trial {trial}: {e}") from e
    return records


def run_sim2(fit_cfg: FitConfig, prior: PriorSpec, rsa_cfg: RsaConfig,
             regime: PoolingRegime, n_runs: int, seed: int, *,
             n_partners: int = 3, trials_per_partner: int = 4,
             workers: int = 1) -> list[TrialRecord]:
    """Adaptive speaker with oracle listeners; targets alternate so both
    objects get named. utterance_length logs the expected cost under the
    speaker predictive (the sampled utterance is in the record too)."""
    args = [(r, regime, rsa_cfg, prior, fit_cfg, seed, n_partners, trials_per_partner)
            for r in range(n_runs)]
    return [rec for run in _map_runs(_sim2_single, args, workers) for rec in run]


# --- Simulation 3: network convergence --------------------------------------

def _modal_primitive(agent: Agent, target: ObjectId, partner_id: int,
                     sample: bool) -> Utterance:
    """The agent's preferred one-word label for a target."""
    dist = agent.speaker_distribution(target, partner_id)
    n_prim = agent.vocabulary.n_primitives
    probs = dist.probs[:n_prim]
    if sample:
        probs = probs / probs.sum()
        idx = int(agent.rng.choice(n_prim, p=probs))
    else:
        idx = int(np.argmax(probs))
    return Utterance.primitive(idx)


def _sim3_single(run_id, regime, rsa_cfg, prior, fit_cfg, seed, schedule,
                 alignment_from_samples):
    n_agents = 2 * len(schedule.blocks[0])
    agents = [Agent.create(i, regime, rsa_cfg, prior, fit_cfg,
                           _run_seed(seed, run_id)) for i in range(n_agents)]
    n_objects = rsa_cfg.vocabulary.n_objects
    trials, alignments = [], []
    trial = 0
    for block_no, pairs in enumerate(schedule.blocks, start=1):
        for j in range(schedule.trials_per_block):
            for a, b in pairs:
                trial += 1
                spk, lis = (a, b) if j % 2 == 0 else (b, a)
                target = (j // 2) % n_objects
                try:
                    sdist = agents[spk].speaker_distribution(target, lis)
                    expected_len = float(sdist.probs @ rsa_cfg.vocabulary.costs)
                    u = sdist.sample(agents[spk].rng)
                    ldist = agents[lis].listener_distribution(u, spk)
                    choice = ldist.sample(agents[lis].rng)
                    trials.append(TrialRecord(
                        run_id=run_id, block=block_no, trial=trial,
                        speaker_id=spk, listener_id=lis, target=target,
                        utterance=u, choice=choice,
                        listener_target_prob=ldist.prob_of(target),
                        utterance_length=expected_len,
                    ))
                    # both sides get feedback: the speaker scores the
                    # listener's choice, the listener the speaker's word
                    # for the revealed target
                    agents[spk].observe(lis, u, choice, Role.LISTENER)
                    agents[lis].observe(spk, u, target, Role.SPEAKER)
                except Exception as e:
                    raise SimulationError(
                        f"sim3 network {run_id} block {block_no} trial {trial}: {e}"
                    ) from e

        current_partner = {}
        for a, b in pairs:
            current_partner[a] = b
            current_partner[b] = a
        labels = {
            x: [_modal_primitive(agents[x], o, current_partner[x],
                                 alignment_from_samples)
                for o in range(n_objects)]
            for x in range(n_agents)
        }
        pair_set = set(pairs)
        for x in range(n_agents):
            for y in range(x + 1, n_agents):
                pair_type = "within" if (x, y) in pair_set else "across"
                for o in range(n_objects):
                    alignments.append(AlignmentRecord(
                        run_id=run_id, block=block_no, pair_type=pair_type,
                        agent_a=x, agent_b=y,
                        aligned=labels[x][o] == labels[y][o],
                    ))
    return trials, alignments


def run_sim3(fit_cfg: FitConfig, prior: PriorSpec, rsa_cfg: RsaConfig,
             regime: PoolingRegime, n_networks: int, seed: int, *,
             n_agents: int = 4, trials_per_pair: int = 8,
             alignment_from_samples: bool = False,
             workers: int = 1) -> tuple[list[TrialRecord], list[AlignmentRecord]]:
    """Round-robin networks of adaptive agents.

    After each block, every agent's modal one-word label per target
    (toward its current partner) is compared across all agent pairs;
    pairs that just interacted count as "within", the rest as "across".
    """
    schedule = round_robin(n_agents, trials_per_pair)
    args = [(r, regime, rsa_cfg, prior, fit_cfg, seed, schedule,
             alignment_from_samples) for r in range(n_networks)]
    results = _map_runs(_sim3_single, args, workers)
    trials = [rec for t, _ in results for rec in t]
    alignments = [rec for _, a in results for rec in a]
    return trials, alignments


# --- Aggregation -------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    trial: int
    mean: float
    ci_low: float
    ci_high: float
    metric: str


def bootstrap_mean_ci(values: np.ndarray, n_boot: int = 1000,
                      seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean per column with a percentile bootstrap over rows (runs)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ValueError("need a (n_runs >= 2, n_groups) value matrix")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.shape[0], size=(n_boot, values.shape[0]))
    boot = values[idx].mean(axis=1)  # (n_boot, n_groups)
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    return values.mean(axis=0), lo, hi


def summarize(records: list[TrialRecord], metric: str = "listener_target_prob",
              n_boot: int = 1000, seed: int = 0) -> list[SummaryRow]:
    """Per-trial means with bootstrapped 95% CIs across runs."""
    if not records:
        raise ValueError("no records to summarize")
    run_ids = sorted({r.run_id for r in records})
    trial_ids = sorted({r.trial for r in records})
    row = {rid: i for i, rid in enumerate(run_ids)}
    col = {t: i for i, t in enumerate(trial_ids)}
    values = np.full((len(run_ids), len(trial_ids)), np.nan)
    for rec in records:
        values[row[rec.run_id], col[rec.trial]] = getattr(rec, metric)
    if np.isnan(values).any():
        raise ValueError("missing (run, trial) cells; cannot summarize")
    mean, lo, hi = bootstrap_mean_ci(values, n_boot, seed)
    return [SummaryRow(t, float(mean[i]), float(lo[i]), float(hi[i]), metric)
            for i, t in enumerate(trial_ids)]


def summarize_alignment(records: list[AlignmentRecord], n_boot: int = 1000,
                        seed: int = 0) -> list[SummaryRow]:
    """Per-block alignment rates by pair type, bootstrapped across networks.

    Row metric names are alignment_within / alignment_across; the trial
    column carries the block number.
    """
    if not records:
        raise ValueError("no records to summarize")
    out = []
    run_ids = sorted({r.run_id for r in records})
    blocks = sorted({r.block for r in records})
    for pair_type in ("within", "across"):
        values = np.full((len(run_ids), len(blocks)), np.nan)
        for i, rid in enumerate(run_ids):
            for j, b in enumerate(blocks):
                vals = [float(r.aligned) for r in records
                        if r.run_id == rid and r.block == b and r.pair_type == pair_type]
                if vals:
                    values[i, j] = float(np.mean(vals))
        if np.isnan(values).any():
            raise ValueError(f"missing alignment cells for {pair_type}")
        mean, lo, hi = bootstrap_mean_ci(values, n_boot, seed + (pair_type == "across"))
        out += [SummaryRow(b, float(mean[j]), float(lo[j]), float(hi[j]),
                           f"alignment_{pair_type}") for j, b in enumerate(blocks)]
    return out
