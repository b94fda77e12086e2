"""Stateful agents: act through posterior predictives, learn by refitting.

An adaptive agent keeps one observation log per partner and a guide
whose phi blocks mirror the partners seen so far. Speaking and
listening sample the posterior predictive and never change state;
`observe` is the only mutation and triggers a full refit on all
accumulated data. Scripted agents cover the fixed interlocutors used by
the single-agent scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .inference import (
    FitConfig,
    GaussianGuide,
    PoolingRegime,
    PriorSpec,
    fit,
    predictive_listener,
    predictive_speaker,
)
from .lexicon import ObjectId, ObservationLog, Role, Utterance, Vocabulary
from .rsa import Distribution, RsaConfig


@dataclass
class Agent:
    """An adaptive speaker/listener with per-partner belief blocks."""

    agent_id: int
    regime: PoolingRegime
    rsa_cfg: RsaConfig
    prior: PriorSpec
    fit_cfg: FitConfig
    rng: np.random.Generator
    guide: GaussianGuide | None = None
    logs: dict[int, ObservationLog] | None = None

    def __post_init__(self):
        if self.guide is None:
            self.guide = GaussianGuide.initial(self.regime, [], self.prior)
        if self.logs is None:
            self.logs = {}

    @classmethod
    def create(cls, agent_id: int, regime: PoolingRegime, rsa_cfg: RsaConfig,
               prior: PriorSpec, fit_cfg: FitConfig, seed) -> "Agent":
        """Build an agent with its own deterministic random stream."""
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1),
                                                            agent_id]))
        return cls(agent_id, regime, rsa_cfg, prior, fit_cfg, rng)

    @property
    def vocabulary(self) -> Vocabulary:
        return self.rsa_cfg.vocabulary

    def _next_seed(self) -> int:
        return int(self.rng.integers(2**63))

    def speaker_distribution(self, target: ObjectId, partner_id: int) -> Distribution:
        return predictive_speaker(self.guide, target, self.prior, self.rsa_cfg,
                                  partner_id, self.fit_cfg.n_mc_predictive,
                                  self._next_seed())

    def listener_distribution(self, u: Utterance, partner_id: int) -> Distribution:
        return predictive_listener(self.guide, u, self.prior, self.rsa_cfg,
                                   partner_id, self.fit_cfg.n_mc_predictive,
                                   self._next_seed())

    def speak(self, target: ObjectId, partner_id: int) -> Utterance:
        """Sample an utterance for the target from the speaker predictive."""
        return self.speaker_distribution(target, partner_id).sample(self.rng)

    def listen(self, u: Utterance, partner_id: int) -> ObjectId:
        """Sample an object choice from the listener predictive."""
        return self.listener_distribution(u, partner_id).sample(self.rng)

    def observe(self, partner_id: int, u: Utterance, o: ObjectId,
                partner_role: Role) -> None:
        """Record one partner action and refit beliefs on all data.

        The only state mutation. A first observation from a new partner
        adds a phi block (except under COMPLETE, where the shared block
        absorbs everyone).
        """
        if partner_id not in self.logs:
            self.logs[partner_id] = ObservationLog(partner_id)
            if self.regime is not PoolingRegime.COMPLETE:
                fresh = GaussianGuide.initial(self.regime, [partner_id], self.prior)
                self.guide.phi[partner_id] = fresh.phi[partner_id]
        self.logs[partner_id].append(u, o, partner_role)
        fit_cfg = replace(self.fit_cfg, seed=self._next_seed())
        self.guide = fit(self.guide, list(self.logs.values()), self.prior,
                         self.rsa_cfg, fit_cfg)


class ScriptedBehavior(Enum):
    """Fixed partners for the single-agent scenarios."""

    ALWAYS_U1_FOR_O1 = "always_u1_for_o1"
    ORACLE_LISTENER = "oracle_listener"


@dataclass(frozen=True)
class ScriptedAgent:
    """Non-learning interlocutor with a deterministic policy."""

    behavior: ScriptedBehavior

    def speak(self, target: ObjectId) -> Utterance:
        if self.behavior is not ScriptedBehavior.ALWAYS_U1_FOR_O1:
            raise ValueError(f"{self.behavior} does not speak")
        if target != 0:
            raise ValueError("scripted speaker only ever names object 0")
        return Utterance.primitive(0)

    def listen(self, u: Utterance, true_target: ObjectId) -> ObjectId:
        """Oracle choice; the true target arrives via the harness."""
        if self.behavior is not ScriptedBehavior.ORACLE_LISTENER:
            raise ValueError(f"{self.behavior} does not listen")
        return true_target
