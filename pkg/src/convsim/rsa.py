"""Pragmatic production and comprehension over an uncertain lexicon.

The recursion grounds out in a literal listener L0 (softmax over lexical
meaning values), a speaker S1 that trades informativity against
utterance cost, and a listener L1 that inverts S1:

    L0(o | u)  propto  exp(meaning(u, o))
    S1(u | o)  propto  exp(w_I * log L0(o | u) - w_C * cost(u))
    L1(o | u)  propto  S1(u | o) * P(o)

All arithmetic is done in the log domain with a finite floor so the
likelihoods stay differentiable everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lexicon import (
    LexiconMatrix,
    ObjectId,
    Observation,
    Role,
    Utterance,
    Vocabulary,
    meaning_matrix,
    meaning_matrix_backward,
)

LOG_PROB_FLOOR = -1e9


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    """Log-sum-exp over one axis, keepdims. Assumes finite inputs."""
    m = a.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))


@dataclass(frozen=True)
class RsaConfig:
    """Weights, object prior, and the scenario vocabulary."""

    vocabulary: Vocabulary
    w_informativity: float = 11.0
    w_cost: float = 7.0
    object_prior: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.w_informativity) or not np.isfinite(self.w_cost):
            raise ValueError("RSA weights must be finite")
        prior = self.object_prior
        if prior is None:
            prior = np.full(self.vocabulary.n_objects, 1.0 / self.vocabulary.n_objects)
        prior = np.asarray(prior, dtype=float)
        if prior.shape != (self.vocabulary.n_objects,):
            raise ValueError("object_prior length must match n_objects")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise ValueError("object_prior must be a probability vector")
        object.__setattr__(self, "object_prior", prior)

    @cached_property
    def log_object_prior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(self.object_prior), LOG_PROB_FLOOR)


@dataclass(frozen=True)
class Distribution:
    """A normalized distribution over a fixed support."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if len(self.support) != len(probs) or len(probs) == 0:
            raise ValueError("support and probs must be non-empty and equal length")
        if len(set(self.support)) != len(self.support):
            raise ValueError("duplicate support items")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probs must be nonnegative and sum to 1, got {probs}")
        object.__setattr__(self, "probs", probs)

    def prob_of(self, item) -> float:
        return float(self.probs[self.support.index(item)])

    def mode(self):
        return self.support[int(np.argmax(self.probs))]

    def sample(self, rng: np.random.Generator):
        return self.support[int(rng.choice(len(self.support), p=self.probs))]


def log_literal_listener(phi: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """log L0 for every utterance row; shape (..., n_utterances, n_objects)."""
    meanings = meaning_matrix(phi, vocab)
    if not np.all(np.isfinite(meanings)):
        raise ValueError("non-finite meaning values from lexicon "
                         f"(extremes {np.nanmin(meanings)}, {np.nanmax(meanings)})")
    return meanings - _logsumexp(meanings, axis=-1)


def log_pragmatic_speaker(phi: np.ndarray, vocab: Vocabulary, cfg: RsaConfig) -> np.ndarray:
    """log S1 normalized over utterances; shape (..., n_utterances, n_objects)."""
    log_l0 = log_literal_listener(phi, vocab)
    scores = cfg.w_informativity * log_l0 - cfg.w_cost * vocab.costs[..., :, None]
    return scores - _logsumexp(scores, axis=-2)


def log_pragmatic_listener(phi: np.ndarray, vocab: Vocabulary, cfg: RsaConfig) -> np.ndarray:
    """log L1 normalized over objects; shape (..., n_utterances, n_objects)."""
    log_s1 = log_pragmatic_speaker(phi, vocab, cfg)
    scores = log_s1 + cfg.log_object_prior
    total = _logsumexp(scores, axis=-1)
    if not np.all(np.isfinite(total)):
        raise ValueError("pragmatic listener has zero total mass")
    return scores - total


def literal_listener(phi: LexiconMatrix, u: Utterance, vocab: Vocabulary) -> Distribution:
    """L0: which object a bare meaning lookup points to."""
    vocab.validate_lexicon(phi)
    row = vocab.utterance_index(u)
    probs = np.exp(log_literal_listener(np.asarray(phi, dtype=float), vocab)[row])
    return Distribution(tuple(range(vocab.n_objects)), probs / probs.sum())


def pragmatic_speaker(phi: LexiconMatrix, o: ObjectId, vocab: Vocabulary,
                      cfg: RsaConfig) -> Distribution:
    """S1: utterance choice for a target, over the full utterance set."""
    vocab.validate_lexicon(phi)
    probs = np.exp(log_pragmatic_speaker(np.asarray(phi, dtype=float), vocab, cfg)[:, o])
    return Distribution(vocab.utterances, probs / probs.sum())


def pragmatic_listener(phi: LexiconMatrix, u: Utterance, vocab: Vocabulary,
                       cfg: RsaConfig) -> Distribution:
    """L1: object choice after inverting the speaker model."""
    vocab.validate_lexicon(phi)
    row = vocab.utterance_index(u)
    probs = np.exp(log_pragmatic_listener(np.asarray(phi, dtype=float), vocab, cfg)[row])
    return Distribution(tuple(range(vocab.n_objects)), probs / probs.sum())


def datum_log_likelihood(phi: LexiconMatrix, record: Observation, vocab: Vocabulary,
                         cfg: RsaConfig) -> float:
    """Log probability of one partner action under lexicon phi.

    A partner who spoke is scored by S1(u | o); a partner who chose an
    object is scored by L1(o | u).
    """
    row = vocab.utterance_index(record.utterance)
    phi = np.asarray(phi, dtype=float)
    if record.partner_role is Role.SPEAKER:
        lp = log_pragmatic_speaker(phi, vocab, cfg)[row, record.object_id]
    else:
        lp = log_pragmatic_listener(phi, vocab, cfg)[row, record.object_id]
    return float(max(lp, LOG_PROB_FLOOR))


@dataclass(frozen=True)
class LikelihoodTallies:
    """Observation counts per (utterance, object) cell, one pair of
    count matrices per partner, in sorted partner order.

    Collapsing records to counts makes the data likelihood independent
    of record order, bit for bit.
    """

    partner_ids: tuple[int, ...]
    speaker_counts: np.ndarray   # (n_partners, n_utterances, n_objects)
    listener_counts: np.ndarray  # same shape

    @property
    def n_partners(self) -> int:
        return len(self.partner_ids)

    @cached_property
    def has_speaker_data(self) -> bool:
        return bool(self.speaker_counts.any())

    @cached_property
    def has_listener_data(self) -> bool:
        return bool(self.listener_counts.any())


def tally_observations(data, vocab: Vocabulary) -> LikelihoodTallies:
    """Collapse observation logs into per-partner count matrices."""
    logs = sorted(data, key=lambda log: log.partner_id)
    ids = tuple(log.partner_id for log in logs)
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate partner ids in data: {ids}")
    n_u = len(vocab.utterances)
    spk = np.zeros((len(logs), n_u, vocab.n_objects))
    lis = np.zeros_like(spk)
    for k, log in enumerate(logs):
        for rec in log:
            row = vocab.utterance_index(rec.utterance)
            if not 0 <= rec.object_id < vocab.n_objects:
                raise ValueError(f"object id {rec.object_id} out of range")
            target = spk if rec.partner_role is Role.SPEAKER else lis
            target[k, row, rec.object_id] += 1.0
    return LikelihoodTallies(ids, spk, lis)


def data_log_likelihood(phi: np.ndarray, tallies: LikelihoodTallies, vocab: Vocabulary,
                        cfg: RsaConfig, with_grad: bool = False):
    """Total log likelihood of tallied observations, optionally with its
    gradient w.r.t. phi.

    phi has shape (..., n_partners, n_objects, n_primitives) with one
    lexicon slice per partner in tally order; leading axes broadcast
    over (e.g. Monte Carlo samples). Returns the summed log likelihood
    with shape (...,) and, if requested, d loglik / d phi of phi's shape.
    """
    log_l0 = log_literal_listener(phi, vocab)
    scores = cfg.w_informativity * log_l0 - cfg.w_cost * vocab.costs[..., :, None]
    log_s1 = scores - _logsumexp(scores, axis=-2)
    if tallies.has_listener_data:
        l1_scores = log_s1 + cfg.log_object_prior
        log_l1 = l1_scores - _logsumexp(l1_scores, axis=-1)

    spk, lis = tallies.speaker_counts, tallies.listener_counts
    loglik = (spk * np.maximum(log_s1, LOG_PROB_FLOOR)).sum(axis=(-3, -2, -1))
    if tallies.has_listener_data:
        loglik = loglik + (lis * np.maximum(log_l1, LOG_PROB_FLOOR)).sum(axis=(-3, -2, -1))
    if not with_grad:
        return loglik

    # Backward pass. Listener records hit log L1; undo its normalization
    # over objects first, then fold everything through log S1 and log L0.
    d_log_s1 = spk
    if tallies.has_listener_data:
        l1 = np.exp(log_l1)
        d_log_s1 = d_log_s1 + lis - l1 * lis.sum(axis=-1, keepdims=True)
    s1 = np.exp(log_s1)
    d_scores = d_log_s1 - s1 * d_log_s1.sum(axis=-2, keepdims=True)
    d_log_l0 = cfg.w_informativity * d_scores
    l0 = np.exp(log_l0)
    d_meaning = d_log_l0 - l0 * d_log_l0.sum(axis=-1, keepdims=True)
    grad_phi = meaning_matrix_backward(d_meaning, phi, vocab)
    return loglik, grad_phi
