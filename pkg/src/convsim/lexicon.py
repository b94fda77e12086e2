"""Core vocabulary types and the compositional meaning function.

A lexicon is a real-valued (n_objects, n_primitives) matrix of
log-strengths. Utterances are either a single primitive or a
conjunction of two distinct primitives; conjunction meanings compose
via a product T-norm on the logistic scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from scipy.special import expit, logit

# Matrices are object-major: values[object, primitive].
LexiconMatrix = np.ndarray
HyperLexicon = np.ndarray

# Logistic outputs are clamped to [SIGMA_EPS, 1 - SIGMA_EPS] before the
# inverse mapping so conjunction meanings stay finite for any real input.
SIGMA_EPS = 1e-9

ObjectId = int


@dataclass(frozen=True, order=True)
class Utterance:
    """One or two primitive indices; two primitives form a conjunction."""

    primitives: tuple[int, ...]

    def __post_init__(self):
        p = self.primitives
        if len(p) not in (1, 2):
            raise ValueError(f"utterance must have 1 or 2 primitives, got {p!r}")
        if len(p) == 2 and p[0] == p[1]:
            raise ValueError(f"conjunction primitives must be distinct, got {p!r}")
        if any(i < 0 for i in p):
            raise ValueError(f"negative primitive index in {p!r}")
        # Conjunctions are unordered; store in canonical order.
        object.__setattr__(self, "primitives", tuple(sorted(p)))

    @classmethod
    def primitive(cls, index: int) -> "Utterance":
        return cls((index,))

    @classmethod
    def conjunction(cls, i: int, j: int) -> "Utterance":
        return cls((i, j))

    @property
    def is_conjunction(self) -> bool:
        return len(self.primitives) == 2

    def label(self) -> str:
        return "+".join(f"u{i + 1}" for i in self.primitives)

    def __str__(self) -> str:
        return self.label()


def utterance_cost(u: Utterance) -> float:
    """Production cost: the number of primitives in the utterance."""
    return float(len(u.primitives))


@dataclass(frozen=True)
class Vocabulary:
    """The utterance/object space of a scenario.

    The utterance set is every primitive plus, if enabled, every
    conjunction of two distinct primitives.
    """

    n_objects: int
    n_primitives: int
    include_conjunctions: bool = False

    def __post_init__(self):
        if self.n_objects < 2:
            raise ValueError("need at least 2 objects")
        if self.n_primitives < 1:
            raise ValueError("need at least 1 primitive")

    @cached_property
    def utterances(self) -> tuple[Utterance, ...]:
        prims = [Utterance.primitive(i) for i in range(self.n_primitives)]
        if not self.include_conjunctions:
            return tuple(prims)
        conjs = [Utterance.conjunction(i, j) for i, j in self.conjunction_pairs]
        return tuple(prims + conjs)

    @cached_property
    def conjunction_pairs(self) -> tuple[tuple[int, int], ...]:
        if not self.include_conjunctions:
            return ()
        return tuple(itertools.combinations(range(self.n_primitives), 2))

    @cached_property
    def costs(self) -> np.ndarray:
        return np.array([utterance_cost(u) for u in self.utterances])

    @cached_property
    def _conj_arrays(self):
        """Index and incidence arrays for vectorized conjunction math:
        (ii, jj, inc_i, inc_j) with inc_* of shape (n_pairs, n_primitives)."""
        pairs = self.conjunction_pairs
        ii = np.array([i for i, _ in pairs], dtype=int)
        jj = np.array([j for _, j in pairs], dtype=int)
        inc_i = np.zeros((len(pairs), self.n_primitives))
        inc_j = np.zeros((len(pairs), self.n_primitives))
        inc_i[np.arange(len(pairs)), ii] = 1.0
        inc_j[np.arange(len(pairs)), jj] = 1.0
        return ii, jj, inc_i, inc_j

    @cached_property
    def _utterance_rows(self) -> dict:
        return {u: row for row, u in enumerate(self.utterances)}

    def utterance_index(self, u: Utterance) -> int:
        try:
            return self._utterance_rows[u]
        except KeyError:
            raise ValueError(f"{u} is not in this vocabulary") from None

    def validate_lexicon(self, phi: LexiconMatrix) -> None:
        phi = np.asarray(phi)
        if phi.shape != (self.n_objects, self.n_primitives):
            raise ValueError(
                f"lexicon shape {phi.shape} != "
                f"({self.n_objects}, {self.n_primitives})"
            )
        if not np.all(np.isfinite(phi)):
            raise ValueError("lexicon has non-finite entries")


def meaning_value(phi: LexiconMatrix, u: Utterance, o: ObjectId) -> float:
    """Lexical meaning of utterance u applied to object o.

    Primitives read the matrix entry directly. A conjunction maps both
    entries through the logistic, multiplies (product T-norm), and maps
    back with the logit; the logistic outputs are clamped so the result
    is always finite.
    """
    phi = np.asarray(phi, dtype=float)
    if u.is_conjunction:
        i, j = u.primitives
        a = _clamped_sigma(phi[o, i])
        b = _clamped_sigma(phi[o, j])
        return float(logit(a * b))
    return float(phi[o, u.primitives[0]])


def _clamped_sigma(x) -> np.ndarray:
    return np.clip(expit(x), SIGMA_EPS, 1.0 - SIGMA_EPS)


def meaning_matrix(phi: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Meaning values for every utterance/object pair, batched.

    phi has shape (..., n_objects, n_primitives); the result has shape
    (..., n_utterances, n_objects). Rows follow vocab.utterances order.
    """
    phi = np.asarray(phi, dtype=float)
    prim = np.swapaxes(phi, -1, -2)  # (..., n_primitives, n_objects)
    if not vocab.include_conjunctions:
        return prim
    sig = _clamped_sigma(phi)
    ii, jj, _, _ = vocab._conj_arrays
    prod = sig[..., ii] * sig[..., jj]  # (..., n_objects, n_pairs)
    conj = logit(prod)
    return np.concatenate([prim, np.swapaxes(conj, -1, -2)], axis=-2)


def meaning_matrix_backward(
    grad_meaning: np.ndarray, phi: np.ndarray, vocab: Vocabulary
) -> np.ndarray:
    """Chain a gradient w.r.t. the meaning matrix back onto phi.

    grad_meaning has shape (..., n_utterances, n_objects); the result
    matches phi, shape (..., n_objects, n_primitives). Entries pushed
    past the clamp contribute zero gradient.
    """
    n_prim = vocab.n_primitives
    grad_phi = np.swapaxes(grad_meaning[..., :n_prim, :], -1, -2).copy()
    if not vocab.include_conjunctions:
        return grad_phi
    sig = expit(phi)
    live = (sig > SIGMA_EPS) & (sig < 1.0 - SIGMA_EPS)
    sig_c = np.clip(sig, SIGMA_EPS, 1.0 - SIGMA_EPS)
    ii, jj, inc_i, inc_j = vocab._conj_arrays
    # (..., n_objects, n_pairs); d logit(sa*sb)/da = (1 - sa)/(1 - sa*sb),
    # zero where an input sits past the clamp
    g = np.swapaxes(grad_meaning[..., n_prim:, :], -1, -2)
    g = g / (1.0 - sig_c[..., ii] * sig_c[..., jj])
    ci = g * ((1.0 - sig[..., ii]) * live[..., ii])
    cj = g * ((1.0 - sig[..., jj]) * live[..., jj])
    grad_phi += ci @ inc_i + cj @ inc_j
    return grad_phi


class Role(Enum):
    """Which action of the partner a record describes."""

    SPEAKER = "speaker"
    LISTENER = "listener"


@dataclass(frozen=True)
class Observation:
    trial_index: int
    utterance: Utterance
    object_id: ObjectId
    partner_role: Role


@dataclass
class ObservationLog:
    """Ordered utterance/object records from one partner."""

    partner_id: int
    records: list[Observation] = field(default_factory=list)

    def append(self, utterance: Utterance, object_id: ObjectId, partner_role: Role,
               trial_index: int | None = None) -> None:
        if trial_index is None:
            trial_index = self.records[-1].trial_index + 1 if self.records else 0
        if self.records and trial_index <= self.records[-1].trial_index:
            raise ValueError("trial indices must be strictly increasing")
        self.records.append(Observation(trial_index, utterance, object_id, partner_role))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)
