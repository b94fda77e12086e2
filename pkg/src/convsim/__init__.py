"""Reference-game convention simulator.

Agents with uncertain lexicons communicate through pragmatic
(speaker/listener) reasoning, update their beliefs with mean-field
variational inference under partial-, complete-, or no-pooling of
partner-specific knowledge, and are composed into round-robin networks.
"""

__version__ = "0.1.0"

from .lexicon import (
    HyperLexicon,
    LexiconMatrix,
    ObjectId,
    Observation,
    ObservationLog,
    Role,
    Utterance,
    Vocabulary,
    meaning_value,
    utterance_cost,
)
from .rsa import (
    Distribution,
    RsaConfig,
    datum_log_likelihood,
    literal_listener,
    pragmatic_listener,
    pragmatic_speaker,
)
from .inference import (
    FitConfig,
    FitDivergenceError,
    GaussianBlock,
    GaussianGuide,
    PoolingRegime,
    PriorSpec,
    elbo,
    elbo_gradient,
    elbo_samples,
    fit,
    log_joint,
    predictive_listener,
    predictive_speaker,
)
from .agents import Agent, ScriptedAgent, ScriptedBehavior
from .simulations import (
    AlignmentRecord,
    Schedule,
    SummaryRow,
    TrialRecord,
    round_robin,
    run_sim1,
    run_sim2,
    run_sim3,
    summarize,
    summarize_alignment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
