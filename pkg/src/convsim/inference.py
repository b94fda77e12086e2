"""Mean-field Gaussian variational inference over lexicons.

Latents are a community-level matrix theta and one partner-specific
matrix phi_k per interlocutor. Three pooling regimes share the same
machinery:

  PARTIAL   theta ~ N(prior_mean, theta_std) entrywise, and each
            phi_k ~ N(theta, drift_std); data from partner k scores phi_k.
  COMPLETE  a single phi shared by every partner, phi ~ N(prior_mean,
            pooled_std), all data pooled onto it; no theta.
  NONE      independent phi_k ~ N(prior_mean, pooled_std); no theta.

pooled_std is sqrt(theta_std^2 + drift_std^2) so the marginal prior over
any single phi is identical in all three regimes, which keeps first-trial
behavior comparable across them.

The guide is an independent Gaussian per matrix entry, parameterized by
(mean, log_std). The ELBO is estimated with reparameterized samples
z = mean + exp(log_std) * eps and maximized with Adam; gradients are
exact pathwise derivatives of the sampled objective, so under a fixed
seed they match finite differences of `elbo`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .lexicon import HyperLexicon, LexiconMatrix, ObjectId, Utterance, Vocabulary
from .rsa import (
    Distribution,
    LikelihoodTallies,
    RsaConfig,
    data_log_likelihood,
    log_pragmatic_listener,
    log_pragmatic_speaker,
    tally_observations,
)

LOG_2PI = math.log(2.0 * math.pi)

# phi key for the single shared block under COMPLETE pooling.
POOLED_PARTNER = -1


class PoolingRegime(Enum):
    PARTIAL = "partial"
    COMPLETE = "complete"
    NONE = "none"


class FitDivergenceError(RuntimeError):
    """Raised when optimization produces a non-finite parameter."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"non-finite guide parameter at step {step}{detail}")


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian hyper-prior: entrywise theta ~ N(mean, theta_prior_std)
    and phi ~ N(theta, phi_drift_std)."""

    theta_prior_mean: np.ndarray
    theta_prior_std: float = 1.0
    phi_drift_std: float = 1.0

    def __post_init__(self):
        if self.theta_prior_std <= 0 or self.phi_drift_std <= 0:
            raise ValueError("prior stds must be positive")
        object.__setattr__(
            self, "theta_prior_mean", np.asarray(self.theta_prior_mean, dtype=float)
        )

    @property
    def pooled_std(self) -> float:
        """Marginal prior std of a single phi entry with theta integrated out."""
        return math.hypot(self.theta_prior_std, self.phi_drift_std)

    @classmethod
    def standard(cls, vocab: Vocabulary) -> "PriorSpec":
        return cls(np.zeros((vocab.n_objects, vocab.n_primitives)))

    @classmethod
    def word_biased(cls, vocab: Vocabulary, bias: float = 0.3) -> "PriorSpec":
        """Weak prior splitting the primitives evenly across objects.

        The first half of the primitives lean toward object 0, the rest
        toward object 1, with +/-bias on the corresponding entries. Used
        by the speaker scenarios so production does not start at chance
        over the whole vocabulary.
        """
        if vocab.n_objects != 2 or vocab.n_primitives % 2 != 0:
            raise ValueError("word_biased prior needs 2 objects and an even "
                             "number of primitives")
        mean = np.full((vocab.n_objects, vocab.n_primitives), -bias)
        half = vocab.n_primitives // 2
        mean[0, :half] = bias
        mean[1, half:] = bias
        return cls(mean)


@dataclass(frozen=True)
class FitConfig:
    n_steps: int = 2000
    learning_rate: float = 0.05
    n_mc_elbo: int = 8
    n_mc_predictive: int = 2000
    seed: int = 0

    def __post_init__(self):
        if min(self.n_steps, self.n_mc_elbo, self.n_mc_predictive) < 1:
            raise ValueError("step and sample counts must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class GaussianBlock:
    """Variational (mean, log_std) per entry of one latent matrix."""

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.log_std = np.asarray(self.log_std, dtype=float)
        if self.mean.shape != self.log_std.shape:
            raise ValueError("mean and log_std shapes differ")

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def copy(self) -> "GaussianBlock":
        return GaussianBlock(self.mean.copy(), self.log_std.copy())


@dataclass
class GaussianGuide:
    """Factored Gaussian guide over theta and the per-partner phi blocks."""

    regime: PoolingRegime
    theta: GaussianBlock | None
    phi: dict[int, GaussianBlock] = field(default_factory=dict)

    def __post_init__(self):
        if self.regime is PoolingRegime.PARTIAL and self.theta is None:
            raise ValueError("PARTIAL guide requires a theta block")
        if self.regime is not PoolingRegime.PARTIAL and self.theta is not None:
            raise ValueError(f"{self.regime} guide must not carry theta")
        if self.regime is PoolingRegime.COMPLETE and set(self.phi) != {POOLED_PARTNER}:
            raise ValueError("COMPLETE guide holds exactly the shared phi block")

    @classmethod
    def initial(cls, regime: PoolingRegime, partner_ids, prior: PriorSpec) -> "GaussianGuide":
        """Prior-matched starting guide: each block at its prior mean with
        log_std equal to the log of that block's prior std."""
        mean = prior.theta_prior_mean

        def block(std: float) -> GaussianBlock:
            return GaussianBlock(mean.copy(), np.full(mean.shape, math.log(std)))

        if regime is PoolingRegime.PARTIAL:
            theta = block(prior.theta_prior_std)
            phi = {pid: block(prior.phi_drift_std) for pid in partner_ids}
            return cls(regime, theta, phi)
        if regime is PoolingRegime.COMPLETE:
            return cls(regime, None, {POOLED_PARTNER: block(prior.pooled_std)})
        return cls(regime, None, {pid: block(prior.pooled_std) for pid in partner_ids})

    @property
    def partner_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.phi))

    def copy(self) -> "GaussianGuide":
        theta = self.theta.copy() if self.theta is not None else None
        return GaussianGuide(self.regime, theta, {k: b.copy() for k, b in self.phi.items()})


def _regime_tallies(guide_regime: PoolingRegime, data, vocab: Vocabulary) -> LikelihoodTallies:
    tallies = tally_observations(data, vocab)
    if guide_regime is PoolingRegime.COMPLETE and tallies.n_partners > 0:
        return LikelihoodTallies(
            (POOLED_PARTNER,),
            tallies.speaker_counts.sum(axis=0, keepdims=True),
            tallies.listener_counts.sum(axis=0, keepdims=True),
        )
    return tallies


def _check_partner_match(guide: GaussianGuide, tallies: LikelihoodTallies) -> None:
    if guide.regime is PoolingRegime.COMPLETE:
        return
    if set(tallies.partner_ids) - set(guide.phi):
        missing = set(tallies.partner_ids) - set(guide.phi)
        raise ValueError(f"data for partners {sorted(missing)} but guide has no block")


class _Stacked:
    """Guide parameters as dense arrays in canonical order (theta first,
    then phi blocks sorted by partner id)."""

    def __init__(self, guide: GaussianGuide):
        self.regime = guide.regime
        self.partner_ids = guide.partner_ids
        self.theta_mean = None if guide.theta is None else guide.theta.mean.copy()
        self.theta_log_std = None if guide.theta is None else guide.theta.log_std.copy()
        if self.partner_ids:
            self.phi_mean = np.stack([guide.phi[k].mean for k in self.partner_ids])
            self.phi_log_std = np.stack([guide.phi[k].log_std for k in self.partner_ids])
        else:
            shape = (0,) + guide.theta.mean.shape if guide.theta is not None else (0, 0, 0)
            self.phi_mean = np.zeros(shape)
            self.phi_log_std = np.zeros(shape)

    def arrays(self) -> list[np.ndarray]:
        out = []
        if self.theta_mean is not None:
            out += [self.theta_mean, self.theta_log_std]
        if len(self.partner_ids):
            out += [self.phi_mean, self.phi_log_std]
        return out

    def to_guide(self) -> GaussianGuide:
        theta = None
        if self.theta_mean is not None:
            theta = GaussianBlock(self.theta_mean.copy(), self.theta_log_std.copy())
        phi = {
            k: GaussianBlock(self.phi_mean[i].copy(), self.phi_log_std[i].copy())
            for i, k in enumerate(self.partner_ids)
        }
        return GaussianGuide(self.regime, theta, phi)


def _elbo_core(params: _Stacked, tallies: LikelihoodTallies, prior: PriorSpec,
               cfg: RsaConfig, n_mc: int, rng: np.random.Generator,
               with_grad: bool):
    """Per-sample ELBO values and, optionally, pathwise parameter gradients.

    Samples are drawn in canonical parameter order so two calls with
    identically seeded generators share the same randomness regardless
    of parameter values (common random numbers).
    """
    vocab = cfg.vocabulary
    regime = params.regime
    n_partners = len(params.partner_ids)
    elbo = np.zeros(n_mc)

    if params.theta_mean is not None:
        eps_t = rng.standard_normal((n_mc,) + params.theta_mean.shape)
        theta = params.theta_mean + np.exp(params.theta_log_std) * eps_t
    if n_partners:
        eps_p = rng.standard_normal((n_mc,) + params.phi_mean.shape)
        phi = params.phi_mean + np.exp(params.phi_log_std) * eps_p

    d_theta = d_phi = None
    n_entries = prior.theta_prior_mean.size
    if regime is PoolingRegime.PARTIAL:
        ts, ds = prior.theta_prior_std, prior.phi_drift_std
        resid_t = (theta - prior.theta_prior_mean) / ts
        elbo += -0.5 * np.sum(resid_t**2, axis=(1, 2)) \
            - n_entries * (math.log(ts) + 0.5 * LOG_2PI)
        d_theta = -resid_t / ts
        if n_partners:
            resid_p = (phi - theta[:, None]) / ds
            elbo += -0.5 * np.sum(resid_p**2, axis=(1, 2, 3)) \
                - n_partners * n_entries * (math.log(ds) + 0.5 * LOG_2PI)
            d_phi = -resid_p / ds
            d_theta = d_theta - d_phi.sum(axis=1)
    else:
        ps = prior.pooled_std
        if n_partners:
            resid_p = (phi - prior.theta_prior_mean) / ps
            elbo += -0.5 * np.sum(resid_p**2, axis=(1, 2, 3)) \
                - n_partners * n_entries * (math.log(ps) + 0.5 * LOG_2PI)
            d_phi = -resid_p / ps

    if n_partners and (tallies.has_speaker_data or tallies.has_listener_data):
        if with_grad:
            loglik, grad_lik = data_log_likelihood(phi, tallies, vocab, cfg, with_grad=True)
            d_phi = d_phi + grad_lik
        else:
            loglik = data_log_likelihood(phi, tallies, vocab, cfg)
        elbo += loglik

    # Sampled entropy: -log q(z) = 0.5*eps^2 + log_std + 0.5*log(2*pi)
    # per entry. Its pathwise gradient is 0 w.r.t. means and +1 w.r.t.
    # each log_std.
    if params.theta_mean is not None:
        elbo += np.sum(0.5 * eps_t**2 + params.theta_log_std + 0.5 * LOG_2PI, axis=(1, 2))
    if n_partners:
        elbo += np.sum(0.5 * eps_p**2 + params.phi_log_std + 0.5 * LOG_2PI, axis=(1, 2, 3))

    if not with_grad:
        return elbo, None

    grads = {}
    if params.theta_mean is not None:
        grads["theta_mean"] = d_theta.mean(axis=0)
        grads["theta_log_std"] = (d_theta * eps_t).mean(axis=0) * np.exp(params.theta_log_std) + 1.0
    if n_partners:
        grads["phi_mean"] = d_phi.mean(axis=0)
        grads["phi_log_std"] = (d_phi * eps_p).mean(axis=0) * np.exp(params.phi_log_std) + 1.0
    return elbo, grads


def elbo_samples(guide: GaussianGuide, data, prior: PriorSpec, cfg: RsaConfig,
                 n_mc: int, seed: int) -> np.ndarray:
    """Per-sample Monte Carlo ELBO terms (useful for standard errors)."""
    tallies = _regime_tallies(guide.regime, data, cfg.vocabulary)
    _check_partner_match(guide, tallies)
    params = _Stacked(guide)
    rng = np.random.default_rng(seed)
    values, _ = _elbo_core(params, tallies, prior, cfg, n_mc, rng, with_grad=False)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise FloatingPointError(f"non-finite ELBO term at sample {bad}: {values[bad]}")
    return values


def elbo(guide: GaussianGuide, data, prior: PriorSpec, cfg: RsaConfig,
         n_mc: int, seed: int) -> float:
    """Reparameterized Monte Carlo estimate of the evidence lower bound."""
    return float(elbo_samples(guide, data, prior, cfg, n_mc, seed).mean())


def elbo_gradient(guide: GaussianGuide, data, prior: PriorSpec, cfg: RsaConfig,
                  n_mc: int, seed: int) -> GaussianGuide:
    """Gradient of `elbo` w.r.t. every guide parameter, same sampling path.

    Returned as a guide-shaped container: block means hold d/d mean,
    block log_stds hold d/d log_std.
    """
    tallies = _regime_tallies(guide.regime, data, cfg.vocabulary)
    _check_partner_match(guide, tallies)
    params = _Stacked(guide)
    rng = np.random.default_rng(seed)
    values, grads = _elbo_core(params, tallies, prior, cfg, n_mc, rng, with_grad=True)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise FloatingPointError(f"non-finite ELBO term at sample {bad}: {values[bad]}")
    theta = None
    if guide.theta is not None:
        theta = GaussianBlock(grads["theta_mean"], grads["theta_log_std"])
    phi = {}
    for i, k in enumerate(params.partner_ids):
        phi[k] = GaussianBlock(grads["phi_mean"][i], grads["phi_log_std"][i])
    return GaussianGuide(guide.regime, theta, phi)


def fit(guide: GaussianGuide, data, prior: PriorSpec, cfg: RsaConfig,
        fit_cfg: FitConfig, warm_start: bool = False) -> GaussianGuide:
    """Maximize the ELBO with Adam and return the refitted guide.

    By default the guide restarts from the prior-matched initialization
    (fresh fit on the cumulative data); pass warm_start=True to continue
    from the supplied parameters. Deterministic given (seed, configs,
    data); record order within a partner does not matter.
    """
    tallies = _regime_tallies(guide.regime, data, cfg.vocabulary)
    if warm_start:
        _check_partner_match(guide, tallies)
        guide = guide.copy()
    else:
        ids = tallies.partner_ids if guide.regime is not PoolingRegime.COMPLETE \
            else guide.partner_ids
        guide = GaussianGuide.initial(guide.regime, ids, prior)
    params = _Stacked(guide)
    arrays = params.arrays()
    if not arrays:
        return params.to_guide()

    rng = np.random.default_rng(fit_cfg.seed)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    m = [np.zeros_like(a) for a in arrays]
    v = [np.zeros_like(a) for a in arrays]
    # Tail averaging: the returned parameters are the mean of the last
    # quarter of iterates, which strips most of the stationary noise of
    # constant-rate Adam without moving the optimum.
    tail_start = fit_cfg.n_steps - max(1, fit_cfg.n_steps // 4) + 1
    tail = [np.zeros_like(a) for a in arrays]
    tail_n = 0
    for step in range(1, fit_cfg.n_steps + 1):
        values, grads = _elbo_core(params, tallies, prior, cfg, fit_cfg.n_mc_elbo,
                                   rng, with_grad=True)
        if not np.isfinite(values).all():
            raise FitDivergenceError(step, " (non-finite ELBO term)")
        glist = []
        if params.theta_mean is not None:
            glist += [grads["theta_mean"], grads["theta_log_std"]]
        if len(params.partner_ids):
            glist += [grads["phi_mean"], grads["phi_log_std"]]
        for a, g, mi, vi in zip(arrays, glist, m, v):
            mi *= beta1
            mi += (1 - beta1) * g
            vi *= beta2
            vi += (1 - beta2) * g * g
            m_hat = mi / (1 - beta1**step)
            v_hat = vi / (1 - beta2**step)
            a += fit_cfg.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
        if step >= tail_start:
            for t, a in zip(tail, arrays):
                t += a
            tail_n += 1
    for t, a in zip(tail, arrays):
        a[:] = t / tail_n
    if not all(np.isfinite(a).all() for a in arrays):
        raise FitDivergenceError(fit_cfg.n_steps)
    return params.to_guide()


def sample_lexicons(guide: GaussianGuide, prior: PriorSpec, partner_id: int,
                    n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw lexicon matrices for a partner from the current beliefs.

    Known partners use their fitted phi block (the shared block under
    COMPLETE). A novel partner is drawn hierarchically under PARTIAL
    (theta sample plus drift noise) and from the marginal prior under
    NONE.
    """
    regime = guide.regime
    if regime is PoolingRegime.COMPLETE:
        block = guide.phi[POOLED_PARTNER]
    else:
        block = guide.phi.get(partner_id)
    if block is not None:
        shape = (n_samples,) + block.mean.shape
        return block.mean + block.std * rng.standard_normal(shape)
    if regime is PoolingRegime.PARTIAL:
        theta = guide.theta
        shape = (n_samples,) + theta.mean.shape
        theta_s = theta.mean + theta.std * rng.standard_normal(shape)
        return theta_s + prior.phi_drift_std * rng.standard_normal(shape)
    shape = (n_samples,) + prior.theta_prior_mean.shape
    return prior.theta_prior_mean + prior.pooled_std * rng.standard_normal(shape)


def predictive_listener(guide: GaussianGuide, u: Utterance, prior: PriorSpec,
                        cfg: RsaConfig, partner_id: int, n_samples: int,
                        seed: int) -> Distribution:
    """Posterior predictive object choice: average S1(u | o, phi) over
    lexicon samples, then normalize over objects."""
    vocab = cfg.vocabulary
    rng = np.random.default_rng(seed)
    phi = sample_lexicons(guide, prior, partner_id, n_samples, rng)
    row = vocab.utterance_index(u)
    s1 = np.exp(log_pragmatic_speaker(phi, vocab, cfg))[:, row, :]  # (n, n_objects)
    weights = s1.mean(axis=0)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise FloatingPointError("predictive listener has no mass")
    return Distribution(tuple(range(vocab.n_objects)), weights / total)


def predictive_speaker(guide: GaussianGuide, o: ObjectId, prior: PriorSpec,
                       cfg: RsaConfig, partner_id: int, n_samples: int,
                       seed: int) -> Distribution:
    """Posterior predictive utterance choice.

    The informativity expectation sits inside the exponent: scores are
    w_I * E[log L1(o | u, phi)] - w_C * cost(u), softmaxed over the
    utterance set.
    """
    vocab = cfg.vocabulary
    rng = np.random.default_rng(seed)
    phi = sample_lexicons(guide, prior, partner_id, n_samples, rng)
    log_l1 = log_pragmatic_listener(phi, vocab, cfg)[:, :, o]  # (n, n_utterances)
    scores = cfg.w_informativity * log_l1.mean(axis=0) - cfg.w_cost * vocab.costs
    if not np.all(np.isfinite(scores)):
        raise FloatingPointError("predictive speaker scores are not finite")
    probs = np.exp(scores - logsumexp(scores))
    return Distribution(vocab.utterances, probs / probs.sum())


def log_joint(theta: HyperLexicon | None, phi_all: list[LexiconMatrix], data,
              prior: PriorSpec, cfg: RsaConfig, regime: PoolingRegime) -> float:
    """Unnormalized log posterior density of concrete latents.

    phi_all carries one lexicon per observed partner in ascending
    partner-id order (PARTIAL and NONE) or the single shared lexicon
    (COMPLETE, where all partners' data pool onto it).
    """
    vocab = cfg.vocabulary
    tallies = _regime_tallies(regime, data, vocab)
    n_expected = 1 if regime is PoolingRegime.COMPLETE else tallies.n_partners
    if len(phi_all) != n_expected:
        raise ValueError(f"expected {n_expected} lexicons, got {len(phi_all)}")
    if (theta is not None) != (regime is PoolingRegime.PARTIAL):
        raise ValueError("theta must be supplied exactly for PARTIAL")

    total = 0.0
    if regime is PoolingRegime.PARTIAL:
        theta = np.asarray(theta, dtype=float)
        total += _gaussian_logpdf_sum(theta, prior.theta_prior_mean, prior.theta_prior_std)
        for phi_k in phi_all:
            total += _gaussian_logpdf_sum(np.asarray(phi_k, float), theta, prior.phi_drift_std)
    else:
        for phi_k in phi_all:
            total += _gaussian_logpdf_sum(
                np.asarray(phi_k, float), prior.theta_prior_mean, prior.pooled_std
            )
    if tallies.n_partners:
        phi = np.stack([np.asarray(p, dtype=float) for p in phi_all])
        total += float(data_log_likelihood(phi, tallies, vocab, cfg))
    return total


def _gaussian_logpdf_sum(x: np.ndarray, mean: np.ndarray, std: float) -> float:
    resid = (x - mean) / std
    return float(-0.5 * np.sum(resid**2) - x.size * (math.log(std) + 0.5 * LOG_2PI))
