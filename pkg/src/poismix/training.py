"""Fitting CMPs: EM, SGD and the Hybrid closed-form/SGD alternation.

All three trainers make exactly one pass over the data per epoch. Gradient
steps use Adam in the ascent direction on the mean log-likelihood of a
minibatch, and parameters are clamped to ``[-CLAMP, CLAMP]`` after every
update.
"""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cmp import (
    FEATURE_DIM,
    CmpParams,
    SpikeDataset,
    batch_gradients,
    batch_log_density,
    batch_responsibilities,
    conditioned_stats,
    encode_stimulus,
    surrogate_terms,
)
from .expfam import log_factorial
from .errors import ConfigError, FitFailureError, RestartAbortedError

logger = logging.getLogger(__name__)

CLAMP = 30.0
ALGORITHMS = ("em", "sgd", "hybrid")
MIN_RATE = 1e-3
CLOSED_FORM_EPS = 1e-8


class TrainingWarning(UserWarning):
    """Recoverable numerical trouble during training (clamped values, empty components)."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by every trainer.

    ``hybrid_first_phase`` selects which phase of the Hybrid algorithm runs
    on even epochs, and ``em_passes`` the number of minibatch passes in each
    EM maximisation step. ``closed_form_weights="preserve"`` turns on
    ``preserve_weights`` in :func:`hybrid_closed_form`. ``n_jobs > 1`` runs
    restarts in worker processes; the result is identical to sequential
    execution.
    """

    algorithm: str = "hybrid"
    epochs: int = 100
    minibatch_size: int = 50
    learning_rate: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    restarts: int = 10
    rng_seed: int = 0
    reset_adam_each_epoch: bool = True
    hybrid_first_phase: str = "sgd"
    closed_form_weights: str = "preserve"
    closed_form_halvings: int = 12
    em_passes: int = 1
    init_scale: float = 0.1
    n_jobs: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.hybrid_first_phase not in ("sgd", "closed_form"):
            raise ConfigError("hybrid_first_phase must be 'sgd' or 'closed_form'")
        if self.closed_form_weights not in ("preserve", "fixed"):
            raise ConfigError("closed_form_weights must be 'preserve' or 'fixed'")
        for name in ("epochs", "minibatch_size", "restarts", "em_passes", "n_jobs"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("learning_rate", "adam_epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        halvings = self.closed_form_halvings
        if int(halvings) != halvings or halvings < 0:
            raise ConfigError("closed_form_halvings must be a nonnegative integer")
        if self.init_scale < 0:
            raise ConfigError("init_scale must be nonnegative")

    def check_dataset(self, d: SpikeDataset):
        if self.minibatch_size > len(d):
            raise ConfigError(
                f"minibatch_size {self.minibatch_size} exceeds dataset size {len(d)}"
            )


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0

    @classmethod
    def fresh(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


@dataclass
class FitReport:
    nll_trace: np.ndarray
    final_params: CmpParams
    restart_index: int
    wall_time: float
    algorithm: str = "hybrid"
    restart_nlls: list = field(default_factory=list)

    @property
    def final_nll(self) -> float:
        return float(self.nll_trace[-1])


def adam_update(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step *up* the gradient.

    ``params`` and ``grads`` are matching sequences of arrays. Returns the new
    arrays (clamped to ``[-CLAMP, CLAMP]``) and the advanced state.

    Raises
    ------
    RestartAbortedError
        If any gradient entry is non-finite.
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise RestartAbortedError("non-finite gradient")
    t = state.step_count + 1
    m = [beta1 * mi + (1 - beta1) * g for mi, g in zip(state.first_moment, grads)]
    v = [beta2 * vi + (1 - beta2) * g * g for vi, g in zip(state.second_moment, grads)]
    bc1 = 1 - beta1**t
    bc2 = 1 - beta2**t
    new = [
        np.clip(x + lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps), -CLAMP, CLAMP)
        for x, mi, vi in zip(params, m, v)
    ]
    return new, AdamState(m, v, t)


def init_params(n_neurons, n_latent, d: SpikeDataset, rng, scale=0.1) -> CmpParams:
    """Starting point for a descent with ``n_latent + 1`` components.

    The count bias matches each neuron's grand-mean rate (floored at
    ``MIN_RATE``); interactions and link weights are small Gaussian noise.
    """
    if n_neurons != d.n_neurons:
        raise ConfigError(f"dataset has {d.n_neurons} neurons, expected {n_neurons}")
    rate = d.counts.mean(axis=0)
    if np.any(rate < MIN_RATE):
        warnings.warn(
            f"neurons {np.flatnonzero(rate < MIN_RATE).tolist()} are (nearly) silent; "
            f"baseline rate clamped to {MIN_RATE}",
            TrainingWarning,
            stacklevel=2,
        )
    return CmpParams.from_arrays(
        bias=np.log(np.maximum(rate, MIN_RATE)),
        cat_bias=np.zeros(n_latent),
        interaction=rng.normal(0.0, scale, size=(n_latent, n_neurons)),
        link=rng.normal(0.0, scale, size=(n_neurons, FEATURE_DIM)),
    )


def mean_nll(d: SpikeDataset, p: CmpParams, features=None, log_fact=None) -> float:
    features = encode_stimulus(d.stimuli) if features is None else features
    return -float(np.mean(batch_log_density(p, d.counts, features, log_fact=log_fact)))


def _minibatches(n_trials, size, rng):
    order = rng.permutation(n_trials)
    return [order[i : i + size] for i in range(0, n_trials, size)]


def _adam_pass(d, p, cfg, state, rng, features, resp=None):
    arrays = list(p.arrays())
    if state is None or cfg.reset_adam_each_epoch:
        state = AdamState.fresh(arrays)
    for batch in _minibatches(len(d), cfg.minibatch_size, rng):
        grads = batch_gradients(
            p, d.counts[batch], features[batch], None if resp is None else resp[batch]
        )
        arrays, state = adam_update(
            arrays, grads, state, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon
        )
        p = CmpParams.from_arrays(*arrays)
    return p, state


def sgd_epoch(d: SpikeDataset, p: CmpParams, cfg: TrainConfig, state, rng, features=None):
    """One shuffled pass of minibatched Adam ascent on the conditional log-likelihood."""
    features = encode_stimulus(d.stimuli) if features is None else features
    return _adam_pass(d, p, cfg, state, rng, features)


def surrogate(d: SpikeDataset, p: CmpParams, resp, features=None) -> float:
    """Mean EM maximisation objective over the dataset for fixed responsibilities."""
    features = encode_stimulus(d.stimuli) if features is None else features
    return float(np.mean(surrogate_terms(p, d.counts, features, resp)))


def em_epoch(d: SpikeDataset, p: CmpParams, cfg: TrainConfig, state, rng, features=None):
    """Closed-form expectation step, then ``cfg.em_passes`` Adam passes on the surrogate."""
    features = encode_stimulus(d.stimuli) if features is None else features
    resp = batch_responsibilities(p, d.counts)
    for _ in range(cfg.em_passes):
        p, state = _adam_pass(d, p, cfg, state, rng, features, resp)
    return p, state


def closed_form_targets(d: SpikeDataset, p: CmpParams, features=None):
    """Numerators and denominators of the per-(component, neuron) closed-form update.

    Returns ``(num, den)`` of shape ``(m_C + 1, m_N)``: responsibility-weighted
    counts and responsibility-weighted stimulus gains ``exp(link @ s(z))``.
    """
    features = encode_stimulus(d.stimuli) if features is None else features
    resp = batch_responsibilities(p, d.counts)
    gains = np.exp(features @ p.link.T)
    return resp.T @ d.counts, resp.T @ gains


def _mean_weight_logits(p: CmpParams, features):
    psi = conditioned_stats(p, features).log_partition
    return (psi[:, 1:] - psi[:, :1]).mean(axis=0) + p.harmonium.cat_bias


def _closed_form_proposal(d, p, features, preserve_weights):
    num, den = closed_form_targets(d, p, features)
    bad = (num <= 0) | (den <= 0)
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} component/neuron pairs had empty closed-form targets; "
            f"clamped to {CLOSED_FORM_EPS}",
            TrainingWarning,
            stacklevel=3,
        )
        num = np.maximum(num, CLOSED_FORM_EPS)
        den = np.maximum(den, CLOSED_FORM_EPS)
    theta = np.clip(np.log(num) - np.log(den), -CLAMP, CLAMP)
    new = CmpParams.from_arrays(
        bias=theta[0],
        cat_bias=p.harmonium.cat_bias,
        interaction=np.clip(theta[1:] - theta[0], -CLAMP, CLAMP),
        link=p.link,
    )
    if not preserve_weights or p.n_components == 1:
        return new
    shift = _mean_weight_logits(p, features) - _mean_weight_logits(new, features)
    h = new.harmonium
    return CmpParams.from_arrays(
        h.bias, np.clip(h.cat_bias + shift, -CLAMP, CLAMP), h.interaction, new.link
    )


def hybrid_closed_form(
    d: SpikeDataset, p: CmpParams, features=None, preserve_weights=True, max_halvings=12
) -> CmpParams:
    """Closed-form maximisation of the count bias and interaction matrix.

    Every component/neuron pair solves ``max_t t*A - exp(t)`` with ``A`` the
    ratio of :func:`closed_form_targets`. The link is kept. With
    ``preserve_weights`` the category bias is shifted so the mixture-weight
    logits, averaged over the trials' stimuli, are unchanged by the new
    component rates (exactly unchanged when the link is zero); otherwise the
    category bias is kept as is. Empty numerators are floored at
    ``CLOSED_FORM_EPS`` with a warning.

    The closed form maximises the count part of the EM objective only; the
    mixture weights also move with the rates, so the full step can lower the
    likelihood when some neurons are strongly tuned. Unless
    ``max_halvings`` is 0, the step is therefore halved (towards ``p``) until
    the conditional log-likelihood does not decrease, and ``p`` itself is
    returned if ``max_halvings`` halvings do not suffice.
    """
    features = encode_stimulus(d.stimuli) if features is None else features
    proposal = _closed_form_proposal(d, p, features, preserve_weights)
    if max_halvings == 0:
        return proposal
    base = mean_nll(d, p, features)
    for _ in range(max_halvings + 1):
        if mean_nll(d, proposal, features) <= base:
            return proposal
        proposal = CmpParams.from_arrays(
            *[(a + b) / 2 for a, b in zip(p.arrays(), proposal.arrays())]
        )
    return p


def hybrid_epoch(d, p, cfg: TrainConfig, state, epoch_index, rng, features=None):
    """Alternate SGD and the closed-form update across epochs."""
    sgd_now = (epoch_index % 2 == 0) == (cfg.hybrid_first_phase == "sgd")
    if sgd_now:
        return sgd_epoch(d, p, cfg, state, rng, features)
    preserve = cfg.closed_form_weights == "preserve"
    return (
        hybrid_closed_form(d, p, features, preserve, cfg.closed_form_halvings),
        state,
    )


def descend(d: SpikeDataset, n_components, cfg: TrainConfig, seed, start=None) -> FitReport:
    """A single descent from a seeded (or given) starting point."""
    cfg.check_dataset(d)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    features = encode_stimulus(d.stimuli)
    p = start if start is not None else init_params(
        d.n_neurons, n_components - 1, d, rng, cfg.init_scale
    )
    log_fact = np.sum(log_factorial(d.counts), axis=-1)
    trace = [mean_nll(d, p, features, log_fact)]
    state = None
    for epoch in range(cfg.epochs):
        if cfg.algorithm == "sgd":
            p, state = sgd_epoch(d, p, cfg, state, rng, features)
        elif cfg.algorithm == "em":
            p, state = em_epoch(d, p, cfg, state, rng, features)
        else:
            p, state = hybrid_epoch(d, p, cfg, state, epoch, rng, features)
        nll = mean_nll(d, p, features, log_fact)
        if not np.isfinite(nll):
            raise RestartAbortedError(f"non-finite NLL at epoch {epoch + 1}")
        trace.append(nll)
    return FitReport(
        nll_trace=np.array(trace),
        final_params=p,
        restart_index=-1,
        wall_time=time.perf_counter() - t0,
        algorithm=cfg.algorithm,
    )


def restart_seed(rng_seed, restart):
    """Seed of restart ``restart``; independent of how restarts are scheduled."""
    return np.random.SeedSequence([int(rng_seed), int(restart)])


def _run_restart(args):
    d, n_components, cfg, r = args
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TrainingWarning)
            return descend(d, n_components, cfg, restart_seed(cfg.rng_seed, r))
    except (RestartAbortedError, FloatingPointError) as exc:
        logger.warning("restart %d aborted: %s", r, exc)
        return None


def fit(d: SpikeDataset, n_components, cfg: TrainConfig) -> FitReport:
    """Best of ``cfg.restarts`` independent descents, ranked by final training NLL.

    Ties go to the lowest restart index, so parallel and sequential runs
    select the same winner.

    Raises
    ------
    FitFailureError
        If every restart was aborted.
    """
    if n_components < 1:
        raise ConfigError("need at least one mixture component")
    cfg.check_dataset(d)
    t0 = time.perf_counter()
    jobs = [(d, n_components, cfg, r) for r in range(cfg.restarts)]
    if cfg.n_jobs > 1 and cfg.restarts > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            results = list(pool.map(_run_restart, jobs))
    else:
        results = [_run_restart(job) for job in jobs]
    finals = [np.inf if r is None else r.final_nll for r in results]
    if all(r is None for r in results):
        raise FitFailureError(f"all {cfg.restarts} restarts aborted")
    best = int(np.argmin(finals))
    report = results[best]
    report.restart_index = best
    report.restart_nlls = [float(f) for f in finals]
    report.wall_time = time.perf_counter() - t0
    return report
