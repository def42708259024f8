"""Conditional mixtures of independent Poissons (CMPs).

A CMP is a harmonium whose count bias is shifted by a stimulus-dependent term
``link @ encode_stimulus(z)``. Everything the model says about a stimulus
``z`` follows from the harmonium conditioned on ``z``.

Functions here accept scalar or array stimuli. The batched helpers
(:func:`conditioned_stats`, :func:`batch_gradients`) are what the trainers use;
the per-sample functions are thin wrappers around them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import softmax

from . import expfam
from .errors import InvalidParameterError
from .mixture import HarmoniumParams, _as_finite, marginal_log_density, posterior


class CorrelationWarning(UserWarning):
    """A correlation entry was undefined (zero variance) and reported as 0."""


def reduce_stimulus(z):
    """Map angles onto the half-circle ``[0, pi)``."""
    return np.mod(np.asarray(z, dtype=float), np.pi)


def encode_stimulus(z):
    """Stimulus features ``(cos 2z, sin 2z)``; shape ``(..., 2)``.

    This is the only place the stimulus representation is defined; a
    different feature map only has to change this function and the width of
    ``CmpParams.link``.
    """
    z = np.asarray(z, dtype=float)
    return np.stack([np.cos(2 * z), np.sin(2 * z)], axis=-1)


FEATURE_DIM = 2


@dataclass(frozen=True)
class CmpParams:
    harmonium: HarmoniumParams
    link: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "link", _as_finite(self.link, "link", 2))
        if self.link.shape != (self.harmonium.n_neurons, FEATURE_DIM):
            raise InvalidParameterError(
                f"link must have shape ({self.harmonium.n_neurons}, {FEATURE_DIM}), "
                f"got {self.link.shape}"
            )

    @property
    def n_neurons(self) -> int:
        return self.harmonium.n_neurons

    @property
    def n_components(self) -> int:
        return self.harmonium.n_components

    def arrays(self):
        h = self.harmonium
        return (h.bias, h.cat_bias, h.interaction, self.link)

    @classmethod
    def from_arrays(cls, bias, cat_bias, interaction, link):
        return cls(HarmoniumParams(bias, cat_bias, interaction), link)


class CmpGradient(NamedTuple):
    bias: np.ndarray
    cat_bias: np.ndarray
    interaction: np.ndarray
    link: np.ndarray


@dataclass(frozen=True)
class SpikeDataset:
    """Trials of spike counts ``(m_S, m_N)`` paired with stimulus angles ``(m_S,)``."""

    counts: np.ndarray
    stimuli: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.ndim != 2 or counts.shape[0] == 0:
            raise InvalidParameterError("counts must be a nonempty (trials, neurons) array")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise InvalidParameterError("counts must be integers")
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise InvalidParameterError("counts must be nonnegative")
        stimuli = reduce_stimulus(self.stimuli).reshape(-1)
        if stimuli.shape[0] != counts.shape[0]:
            raise InvalidParameterError("need exactly one stimulus per trial")
        if not np.all(np.isfinite(stimuli)):
            raise InvalidParameterError("stimuli must be finite")
        counts.setflags(write=False)
        stimuli.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "stimuli", stimuli)

    def __len__(self):
        return self.counts.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.counts.shape[1]

    def subset(self, index) -> "SpikeDataset":
        return SpikeDataset(self.counts[index], self.stimuli[index])

    def distinct_stimuli(self):
        return np.unique(self.stimuli)


def _logsumexp(a):
    top = np.max(a, axis=-1, keepdims=True)
    return (top + np.log(np.sum(np.exp(a - top), axis=-1, keepdims=True)))[..., 0]


class ConditionedStats(NamedTuple):
    """Per-stimulus quantities of the conditioned mixture.

    Component ``j`` fires at ``gain * component_gain[j]``, so the rate tensor
    of shape ``(B, K, m_N)`` is only built on request (:attr:`rates`).
    """

    bias: np.ndarray
    gain: np.ndarray
    component_gain: np.ndarray
    log_partition: np.ndarray
    log_weights: np.ndarray
    weights: np.ndarray
    mean: np.ndarray

    @property
    def rates(self):
        return self.gain[:, None, :] * self.component_gain

    @property
    def naturals(self):
        return self.bias[:, None, :] + np.log(self.component_gain)


def conditioned_stats(p: CmpParams, features) -> ConditionedStats:
    h = p.harmonium
    bias = h.bias + np.atleast_2d(features) @ p.link.T
    gain = np.exp(bias)
    component_gain = np.exp(h.full_interaction())
    psi = gain @ component_gain.T
    logits = psi - psi[:, :1] + h.full_cat_bias()
    log_weights = logits - _logsumexp(logits)[:, None]
    weights = np.exp(log_weights)
    mean = gain * (weights @ component_gain)
    return ConditionedStats(bias, gain, component_gain, psi, log_weights, weights, mean)


def batch_log_density(p: CmpParams, counts, features, stats=None, log_fact=None):
    """Conditional log-density of each trial, shape ``(B,)``.

    ``log_fact`` may carry the precomputed ``sum_k log(n_k!)`` of each trial.
    """
    stats = conditioned_stats(p, features) if stats is None else stats
    counts = np.atleast_2d(counts)
    if log_fact is None:
        log_fact = np.sum(expfam.log_factorial(counts), axis=-1)
    comp = (
        np.sum(counts * stats.bias, axis=-1)[:, None]
        + counts @ p.harmonium.full_interaction().T
        - stats.log_partition
        + stats.log_weights
    )
    return _logsumexp(comp) - log_fact


def batch_responsibilities(p: CmpParams, counts):
    """Posterior over all components; independent of the stimulus."""
    h = p.harmonium
    return softmax(h.full_cat_bias() + np.atleast_2d(counts) @ h.full_interaction().T, axis=-1)


def batch_gradients(p: CmpParams, counts, features, resp=None) -> CmpGradient:
    """Mean log-likelihood gradient over a batch.

    With ``resp`` given, the posterior is replaced by those (frozen)
    responsibilities, which yields the gradient of the EM surrogate instead.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    features = np.atleast_2d(features)
    stats = conditioned_stats(p, features)
    if resp is None:
        resp = batch_responsibilities(p, counts)
    size = len(counts)
    err = counts - stats.mean
    cross = (stats.weights[:, 1:].T @ stats.gain) * stats.component_gain[1:]
    return CmpGradient(
        bias=err.mean(axis=0),
        cat_bias=(resp[:, 1:] - stats.weights[:, 1:]).mean(axis=0),
        interaction=(resp[:, 1:].T @ counts - cross) / size,
        link=err.T @ features / size,
    )


def surrogate_terms(p: CmpParams, counts, features, resp):
    """Per-trial value of the EM maximisation objective for frozen responsibilities."""
    h = p.harmonium
    counts = np.atleast_2d(counts)
    stats = conditioned_stats(p, features)
    logits = stats.log_partition - stats.log_partition[:, :1] + h.full_cat_bias()
    return (
        np.sum(counts * stats.bias, axis=-1)
        + resp @ h.full_cat_bias()
        + np.sum((resp @ h.full_interaction()) * counts, axis=-1)
        - stats.log_partition[:, 0]
        - _logsumexp(logits)
    )


def conditional_bias(p: CmpParams, z):
    """Count bias of the harmonium conditioned on stimulus ``z``."""
    return p.harmonium.bias + encode_stimulus(reduce_stimulus(z)) @ p.link.T


def conditioned_harmonium(p: CmpParams, z) -> HarmoniumParams:
    h = p.harmonium
    return HarmoniumParams(conditional_bias(p, float(z)), h.cat_bias, h.interaction)


def conditional_log_density(n, z, p: CmpParams):
    return marginal_log_density(n, conditioned_harmonium(p, z))


def conditional_log_likelihood(d: SpikeDataset, p: CmpParams) -> float:
    """Mean (per-trial) conditional log-likelihood of a dataset."""
    return float(np.mean(batch_log_density(p, d.counts, encode_stimulus(d.stimuli))))


def responsibilities(n, z, p: CmpParams):
    """Posterior over the ``m_C + 1`` components given counts ``n`` at stimulus ``z``."""
    return posterior(n, conditioned_harmonium(p, z))


def weight_curve(p: CmpParams, grid):
    """Mixture weights of the conditioned model, one row per stimulus in ``grid``."""
    grid = np.atleast_1d(reduce_stimulus(grid))
    if grid.size == 0:
        raise InvalidParameterError("stimulus grid must be nonempty")
    return conditioned_stats(p, encode_stimulus(grid)).weights


def tuning_curves(p: CmpParams, grid):
    grid = np.atleast_1d(reduce_stimulus(grid))
    if grid.size == 0:
        raise InvalidParameterError("stimulus grid must be nonempty")
    return conditioned_stats(p, encode_stimulus(grid)).mean


def covariance_to_correlation(cov):
    """Normalise a covariance matrix; zero-variance entries become 0 with a warning."""
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    silent = sd <= 0
    if np.any(silent):
        warnings.warn(
            f"zero variance for neurons {np.flatnonzero(silent).tolist()}; "
            "their correlations are reported as 0",
            CorrelationWarning,
            stacklevel=3,
        )
    safe = np.where(silent, 1.0, sd)
    corr = cov / np.outer(safe, safe)
    corr[silent, :] = 0.0
    corr[:, silent] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def conditioned_moments(p: CmpParams, z):
    """Mean, covariance and correlation of the counts at stimulus ``z``."""
    stats = conditioned_stats(p, encode_stimulus(reduce_stimulus(float(z))))
    w, lam, mean = stats.weights[0], stats.rates[0], stats.mean[0]
    second = (lam.T * w) @ lam + np.diag(mean)
    cov = second - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    return mean, cov, covariance_to_correlation(cov)


def conditional_ll_gradients(n, z, p: CmpParams) -> CmpGradient:
    features = encode_stimulus(reduce_stimulus(np.atleast_1d(z)))
    return batch_gradients(p, np.atleast_2d(n), features)
