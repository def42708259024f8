"""Finite mixtures of independent Poissons written as exponential-family harmoniums.

A harmonium over counts ``n`` (``m_N`` neurons) and a category ``j`` in
``0..m_C`` has density proportional to::

    exp(n . bias + cat_bias[j] + n . interaction[j]) / prod_k n_k!

where ``cat_bias[0]`` and ``interaction[0]`` are implicitly zero. The same
distribution is a mixture with component rates ``exp(bias + interaction[j])``
and weights given by :func:`harmonium_to_mixture`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp, softmax

from . import expfam
from .errors import DegenerateComponentError, InvalidParameterError, OutOfDomainError


def _as_finite(values, name, ndim):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise InvalidParameterError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HarmoniumParams:
    """Natural parameters of a Poisson/categorical harmonium.

    ``interaction`` has shape ``(m_C, m_N)``; its row ``j - 1`` couples the
    counts to category ``j``.
    """

    bias: np.ndarray
    cat_bias: np.ndarray
    interaction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bias", _as_finite(self.bias, "bias", 1))
        object.__setattr__(self, "cat_bias", _as_finite(self.cat_bias, "cat_bias", 1))
        inter = np.asarray(self.interaction, dtype=float)
        if inter.size == 0:
            inter = inter.reshape(len(self.cat_bias), len(self.bias))
        object.__setattr__(self, "interaction", _as_finite(inter, "interaction", 2))
        if self.interaction.shape != (len(self.cat_bias), len(self.bias)):
            raise InvalidParameterError(
                f"interaction shape {self.interaction.shape} inconsistent with "
                f"m_C={len(self.cat_bias)}, m_N={len(self.bias)}"
            )

    @property
    def n_neurons(self) -> int:
        return len(self.bias)

    @property
    def n_components(self) -> int:
        return len(self.cat_bias) + 1

    def full_interaction(self) -> np.ndarray:
        """Interaction with the implicit zero row for category 0 prepended."""
        return np.vstack([np.zeros((1, self.n_neurons)), self.interaction])

    def full_cat_bias(self) -> np.ndarray:
        return np.concatenate([[0.0], self.cat_bias])


@dataclass(frozen=True)
class MixtureParams:
    """Weighted-sum form: ``weights`` of components ``1..m_C`` and all component naturals."""

    weights: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_finite(self.weights, "weights", 1))
        object.__setattr__(self, "components", _as_finite(self.components, "components", 2))
        if self.components.shape[0] != len(self.weights) + 1:
            raise InvalidParameterError("need exactly one more component than weights")

    @property
    def rates(self) -> np.ndarray:
        return np.exp(self.components)

    def full_weights(self) -> np.ndarray:
        return expfam.categorical_full(self.weights)


@dataclass(frozen=True)
class HarmoniumMeans:
    mean_n: np.ndarray
    mean_c: np.ndarray
    cross: np.ndarray


class HarmoniumGradient(NamedTuple):
    bias: np.ndarray
    cat_bias: np.ndarray
    interaction: np.ndarray


def component_naturals(bias, interaction):
    """Natural parameters of every component; ``bias`` may carry leading batch axes."""
    bias = np.asarray(bias, dtype=float)
    full = np.vstack([np.zeros((1, bias.shape[-1])), interaction])
    return bias[..., None, :] + full


def mixture_logits(bias, cat_bias, interaction):
    """Natural parameters of the mixture weights, with the implicit 0 for category 0.

    Returns an array of shape ``(..., m_C + 1)``; the weights are its softmax.
    """
    psi = expfam.poisson_log_partition(component_naturals(bias, interaction))
    offset = psi - psi[..., :1]
    return np.concatenate([np.zeros_like(offset[..., :1]), offset[..., 1:] + cat_bias], axis=-1)


def harmonium_to_mixture(h: HarmoniumParams) -> MixtureParams:
    logits = mixture_logits(h.bias, h.cat_bias, h.interaction)
    return MixtureParams(
        weights=expfam.categorical_to_mean(logits[1:]),
        components=component_naturals(h.bias, h.interaction),
    )


def mixture_to_harmonium(m: MixtureParams) -> HarmoniumParams:
    comps = m.components
    psi = expfam.poisson_log_partition(comps)
    cat_natural = expfam.to_natural(m.weights, expfam.CATEGORICAL)
    return HarmoniumParams(
        bias=comps[0],
        cat_bias=cat_natural - psi[1:] + psi[0],
        interaction=comps[1:] - comps[0],
    )


def _joint_table(n, h: HarmoniumParams):
    """Joint log-densities for every category, shape ``(..., m_C + 1)``."""
    n = np.asarray(n)
    if n.shape[-1] != h.n_neurons:
        raise InvalidParameterError(
            f"count vector length {n.shape[-1]} does not match {h.n_neurons} neurons"
        )
    log_partition = expfam.poisson_log_partition(h.bias) + expfam.categorical_log_partition(
        mixture_logits(h.bias, h.cat_bias, h.interaction)[1:]
    )
    base = n @ h.bias - np.sum(expfam.log_factorial(n), axis=-1) - log_partition
    return base[..., None] + h.full_cat_bias() + n @ h.full_interaction().T


def joint_log_density(n, j, h: HarmoniumParams):
    if not 0 <= j < h.n_components:
        raise IndexError(f"category {j} outside 0..{h.n_components - 1}")
    return _joint_table(n, h)[..., j]


def marginal_log_density(n, h: HarmoniumParams):
    return logsumexp(_joint_table(n, h), axis=-1)


def posterior(n, h: HarmoniumParams):
    """Responsibilities of all ``m_C + 1`` categories given counts ``n``."""
    return softmax(_joint_table(n, h), axis=-1)


def harmonium_means(h: HarmoniumParams) -> HarmoniumMeans:
    mix = harmonium_to_mixture(h)
    w = mix.full_weights()
    lam = mix.rates
    return HarmoniumMeans(mean_n=w @ lam, mean_c=w[1:], cross=w[1:, None] * lam[1:])


def harmonium_means_to_params(m: HarmoniumMeans) -> HarmoniumParams:
    """Invert :func:`harmonium_means` through the component rates.

    Raises
    ------
    OutOfDomainError
        If the weights are not interior or a recovered rate is not positive.
    """
    mean_c = np.asarray(m.mean_c, dtype=float)
    mean_n = np.asarray(m.mean_n, dtype=float)
    cross = np.asarray(m.cross, dtype=float).reshape(len(mean_c), len(mean_n))
    w = expfam.categorical_full(mean_c)
    if np.any(w <= 0) or (len(w) > 1 and np.any(w >= 1)):
        raise OutOfDomainError("mixture weights must lie strictly inside (0, 1)")
    rates = np.vstack([(mean_n - cross.sum(axis=0)) / w[0], cross / w[1:, None]])
    if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
        raise OutOfDomainError("recovered component rates must be strictly positive")
    return mixture_to_harmonium(MixtureParams(weights=w[1:], components=np.log(rates)))


def em_step(data, h: HarmoniumParams, min_weight=1e-10) -> HarmoniumParams:
    """One exact expectation-maximisation step on unconditioned count data.

    Raises
    ------
    DegenerateComponentError
        If some component's average responsibility falls below ``min_weight``.
    """
    data = np.asarray(data)
    if data.ndim != 2 or len(data) == 0:
        raise InvalidParameterError("data must be a nonempty (samples, neurons) array")
    resp = posterior(data, h)
    avg = resp.mean(axis=0)
    if np.any(avg < min_weight):
        raise DegenerateComponentError(
            f"components {np.flatnonzero(avg < min_weight).tolist()} received no responsibility"
        )
    means = HarmoniumMeans(
        mean_n=data.mean(axis=0),
        mean_c=avg[1:],
        cross=resp[:, 1:].T @ data / len(data),
    )
    return harmonium_means_to_params(means)


def ll_gradients(n, h: HarmoniumParams) -> HarmoniumGradient:
    """Log-likelihood gradients for one count vector, or averaged over rows of ``n``."""
    n = np.atleast_2d(np.asarray(n, dtype=float))
    means = harmonium_means(h)
    resp = posterior(n, h)[:, 1:]
    return HarmoniumGradient(
        bias=n.mean(axis=0) - means.mean_n,
        cat_bias=resp.mean(axis=0) - means.mean_c,
        interaction=resp.T @ n / len(n) - means.cross,
    )


def sample_joint(h: HarmoniumParams, rng, size=None):
    """Draw ``(category, counts)``; with ``size`` both carry a leading sample axis."""
    mix = harmonium_to_mixture(h)
    j = expfam.sample_categorical(mix.weights, rng, size=size)
    counts = rng.poisson(mix.rates[j])
    return j, counts
