"""Ground-truth CMPs with von Mises tuning and synthetic datasets drawn from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cmp import CmpParams, SpikeDataset, conditioned_stats, encode_stimulus
from .errors import ConfigError

CALIBRATION_GRID = 128


@dataclass(frozen=True)
class GroundTruthSpec:
    """Population of ``n_neurons`` with ``n_latent + 1`` gain components.

    Precisions and gains are log-normal with the given distribution means and
    log-space standard deviation ``log_sigma``. ``weight_bias_scale`` sets the
    spread of the component log-weights around their stimulus-averaged balance
    point (see :func:`generate_ground_truth`).
    """

    n_neurons: int = 20
    n_latent: int = 7
    seed: int = 0
    precision_mean: float = 0.8
    gain_mean: float = 2.0
    log_sigma: float = 0.5
    weight_bias_scale: float = 1.0

    def __post_init__(self):
        if self.n_neurons < 1 or self.n_latent < 0:
            raise ConfigError("need n_neurons >= 1 and n_latent >= 0")
        if self.precision_mean <= 0 or self.gain_mean <= 0:
            raise ConfigError("precision_mean and gain_mean must be positive")
        if self.log_sigma < 0 or self.weight_bias_scale < 0:
            raise ConfigError("log_sigma and weight_bias_scale must be nonnegative")


@dataclass(frozen=True)
class SamplingPlan:
    stimulus_count: int = 8
    trials_per_stimulus: int = 62
    rng_seed: int = 0

    def __post_init__(self):
        if self.stimulus_count < 1 or self.trials_per_stimulus < 1:
            raise ConfigError("stimulus_count and trials_per_stimulus must be positive")

    @property
    def stimuli(self):
        return np.arange(self.stimulus_count) * np.pi / self.stimulus_count


def _lognormal(rng, mean, sigma, size):
    return rng.lognormal(np.log(mean) - 0.5 * sigma**2, sigma, size=size)


def generate_ground_truth(spec: GroundTruthSpec) -> CmpParams:
    """Draw a CMP whose components differ only in their gains.

    Component ``j`` of neuron ``k`` fires at ``gain[j, k] * exp(rho_k cos(2(z - mu_k)))``.
    Component 0's log-gain becomes the count bias and the remaining rows of
    the interaction matrix are log-gain differences from it.

    The category bias is centred so that, averaged over stimuli, no component
    is favoured a priori by its total rate, then perturbed by
    ``Normal(0, weight_bias_scale**2)``.
    """
    rng = np.random.default_rng(spec.seed)
    m_n, m_c = spec.n_neurons, spec.n_latent
    preferred = rng.uniform(0.0, np.pi, size=m_n)
    precision = _lognormal(rng, spec.precision_mean, spec.log_sigma, m_n)
    log_gain = np.log(_lognormal(rng, spec.gain_mean, spec.log_sigma, (m_c + 1, m_n)))
    link = precision[:, None] * encode_stimulus(preferred)
    params = CmpParams.from_arrays(
        bias=log_gain[0],
        cat_bias=np.zeros(m_c),
        interaction=log_gain[1:] - log_gain[0],
        link=link,
    )
    grid = np.arange(CALIBRATION_GRID) * np.pi / CALIBRATION_GRID
    psi = conditioned_stats(params, encode_stimulus(grid)).log_partition
    offset = (psi[:, 1:] - psi[:, :1]).mean(axis=0)
    cat_bias = -offset + rng.normal(0.0, spec.weight_bias_scale, size=m_c)
    return CmpParams.from_arrays(log_gain[0], cat_bias, log_gain[1:] - log_gain[0], link)


def sample_dataset(p: CmpParams, plan: SamplingPlan) -> SpikeDataset:
    """Draw ``trials_per_stimulus`` trials at each evenly tiled stimulus.

    Trials are ordered by stimulus; the latent component is discarded.
    """
    rng = np.random.default_rng(plan.rng_seed)
    stimuli = np.repeat(plan.stimuli, plan.trials_per_stimulus)
    stats = conditioned_stats(p, encode_stimulus(plan.stimuli))
    counts = []
    for s in range(plan.stimulus_count):
        weights = stats.weights[s] / stats.weights[s].sum()
        j = rng.choice(p.n_components, size=plan.trials_per_stimulus, p=weights)
        counts.append(rng.poisson(stats.rates[s][j]))
    return SpikeDataset(np.vstack(counts), stimuli)
