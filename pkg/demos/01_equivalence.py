"""Harmonium and mixture views of the same Poisson mixture.

A finite mixture of independent Poissons can be written two ways: as
component weights plus per-component rates, or as an exponential-family
harmonium with a count bias, a category bias and an interaction matrix.
This script converts between the two and checks that they define the same
distribution.

Run with ``python3 demos/01_equivalence.py``.
"""

# %%
import itertools

import numpy as np
from scipy.special import gammaln, logsumexp

from poismix import MixtureParams, harmonium_to_mixture, mixture_to_harmonium
from poismix.mixture import marginal_log_density, posterior

# %% [markdown]
# Two neurons, three components. Rates are in spikes per trial.

# %%
# %% [markdown]
# The mixture form stores the weights of components 1 and 2 (component 0
# gets the remainder) and each component's log-rates.

# %%
rates = np.array([[1.0, 4.0], [6.0, 0.5], [3.0, 3.0]])
mixture = MixtureParams(weights=np.array([0.3, 0.2]), components=np.log(rates))
harmonium = mixture_to_harmonium(mixture)
print("count bias      ", harmonium.bias)
print("category bias   ", harmonium.cat_bias)
print("interaction rows\n", harmonium.interaction)

# %% [markdown]
# The round trip recovers the original weights and rates, and both views
# agree on the probability of every count vector.

# %%
back = harmonium_to_mixture(harmonium)
print("weights recovered:", np.allclose(back.full_weights(), mixture.full_weights()))
print("rates recovered:  ", np.allclose(back.rates, mixture.rates))

grid = np.array(list(itertools.product(range(25), repeat=2)))
log_poisson = grid @ np.log(rates).T - rates.sum(axis=1) - gammaln(grid + 1).sum(axis=1)[:, None]
log_p_mix = logsumexp(log_poisson + np.log(mixture.full_weights()), axis=1)
log_p_harm = marginal_log_density(grid, harmonium)
print("max |log p difference| over a 25x25 grid:", np.max(np.abs(log_p_mix - log_p_harm)))
print("total mass on the grid:", np.exp(log_p_mix).sum())

# %% [markdown]
# The harmonium posterior over components is a softmax of the category
# bias plus the counts projected through the interaction matrix.

# %%
for counts in ([0, 5], [7, 0], [3, 3]):
    print(counts, "->", np.round(posterior(np.array(counts), harmonium), 3))
