"""Choose the number of mixture components by cross-validation.

Two synthetic datasets with the same tuning: one whose neurons share latent
gain states, and one with none (independent neurons). Held-out
log-likelihood should favour several components in the first case and a
single component in the second.

Run with ``python3 demos/03_model_selection.py`` (a few minutes on one core).
"""

# %%
from poismix import (
    GroundTruthSpec,
    SamplingPlan,
    TrainConfig,
    generate_ground_truth,
    kfold_cv,
    sample_dataset,
)

# %% [markdown]
# Training is cut down to 2 restarts to keep the demo short.

# %%
cfg = TrainConfig(algorithm="hybrid", epochs=100, restarts=2, rng_seed=0)
grid = [1, 2, 4, 8]
plan = SamplingPlan(rng_seed=1)

# %%
for label, n_latent in (("8 latent states", 7), ("no latent states", 0)):
    truth = generate_ground_truth(GroundTruthSpec(n_latent=n_latent, seed=2))
    data = sample_dataset(truth, plan)
    report = kfold_cv(data, grid, cfg, folds=5)
    print(f"\n{label}: selected {report.selected_components} components")
    print(" components  held-out LL   gain vs 1")
    for c, mean, gain, se in zip(grid, report.mean, report.relative_gain, report.gain_se):
        print(f" {c:>10}  {mean:11.3f}  {gain:+8.3f} ± {se:.3f}")
