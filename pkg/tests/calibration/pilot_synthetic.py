"""Pilot run that calibrates the acceptance thresholds of the synthetic experiment.

For seeds 1000..1019 (disjoint from the acceptance seeds) it fits the
8-component model with best-of-10 Hybrid over 100 epochs and prints, per seed,
the final training NLL relative to the ground-truth NLL and the averaged
correlation-matrix distance to the ground truth.

    python tests/calibration/pilot_synthetic.py
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from problems import bounds_for, correlation_distance, identity_distance, synthetic_problem  # noqa: E402

from poismix.training import TrainConfig, fit  # noqa: E402

SEEDS = range(1000, 1020)


def main():
    excess, dist = [], []
    for seed in SEEDS:
        t0 = time.perf_counter()
        truth, data = synthetic_problem(seed)
        lower, upper = bounds_for(truth, data)
        report = fit(data, 8, TrainConfig(algorithm="hybrid", epochs=100, restarts=10, rng_seed=seed))
        d = correlation_distance(report.final_params, truth)
        excess.append(report.final_nll - lower)
        dist.append(d)
        print(
            f"seed {seed}: lower {lower:.4f} final {report.final_nll:.4f} upper {upper:.4f} "
            f"excess {excess[-1]:+.4f} corr-dist {d:.4f} identity-dist {identity_distance(truth):.4f} "
            f"({time.perf_counter() - t0:.1f} s)",
            flush=True,
        )
    print(f"excess: max {max(excess):+.4f} 90th pct {np.percentile(excess, 90):+.4f}")
    print(f"corr distance: 90th pct {np.percentile(dist, 90):.4f} max {max(dist):.4f}")


if __name__ == "__main__":
    main()
