"""Baselines, cross-validation and empirical correlation summaries."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cmp import (
    FEATURE_DIM,
    CmpParams,
    SpikeDataset,
    conditional_log_likelihood,
    covariance_to_correlation,
    encode_stimulus,
)
from .errors import ConfigError, FitFailureError, PoismixError
from .training import CLAMP, TrainConfig, fit

logger = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


class CvWarning(UserWarning):
    pass


@dataclass
class CvReport:
    component_grid: list
    fold_ll: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    relative_gain: np.ndarray
    gain_se: np.ndarray
    selected_components: int
    folds: int

    def to_dict(self):
        return {
            "component_grid": [int(c) for c in self.component_grid],
            "folds": int(self.folds),
            "fold_ll": [[None if np.isnan(v) else float(v) for v in row] for row in self.fold_ll],
            "mean": [float(v) for v in self.mean],
            "se": [float(v) for v in self.se],
            "relative_gain": [float(v) for v in self.relative_gain],
            "gain_se": [float(v) for v in self.gain_se],
            "selected_components": int(self.selected_components),
        }


@dataclass
class BoundsReport:
    upper_bound_nll: float
    lower_bound_nll: Optional[float] = None


def one_component_fit(
    d: SpikeDataset, seed=None, tol=1e-6, max_iter=200, jitter=0.1
) -> tuple[CmpParams, float]:
    """Optimal single-component CMP (independent Poisson neurons with von Mises tuning).

    Each neuron is a Poisson regression on ``(1, cos 2z, sin 2z)``, solved by
    damped Newton iterations until the gradient of the mean log-likelihood
    has max-norm below ``tol``. With ``seed`` the starting point is jittered;
    the problem is concave, so the optimum does not depend on it.

    Returns the parameters and the mean negative log-likelihood per trial.
    """
    x = np.column_stack([np.ones(len(d)), encode_stimulus(d.stimuli)])
    y = d.counts.astype(float)
    size = len(d)
    beta = np.zeros((d.n_neurons, FEATURE_DIM + 1))
    beta[:, 0] = np.log(np.maximum(y.mean(axis=0), 1e-3))
    if seed is not None:
        beta += np.random.default_rng(seed).normal(0.0, jitter, size=beta.shape)

    def objective(b):
        eta = x @ b.T
        return (np.sum(y * eta, axis=0) - np.sum(np.exp(eta), axis=0)) / size

    converged = False
    for _ in range(max_iter):
        mu = np.exp(x @ beta.T)
        grad = (y - mu).T @ x / size
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        hess = np.einsum("sk,si,sj->kij", mu, x, x) / size
        step = np.linalg.solve(hess + 1e-12 * np.eye(FEATURE_DIM + 1), grad[..., None])[..., 0]
        base = objective(beta)
        scale = np.ones(d.n_neurons)
        for _ in range(50):
            trial = np.clip(beta + scale[:, None] * step, -CLAMP, CLAMP)
            worse = objective(trial) < base - 1e-15
            if not np.any(worse):
                break
            scale = np.where(worse, scale / 2, scale)
        beta = trial
    if not converged:
        warnings.warn(
            f"one-component fit did not reach gradient norm {tol} in {max_iter} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    params = CmpParams.from_arrays(
        bias=beta[:, 0],
        cat_bias=np.zeros(0),
        interaction=np.zeros((0, d.n_neurons)),
        link=beta[:, 1:],
    )
    return params, -conditional_log_likelihood(d, params)


def ground_truth_nll(d: SpikeDataset, truth: CmpParams) -> float:
    return -conditional_log_likelihood(d, truth)


def bounds(d: SpikeDataset, truth: Optional[CmpParams] = None) -> BoundsReport:
    _, upper = one_component_fit(d)
    return BoundsReport(upper, None if truth is None else ground_truth_nll(d, truth))


def fold_assignment(d: SpikeDataset, folds, seed):
    """Stratified fold index of every trial.

    Within each stimulus, trials are first put in a canonical order (by their
    count vectors) and then dealt round-robin after a seeded shuffle, so the
    fold contents do not depend on the order trials are stored in.
    """
    assignment = np.empty(len(d), dtype=int)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF01D]))
    for z in d.distinct_stimuli():
        idx = np.flatnonzero(d.stimuli == z)
        if len(idx) < folds:
            raise ConfigError(
                f"stimulus {z:.4f} has {len(idx)} trials, fewer than {folds} folds"
            )
        canonical = idx[np.lexsort(d.counts[idx].T[::-1])]
        order = rng.permutation(len(idx))
        assignment[canonical[order]] = np.arange(len(idx)) % folds
    return assignment


def _cv_cell(args):
    d, assignment, fold, n_components, cfg = args
    train = d.subset(assignment != fold)
    test = d.subset(assignment == fold)
    cell_cfg = replace(
        cfg,
        rng_seed=int(np.random.SeedSequence([cfg.rng_seed, fold, n_components]).generate_state(1)[0]),
        minibatch_size=min(cfg.minibatch_size, len(train)),
        n_jobs=1,
    )
    try:
        report = fit(train, n_components, cell_cfg)
    except PoismixError as exc:
        logger.warning("CV cell (fold %d, %d components) failed: %s", fold, n_components, exc)
        return np.nan
    return conditional_log_likelihood(test, report.final_params)


def kfold_cv(d: SpikeDataset, component_grid, cfg: TrainConfig, folds=10, n_jobs=None) -> CvReport:
    """Held-out mean log-likelihood (nats/trial) for each number of components.

    Every (fold, component count) cell is an independent multi-restart fit
    with its own derived seed; cells may run in parallel.
    """
    grid = sorted({int(c) for c in component_grid})
    if not grid or grid[0] < 1:
        raise ConfigError("component grid must be nonempty and contain counts >= 1")
    if 1 not in grid:
        raise ConfigError("component grid must include 1 (the baseline)")
    if folds < 2:
        raise ConfigError("need at least 2 folds")
    assignment = fold_assignment(d, folds, cfg.rng_seed)
    cells = [(d, assignment, f, c, cfg) for f in range(folds) for c in grid]
    n_jobs = cfg.n_jobs if n_jobs is None else n_jobs
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            values = list(pool.map(_cv_cell, cells))
    else:
        values = [_cv_cell(cell) for cell in cells]
    fold_ll = np.array(values, dtype=float).reshape(folds, len(grid))
    if np.any(np.isnan(fold_ll)):
        warnings.warn(
            f"{int(np.isnan(fold_ll).sum())} CV cells failed and are excluded",
            CvWarning,
            stacklevel=2,
        )
    if np.all(np.isnan(fold_ll[:, grid.index(1)])):
        raise FitFailureError("every one-component CV cell failed")
    return _summarise(grid, fold_ll, folds)


def _summarise(grid, fold_ll, folds):
    valid = np.sum(~np.isnan(fold_ll), axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(fold_ll, axis=0)
        se = np.nanstd(fold_ll, axis=0, ddof=1) / np.sqrt(valid)
        diff = fold_ll - fold_ll[:, [grid.index(1)]]
        gain_se = np.nanstd(diff, axis=0, ddof=1) / np.sqrt(np.sum(~np.isnan(diff), axis=0))
    gain = mean - mean[grid.index(1)]
    report = CvReport(
        component_grid=grid,
        fold_ll=fold_ll,
        mean=mean,
        se=np.nan_to_num(se),
        relative_gain=gain,
        gain_se=np.nan_to_num(gain_se),
        selected_components=1,
        folds=folds,
    )
    report.selected_components = select_components(report)
    return report


def select_components(r: CvReport, atol=1e-12) -> int:
    """Component count with the highest mean held-out log-likelihood; ties go to fewer."""
    mean = np.where(np.isnan(r.mean), -np.inf, r.mean)
    best = np.max(mean)
    for c, m in zip(r.component_grid, mean):
        if m >= best - atol:
            return int(c)
    raise AssertionError("unreachable")


def empirical_correlations(d: SpikeDataset):
    """Pearson correlation of the counts at each distinct stimulus.

    Returns ``(stimuli, corr)`` with ``corr`` of shape ``(G, m_N, m_N)``.
    """
    stimuli = d.distinct_stimuli()
    out = np.empty((len(stimuli), d.n_neurons, d.n_neurons))
    for g, z in enumerate(stimuli):
        block = d.counts[d.stimuli == z].astype(float)
        if len(block) < 2:
            raise ConfigError(f"stimulus {z:.4f} has fewer than 2 trials")
        out[g] = covariance_to_correlation(np.atleast_2d(np.cov(block, rowvar=False, ddof=1)))
    return stimuli, out
