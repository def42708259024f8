"""Command-line interface: ``poismix {synth,fit,cv,report}``.

Settings come from built-in defaults, then an optional INI file given with
``--config`` (one section per command, keys spelled like the long flags with
underscores), then explicit flags. Unknown keys are rejected.

Failures exit with status 1 and print one line ``<ErrorClass>: <message>`` to
stderr.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .cmp import (
    conditional_log_likelihood,
    conditioned_moments,
    reduce_stimulus,
    tuning_curves,
    weight_curve,
)
from .errors import ConfigError, PoismixError
from .evaluation import empirical_correlations, ground_truth_nll, kfold_cv, one_component_fit
from .synth import GroundTruthSpec, SamplingPlan, generate_ground_truth, sample_dataset
from .training import ALGORITHMS, TrainConfig, fit

logger = logging.getLogger("poismix")

COMMON = {"seed": 0, "out": "poismix-out"}
DEFAULTS = {
    "synth": {
        "neurons": 20,
        "components": 8,
        "stimuli": 8,
        "trials": 62,
        "precision_mean": 0.8,
        "gain_mean": 2.0,
        "log_sigma": 0.5,
        "weight_bias_scale": 1.0,
        "grid": 64,
    },
    "fit": {
        "dataset": None,
        "algorithm": "all",
        "components": 8,
        "epochs": 100,
        "restarts": 10,
        "batch_size": 50,
        "learning_rate": 0.005,
        "jobs": 1,
        "truth": None,
        "grid": 64,
    },
    "cv": {
        "dataset": None,
        "components": 8,
        "component_grid": None,
        "folds": 10,
        "epochs": 100,
        "restarts": 10,
        "batch_size": 50,
        "learning_rate": 0.005,
        "jobs": 1,
    },
    "report": {
        "dataset": None,
        "params": None,
        "reference": None,
        "stimuli": None,
        "grid": 64,
    },
}


def _stimulus_list(text):
    """Parse ``"0,0.33pi,0.67pi"`` into radians."""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        scale = 1.0
        if item.endswith("pi"):
            item, scale = item[:-2] or "1", np.pi
        try:
            values.append(float(item) * scale)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad stimulus {item!r}") from None
    return values


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poismix", description="Conditional mixtures of independent Poissons."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = {}

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        parser.commands[name] = p
        p.add_argument("--config", type=Path, help="INI file with a [%s] section" % name)
        p.add_argument("--seed", type=int, help="global random seed (default 0)")
        p.add_argument("--out", type=Path, help="output directory (default poismix-out)")
        return p

    p = command("synth", "draw a ground-truth CMP and a dataset from it")
    p.add_argument("--neurons", type=_positive_int)
    p.add_argument("--components", type=_positive_int, help="number of mixture components")
    p.add_argument("--stimuli", type=_positive_int, help="stimuli tiled over [0, pi)")
    p.add_argument("--trials", type=_positive_int, help="trials per stimulus")
    p.add_argument("--precision-mean", type=float)
    p.add_argument("--gain-mean", type=float)
    p.add_argument("--log-sigma", type=float)
    p.add_argument("--weight-bias-scale", type=float)
    p.add_argument("--grid", type=_positive_int, help="stimulus grid size for curves")

    p = command("fit", "fit CMPs with EM, SGD and/or Hybrid")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--algorithm", choices=ALGORITHMS + ("all",))
    p.add_argument("--components", type=_positive_int)
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--restarts", type=_positive_int)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--jobs", type=_positive_int, help="worker processes for restarts")
    p.add_argument("--truth", type=Path, help="ground-truth params for the lower bound")
    p.add_argument("--grid", type=_positive_int)

    p = command("cv", "cross-validate the number of components")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--components", type=_positive_int, help="largest component count")
    p.add_argument("--component-grid", type=_int_list, help="explicit list, e.g. 1,2,4,8")
    p.add_argument("--folds", type=_positive_int)
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--restarts", type=_positive_int)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--jobs", type=_positive_int)

    p = command("report", "paired correlation and weight-curve tables")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--params", type=Path, help="fitted params (default OUT/fit_hybrid.json)")
    p.add_argument("--reference", type=Path, help="params for the upper triangle instead of data")
    p.add_argument("--stimuli", type=_stimulus_list, help="e.g. 0,0.33pi,0.67pi")
    p.add_argument("--grid", type=_positive_int)
    return parser


def _coerce(parser, command, key, raw):
    for action in parser.commands[command]._actions:
        if action.dest == key and key not in ("help", "config"):
            if action.choices is not None and raw not in action.choices:
                raise ConfigError(f"config key {key!r}: {raw!r} not in {list(action.choices)}")
            try:
                return action.type(raw) if action.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from None
    raise ConfigError(f"unknown config key {key!r} for command {command!r}")


def resolve_config(parser, args):
    """Merge defaults, config file and flags (in increasing precedence)."""
    command = args.command
    settings = dict(COMMON, **DEFAULTS[command])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        ini = configparser.ConfigParser()
        try:
            with open(config_path, encoding="utf-8") as fh:
                ini.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{config_path}: {exc}") from None
        for section in ini.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"{config_path}: unknown section [{section}]")
        if ini.has_section(command):
            for key, raw in ini.items(command, raw=True):
                key = key.replace("-", "_")
                settings[key] = _coerce(parser, command, key, raw)
    settings.update(flags)
    settings["out"] = Path(settings["out"])
    return settings


def _require(settings, key, producer=None):
    value = settings.get(key)
    if value is None:
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    path = Path(value)
    if not path.exists():
        hint = f"; run `poismix {producer}` first" if producer else ""
        raise ConfigError(f"{path} not found{hint}")
    return path


def _grid(n):
    return np.arange(n) * np.pi / n


def _curve_rows(params, grid):
    weights = weight_curve(params, grid)
    tuning = tuning_curves(params, grid)
    w_rows = [(z, j, weights[g, j]) for g, z in enumerate(grid) for j in range(weights.shape[1])]
    t_rows = [(z, k + 1, tuning[g, k]) for g, z in enumerate(grid) for k in range(tuning.shape[1])]
    return w_rows, t_rows


def _correlation_rows(params, stimuli):
    rows = []
    for z in stimuli:
        _, _, corr = conditioned_moments(params, z)
        m = corr.shape[0]
        rows.extend((z, i + 1, j + 1, corr[i, j]) for i in range(m) for j in range(m))
    return rows


def _write_curves(out, prefix, params, grid):
    w_rows, t_rows = _curve_rows(params, grid)
    io.write_table(out / f"{prefix}_weights.csv", "weights", ["stimulus", "component", "weight"], w_rows)
    io.write_table(out / f"{prefix}_tuning.csv", "tuning", ["stimulus", "neuron", "rate"], t_rows)


def cmd_synth(settings):
    out = settings["out"]
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(settings["seed"]).generate_state(2)
    spec = GroundTruthSpec(
        n_neurons=settings["neurons"],
        n_latent=settings["components"] - 1,
        seed=int(seeds[0]),
        precision_mean=settings["precision_mean"],
        gain_mean=settings["gain_mean"],
        log_sigma=settings["log_sigma"],
        weight_bias_scale=settings["weight_bias_scale"],
    )
    plan = SamplingPlan(settings["stimuli"], settings["trials"], int(seeds[1]))
    truth = generate_ground_truth(spec)
    data = sample_dataset(truth, plan)
    io.write_params(out / "truth.json", truth)
    io.write_dataset(out / "dataset.csv", data)
    _write_curves(out, "truth", truth, _grid(settings["grid"]))
    io.write_table(
        out / "truth_correlations.csv",
        "correlations",
        ["stimulus", "row", "col", "correlation"],
        _correlation_rows(truth, plan.stimuli),
    )
    io.write_json(
        out / "synth_summary.json",
        {
            "trials": len(data),
            "neurons": data.n_neurons,
            "components": truth.n_components,
            "ground_truth_nll": ground_truth_nll(data, truth),
        },
    )
    return out


def _train_config(settings, algorithm):
    return TrainConfig(
        algorithm=algorithm,
        epochs=settings["epochs"],
        restarts=settings["restarts"],
        minibatch_size=settings["batch_size"],
        learning_rate=settings["learning_rate"],
        rng_seed=settings["seed"],
        n_jobs=settings["jobs"],
    )


def cmd_fit(settings):
    data = io.read_dataset(_require(settings, "dataset", "synth"))
    out = settings["out"]
    out.mkdir(parents=True, exist_ok=True)
    algorithms = ALGORITHMS if settings["algorithm"] == "all" else (settings["algorithm"],)
    _, upper = one_component_fit(data)
    bounds = {"upper_bound_nll": upper, "lower_bound_nll": None}
    if settings.get("truth") is not None:
        truth = io.read_params(_require(settings, "truth", "synth"))
        bounds["lower_bound_nll"] = ground_truth_nll(data, truth)
    io.write_json(out / "bounds.json", bounds)
    traces = {}
    grid = _grid(settings["grid"])
    for alg in algorithms:
        report = fit(data, settings["components"], _train_config(settings, alg))
        logger.info("%s: final NLL %.6f in %.1f s", alg, report.final_nll, report.wall_time)
        traces[alg] = report.nll_trace
        io.write_json(
            out / f"fit_{alg}.json",
            {
                "algorithm": alg,
                "components": settings["components"],
                "epochs": settings["epochs"],
                "restarts": settings["restarts"],
                "seed": settings["seed"],
                "restart_index": report.restart_index,
                "restart_final_nll": report.restart_nlls,
                "final_nll": report.final_nll,
                "nll_trace": report.nll_trace.tolist(),
                "params": io.params_to_dict(report.final_params),
            },
        )
        _write_curves(out, f"fit_{alg}", report.final_params, grid)
        io.write_table(
            out / f"fit_{alg}_correlations.csv",
            "correlations",
            ["stimulus", "row", "col", "correlation"],
            _correlation_rows(report.final_params, data.distinct_stimuli()),
        )
    epochs = settings["epochs"]
    rows = [[e] + [traces[a][e] for a in algorithms] for e in range(epochs + 1)]
    io.write_table(out / "traces.csv", "traces", ["epoch"] + list(algorithms), rows)
    return out


def cmd_cv(settings):
    data = io.read_dataset(_require(settings, "dataset", "synth"))
    out = settings["out"]
    out.mkdir(parents=True, exist_ok=True)
    grid = settings["component_grid"] or list(range(1, settings["components"] + 1))
    if 1 not in grid:
        grid = [1] + list(grid)
    cfg = _train_config(settings, "hybrid")
    report = kfold_cv(data, grid, cfg, folds=settings["folds"])
    io.write_json(out / "cv.json", report.to_dict())
    rows = [
        (c, m, s, g, gs)
        for c, m, s, g, gs in zip(
            report.component_grid, report.mean, report.se, report.relative_gain, report.gain_se
        )
    ]
    io.write_table(
        out / "cv_gain.csv",
        "cv",
        ["components", "mean_ll", "se", "relative_gain", "gain_se"],
        rows,
    )
    return out


def _nearest(stimuli, z):
    dist = np.abs(stimuli - z)
    dist = np.minimum(dist, np.pi - dist)
    return stimuli[int(np.argmin(dist))]


def paired_matrix(upper, lower):
    """Upper triangle from ``upper``, lower triangle from ``lower``, unit diagonal."""
    m = upper.shape[0]
    out = np.where(np.triu(np.ones((m, m), dtype=bool), 1), upper, lower)
    np.fill_diagonal(out, 1.0)
    return out


def cmd_report(settings):
    out = settings["out"]
    out.mkdir(parents=True, exist_ok=True)
    data = io.read_dataset(_require(settings, "dataset", "synth"))
    if settings.get("params") is None:
        settings["params"] = out / "fit_hybrid.json"
    params = io.read_params(_require(settings, "params", "fit --algorithm hybrid"))
    if params.n_neurons != data.n_neurons:
        raise ConfigError(
            f"params have {params.n_neurons} neurons but the dataset has {data.n_neurons}"
        )
    reference = None
    if settings.get("reference") is not None:
        reference = io.read_params(_require(settings, "reference", "synth"))
    stimuli = settings.get("stimuli")
    stimuli = data.distinct_stimuli() if stimuli is None else reduce_stimulus(stimuli)
    emp_stimuli, emp_corr = empirical_correlations(data)
    rows = []
    for z in stimuli:
        _, _, model = conditioned_moments(params, z)
        if reference is None:
            used = _nearest(emp_stimuli, z)
            upper = emp_corr[int(np.flatnonzero(emp_stimuli == used)[0])]
            source = "empirical"
        else:
            used = z
            upper = conditioned_moments(reference, z)[2]
            source = "reference"
        paired = paired_matrix(upper, model)
        m = paired.shape[0]
        for i in range(m):
            for j in range(m):
                origin = source if j > i else ("model" if j < i else "diagonal")
                rows.append((z, used, i + 1, j + 1, paired[i, j], origin))
    io.write_table(
        out / "paired_correlations.csv",
        "paired-correlations",
        ["stimulus", "upper_stimulus", "row", "col", "correlation", "source"],
        rows,
    )
    _write_curves(out, "report", params, _grid(settings["grid"]))
    io.write_json(
        out / "report_summary.json",
        {"mean_ll": conditional_log_likelihood(data, params), "stimuli": [float(z) for z in stimuli]},
    )
    return out


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "cv": cmd_cv, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_config(parser, args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](settings)
    except (PoismixError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
