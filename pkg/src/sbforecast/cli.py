"""Command-line front end for reproducible benchmark runs.

Subcommands: generate, slice, train, search, forecast, benchmark, report.
Every command writes its outputs under a run directory together with a
manifest JSON recording the configuration hash, seeds, and artifact paths.

Exit codes: 0 success, 1 bad configuration, 2 numerical failure,
3 missing input artifact.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import datapipe, forecast as fc, krr, nnet, plotting, refdyn

__all__ = ["main", "run_command"]

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_MISSING_ARTIFACT = 3

_GRID_NAMES = {
    "paper": datapipe.PAPER_GRID,
    "symmetric": datapipe.SYMMETRIC_GRID,
    "asymmetric": datapipe.ASYMMETRIC_GRID,
}

KRR_MODEL_IDS = {
    "krr-l": krr.KernelSpec(family="linear"),
    "krr-g": None,  # sigma supplied at train time
    "krr-e": None,
    "krr-m1": None,
    "krr-m2": None,
    "krr-m3": None,
    "krr-m4": None,
    "krr-dp": None,
}


class _CliError(ValueError):
    """Bad configuration surfaced with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _float_list(text: str):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise _CliError(f"expected a comma-separated float list, got {text!r}") from exc


def _config_hash(args: argparse.Namespace) -> str:
    payload = json.dumps(
        {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _write_manifest(out_dir, command: str, args, artifacts, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "config_hash": _config_hash(args),
        "artifacts": sorted(os.path.relpath(a, out_dir) for a in artifacts),
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing input artifact: {path}")
    return path


# ---------------------------------------------------------------------------
# generate


def _grid_from_args(args) -> datapipe.GridSpec:
    base = _GRID_NAMES[args.grid]
    return datapipe.GridSpec(
        epsilon_values=args.epsilons or base.epsilon_values,
        lambda_values=args.lambdas or base.lambda_values,
        omega_c_values=args.omega_cs or base.omega_c_values,
        beta_values=args.betas or base.beta_values,
    )


def _cmd_generate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    grid = _grid_from_args(args)
    points = datapipe.parameter_grid(grid)
    if args.limit is not None:
        points = points[: args.limit]
    artifacts = []
    for i, params in enumerate(points):
        config = refdyn.suggest_hierarchy_config(
            params, t_max=args.t_max, dt_save=args.dt_save
        )
        if args.converged:
            traj, _ = refdyn.propagate_converged(params, config)
        else:
            traj = refdyn.heom_propagate(params, config)
        path = os.path.join(args.out, refdyn.trajectory_filename(params))
        refdyn.save_trajectory(traj, path)
        artifacts.append(path)
        if args.verbose:
            print(f"[{i + 1}/{len(points)}] {os.path.basename(path)}", flush=True)
    _write_manifest(args.out, "generate", args, artifacts, {"n_trajectories": len(points)})
    print(f"generated {len(points)} trajectories in {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# slice


def _load_trajectory_dir(path: str):
    files = sorted(glob.glob(os.path.join(path, "traj_*.csv")))
    if not files:
        raise FileNotFoundError(f"no trajectory files (traj_*.csv) under {path}")
    return [refdyn.load_trajectory(f) for f in files]


def _cmd_slice(args) -> int:
    trajectories = _load_trajectory_dir(_require(args.input))
    os.makedirs(args.out, exist_ok=True)
    holdout, remaining = datapipe.holdout_select(trajectories, args.holdout, args.seed)
    train = datapipe.build_dataset(remaining, args.window + 1, "train", seed=args.seed)
    subtrain, validation = datapipe.split_subtrain(train, args.subtrain_fraction, args.seed)

    artifacts = []
    for name, data in (("train", train), ("subtrain", subtrain), ("validation", validation)):
        path = os.path.join(args.out, f"{name}.csv")
        datapipe.save_dataset(data, path)
        artifacts.append(path)
    holdout_dir = os.path.join(args.out, "holdout")
    os.makedirs(holdout_dir, exist_ok=True)
    for traj in holdout:
        path = os.path.join(holdout_dir, refdyn.trajectory_filename(traj.params))
        refdyn.save_trajectory(traj, path)
        artifacts.append(path)
    split_path = os.path.join(args.out, "splits.json")
    datapipe.save_split_manifest(
        split_path,
        args.seed,
        {
            "holdout": [datapipe.grid_point_id(t.params) for t in holdout],
            "train": [datapipe.grid_point_id(t.params) for t in remaining],
        },
    )
    artifacts.append(split_path)
    _write_manifest(
        args.out,
        "slice",
        args,
        artifacts,
        {"n_train_samples": len(train), "n_holdout": len(holdout)},
    )
    print(
        f"sliced {len(remaining)} trajectories into {len(train)} samples "
        f"({len(subtrain)} subtrain / {len(validation)} validation), "
        f"{len(holdout)} hold-out trajectories"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _krr_spec_from_args(model_id: str, args) -> krr.KernelSpec:
    if model_id == "krr-l":
        return krr.KernelSpec(family="linear")
    if args.sigma is None:
        raise _CliError(f"{model_id} requires --sigma")
    if model_id == "krr-g":
        return krr.KernelSpec(family="gaussian", sigma=args.sigma)
    if model_id == "krr-e":
        return krr.KernelSpec(family="exponential", sigma=args.sigma)
    if model_id.startswith("krr-m"):
        return krr.KernelSpec(family="matern", sigma=args.sigma, n=int(model_id[-1]))
    if model_id == "krr-dp":
        if args.period is None or args.sigma_p is None:
            raise _CliError("krr-dp requires --period and --sigma-p")
        return krr.KernelSpec(
            family="decaying_periodic", sigma=args.sigma, p=args.period, sigma_p=args.sigma_p
        )
    raise _CliError(f"unknown KRR model id {model_id!r}")


def _cmd_train(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    train_data = datapipe.load_dataset(_require(args.train))
    artifacts = []
    start = time.perf_counter()
    if args.model in KRR_MODEL_IDS:
        spec = _krr_spec_from_args(args.model, args)
        capped = datapipe.subsample(train_data, args.cap, args.seed)
        model = krr.krr_train(capped, spec, args.lambda_reg)
        path = os.path.join(args.out, f"{args.model}.model")
        krr.save_krr_model(model, path)
        artifacts.append(path)
    elif args.model in nnet.ARCHITECTURES:
        validation = (
            datapipe.load_dataset(_require(args.validation), "validation")
            if args.validation
            else None
        )
        model = nnet.build_model(args.model, seed=args.seed, input_length=train_data.window_length)
        opts = nnet.TrainOpts(
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            epochs=args.epochs,
            seed=args.seed,
        )
        subset = datapipe.subsample(train_data, args.cap, args.seed) if args.cap else train_data
        history = nnet.train(model, subset, opts, validation=validation)
        prefix = os.path.join(args.out, args.model)
        nnet.save_net_model(model, prefix)
        history_path = os.path.join(args.out, f"{args.model}_history.csv")
        nnet.save_loss_history(history, history_path)
        artifacts.extend([prefix + ".json", prefix + ".npz", history_path])
    else:
        raise _CliError(f"unknown model id {args.model!r}")
    elapsed = time.perf_counter() - start
    times_path = os.path.join(args.out, f"{args.model}_training_time.json")
    with open(times_path, "w") as fh:
        json.dump({"model": args.model, "training_time_s": elapsed}, fh)
        fh.write("\n")
    artifacts.append(times_path)
    _write_manifest(args.out, "train", args, artifacts, {"training_time_s": elapsed})
    print(f"trained {args.model} in {elapsed:.1f}s -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# search


def _cmd_search(args) -> int:
    train_data = datapipe.load_dataset(_require(args.train))
    val_data = datapipe.load_dataset(_require(args.validation), "validation")
    train_sub = datapipe.subsample(train_data, args.cap, args.seed)
    val_sub = datapipe.subsample(val_data, args.cap, args.seed)
    grid = krr.SearchGrid(matern_n=args.matern_n)
    spec, lam, mae = krr.hyperparameter_search(
        train_sub, val_sub, args.family, grid=grid, seed=args.seed
    )
    payload = {
        "family": spec.family,
        "sigma": spec.sigma,
        "n": spec.n,
        "p": spec.p,
        "sigma_p": spec.sigma_p,
        "lambda": lam,
        "validation_mae": mae,
        "seed": args.seed,
    }
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"best {args.family}: sigma={spec.sigma}, lambda={lam}, val MAE {mae:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# forecast / benchmark


def _load_any_model(path: str):
    """KRR single-file models or net model prefixes (.json + .npz)."""
    if os.path.isfile(path) and path.endswith(".model"):
        return krr.load_krr_model(path)
    prefix = path
    for suffix in (".json", ".npz"):
        if prefix.endswith(suffix):
            prefix = prefix[: -len(suffix)]
    if os.path.isfile(prefix + ".json") and os.path.isfile(prefix + ".npz"):
        return nnet.load_net_model(prefix)
    if os.path.isfile(path):
        return krr.load_krr_model(path)
    raise FileNotFoundError(f"missing input artifact: no model at {path}")


def _model_name(path: str) -> str:
    base = os.path.basename(path)
    for suffix in (".model", ".json", ".npz"):
        if base.endswith(suffix):
            return base[: -len(suffix)]
    return base


def _cmd_forecast(args) -> int:
    model = _load_any_model(args.model)
    traj = refdyn.load_trajectory(_require(args.trajectory))
    forecaster = fc.Forecaster(model, name=_model_name(args.model))
    predicted, reference, _ = fc.forecast_trajectory(forecaster, traj, args.seed_length)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    fc.save_forecast_series(
        {
            "times": traj.times[args.seed_length :],
            "reference": reference,
            "predicted": predicted,
        },
        args.out,
    )
    print(f"forecast MAE {fc.evaluate_mae(predicted, reference):.3e} -> {args.out}")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    holdout = _load_trajectory_dir(_require(args.holdout))
    forecasters = []
    training_times = {}
    for path in args.models.split(","):
        model = _load_any_model(path.strip())
        name = _model_name(path.strip())
        forecasters.append(fc.Forecaster(model, name=name))
        time_file = os.path.join(os.path.dirname(path), f"{name}_training_time.json")
        if os.path.isfile(time_file):
            with open(time_file) as fh:
                training_times[name] = json.load(fh)["training_time_s"]
    report = fc.run_benchmark(
        forecasters, holdout, seed_length=args.seed_length, training_times=training_times
    )
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "report.csv")
    json_path = os.path.join(args.out, "report.json")
    fc.save_benchmark_csv(report, csv_path)
    fc.save_benchmark_json(report, json_path)
    _write_manifest(args.out, "benchmark", args, [csv_path, json_path])
    for row in report.rows:
        mae = "diverged" if row.diverged else f"{row.mae:.3e}"
        print(f"{row.name}: MAE {mae}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def _cmd_report(args) -> int:
    json_path = _require(os.path.join(args.input, "report.json"))
    with open(json_path) as fh:
        payload = json.load(fh)
    os.makedirs(args.out, exist_ok=True)

    # Rebuild lightweight report objects for the plotting helpers.
    rows = [
        fc.BenchmarkRow(
            name=r["model"],
            n_parameters=r["n_parameters"],
            mae=float("inf") if r["mae"] is None else r["mae"],
            training_time=float("nan") if r["training_time_s"] is None else r["training_time_s"],
            prediction_time=r["prediction_time_s"],
            diverged=r["diverged"],
        )
        for r in payload["rows"]
    ]
    series_by_model = {
        name: [s for s in series]
        for name, series in payload["per_trajectory"].items()
    }
    report = fc.BenchmarkReport(rows=rows, per_trajectory=series_by_model)

    artifacts = []
    summary_csv = os.path.join(args.out, "summary.csv")
    fc.save_benchmark_csv(report, summary_csv)
    artifacts.append(summary_csv)

    mae_fig = os.path.join(args.out, "mae_by_model.png")
    plotting.plot_benchmark_mae(report, mae_fig)
    artifacts.append(mae_fig)
    growth_fig = os.path.join(args.out, "error_growth.png")
    plotting.plot_error_growth(series_by_model, growth_fig)
    artifacts.append(growth_fig)

    for name, series in series_by_model.items():
        valid = [s for s in series if s is not None]
        if not valid:
            continue
        s = valid[0]
        series_csv = os.path.join(args.out, f"forecast_{name}.csv")
        fc.save_forecast_series(s, series_csv)
        fig_path = os.path.join(args.out, f"forecast_{name}.png")
        plotting.plot_forecast_series(
            s["times"], s["reference"], s["predicted"], fig_path, title=name
        )
        artifacts.extend([series_csv, fig_path])
    _write_manifest(args.out, "report", args, artifacts)
    print(f"report rendered to {args.out} ({len(artifacts)} artifacts)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="sbforecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="propagate reference trajectories over a grid")
    p.add_argument("--grid", choices=sorted(_GRID_NAMES), default="paper")
    p.add_argument("--epsilons", type=_float_list, default=None)
    p.add_argument("--lambdas", type=_float_list, default=None)
    p.add_argument("--omega-cs", type=_float_list, default=None)
    p.add_argument("--betas", type=_float_list, default=None)
    p.add_argument("--t-max", type=float, default=20.0)
    p.add_argument("--dt-save", type=float, default=0.1)
    p.add_argument("--converged", action="store_true",
                   help="refine truncation until self-convergence (slower)")
    p.add_argument("--limit", type=int, default=None, help="propagate only the first N points")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("slice", help="build sliced datasets and splits from trajectories")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=datapipe.DEFAULT_WINDOW)
    p.add_argument("--holdout", type=int, default=100)
    p.add_argument("--subtrain-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("train", help="train a KRR or network model on a dataset")
    p.add_argument("--train", required=True, help="training dataset CSV")
    p.add_argument("--validation", default=None, help="validation dataset CSV (networks)")
    p.add_argument("--model", required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--lambda-reg", type=float, default=2.0**-20)
    p.add_argument("--period", type=float, default=None)
    p.add_argument("--sigma-p", type=float, default=None)
    p.add_argument("--cap", type=int, default=krr.DEFAULT_TRAIN_CAP,
                   help="training-set size cap (seeded subsample); 0 disables for networks")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("search", help="KRR hyperparameter search on train/validation splits")
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--family", required=True,
                   choices=("linear", "gaussian", "exponential", "matern", "decaying_periodic"))
    p.add_argument("--matern-n", type=int, default=1)
    p.add_argument("--cap", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="JSON file for the best configuration")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("forecast", help="recursively forecast one trajectory")
    p.add_argument("--model", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--seed-length", type=int, default=fc.DEFAULT_SEED_LENGTH)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("benchmark", help="forecast-benchmark models over hold-out trajectories")
    p.add_argument("--models", required=True, help="comma-separated model paths")
    p.add_argument("--holdout", required=True, help="directory of hold-out trajectory CSVs")
    p.add_argument("--seed-length", type=int, default=fc.DEFAULT_SEED_LENGTH)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("report", help="render figures and summary tables from a benchmark")
    p.add_argument("--in", dest="input", required=True, help="benchmark output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def run_command(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _CliError as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (
        refdyn.ConvergenceError,
        refdyn.PropagationError,
        fc.ForecastDivergence,
        FloatingPointError,
        np.linalg.LinAlgError,  # subclasses ValueError, so it must come first
    ) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
