"""Recursive long-time forecasting and the accuracy/timing benchmark.

A forecaster predicts the next value from a fixed-length window; recursion
slides the window by one after each prediction, so an arbitrarily long
continuation grows from a short seed of ground-truth values.  The benchmark
runs every model over every hold-out trajectory, pools mean absolute errors
over all predicted points, and records training and per-step prediction
wall-times.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .krr import KrrModel, krr_predict_batch
from .nnet import NetModel

__all__ = [
    "Forecaster",
    "ForecastDivergence",
    "BenchmarkRow",
    "BenchmarkReport",
    "recursive_forecast",
    "evaluate_mae",
    "forecast_trajectory",
    "run_benchmark",
    "save_benchmark_csv",
    "save_benchmark_json",
    "save_forecast_series",
]

DEFAULT_SEED_LENGTH = 41  # ground-truth points covering t*Delta in [0, 4]


class ForecastDivergence(FloatingPointError):
    """A recursive prediction became NaN or infinite."""


class Forecaster:
    """Uniform next-value interface over a trained KRR or network model."""

    def __init__(self, model, name: str | None = None):
        if isinstance(model, KrrModel):
            self._predict = lambda w: float(krr_predict_batch(model, w[None, :])[0])
            self.window_length = model.window_length
            self.n_parameters = len(model.alphas)
        elif isinstance(model, NetModel):
            self._predict = lambda w: float(model.forward(w[None, :])[0])
            self.window_length = model.spec.input_length
            self.n_parameters = model.n_parameters
        else:
            raise TypeError(f"cannot wrap {type(model).__name__} as a forecaster")
        self.model = model
        self.name = name if name is not None else type(model).__name__

    @classmethod
    def from_function(cls, fn, window_length: int, name: str = "custom"):
        obj = cls.__new__(cls)
        obj._predict = lambda w: float(fn(w))
        obj.window_length = window_length
        obj.n_parameters = 0
        obj.model = fn
        obj.name = name
        return obj

    def predict(self, window: np.ndarray) -> float:
        window = np.asarray(window, dtype=float)
        if window.shape != (self.window_length,):
            raise ValueError(
                f"expected a window of length {self.window_length}, got shape {window.shape}"
            )
        return self._predict(window)


def recursive_forecast(forecaster: Forecaster, seed_window, n_steps: int) -> np.ndarray:
    """Continuation of length n_steps grown by feeding predictions back in."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    window = np.asarray(seed_window, dtype=float).copy()
    if window.shape != (forecaster.window_length,):
        raise ValueError(
            f"seed window length {window.shape} does not match {forecaster.window_length}"
        )
    out = np.empty(n_steps)
    for i in range(n_steps):
        value = forecaster.predict(window)
        if not math.isfinite(value):
            raise ForecastDivergence(f"non-finite prediction at recursion step {i}")
        out[i] = value
        window[:-1] = window[1:]
        window[-1] = value
    return out


def evaluate_mae(predicted, reference) -> float:
    """Mean absolute deviation between two equal-length value arrays."""
    predicted = np.asarray(predicted, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if predicted.shape != reference.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {reference.shape}")
    return float(np.mean(np.abs(predicted - reference)))


def forecast_trajectory(forecaster: Forecaster, trajectory, seed_length: int = DEFAULT_SEED_LENGTH):
    """(predicted, reference, abs-error series) over one hold-out trajectory.

    The seed is always the first ``seed_length`` ground-truth values; the
    remaining points are predicted recursively.
    """
    values = np.asarray(trajectory.values, dtype=float)
    if len(values) <= seed_length:
        raise ValueError(
            f"trajectory of length {len(values)} leaves nothing to predict "
            f"after a {seed_length}-point seed"
        )
    if forecaster.window_length > seed_length:
        raise ValueError(
            f"window length {forecaster.window_length} exceeds the "
            f"{seed_length}-point ground-truth seed"
        )
    n_steps = len(values) - seed_length
    seed = values[seed_length - forecaster.window_length : seed_length]
    predicted = recursive_forecast(forecaster, seed, n_steps)
    reference = values[seed_length:]
    return predicted, reference, np.abs(predicted - reference)


@dataclass
class BenchmarkRow:
    name: str
    n_parameters: int
    mae: float
    training_time: float
    prediction_time: float  # mean wall-time of one recursive step
    diverged: bool = False


@dataclass
class BenchmarkReport:
    rows: list
    per_trajectory: dict = field(default_factory=dict)  # name -> list of error series


def run_benchmark(
    forecasters,
    holdout_trajectories,
    seed_length: int = DEFAULT_SEED_LENGTH,
    training_times: dict | None = None,
    timing_repeats: int = 5,
) -> BenchmarkReport:
    """Recursive-forecast every model over every hold-out trajectory.

    MAE is pooled over all predicted points of all trajectories.  A model
    that diverges is reported with an infinite MAE instead of aborting the
    suite.  Prediction time is the median over ``timing_repeats`` repeats of
    the mean single-step wall time on the first trajectory.
    """
    if not holdout_trajectories:
        raise ValueError("need at least one hold-out trajectory")
    training_times = training_times or {}
    rows, per_traj = [], {}
    for forecaster in forecasters:
        abs_errors, series, diverged = [], [], False
        for traj in holdout_trajectories:
            try:
                predicted, reference, errors = forecast_trajectory(
                    forecaster, traj, seed_length
                )
            except ForecastDivergence:
                diverged = True
                series.append(None)
                continue
            abs_errors.append(errors)
            series.append(
                {
                    "params": traj.params,
                    "times": traj.times[seed_length:],
                    "predicted": predicted,
                    "reference": reference,
                    "abs_error": errors,
                }
            )
        mae = math.inf if diverged else float(np.mean(np.concatenate(abs_errors)))
        step_time = _time_one_step(forecaster, holdout_trajectories[0], seed_length, timing_repeats)
        rows.append(
            BenchmarkRow(
                name=forecaster.name,
                n_parameters=forecaster.n_parameters,
                mae=mae,
                training_time=float(training_times.get(forecaster.name, float("nan"))),
                prediction_time=step_time,
                diverged=diverged,
            )
        )
        per_traj[forecaster.name] = series
    return BenchmarkReport(rows=rows, per_trajectory=per_traj)


def _time_one_step(forecaster, trajectory, seed_length, repeats) -> float:
    window = np.asarray(
        trajectory.values[seed_length - forecaster.window_length : seed_length], dtype=float
    )
    samples = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        forecaster.predict(window)
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def save_benchmark_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("model,n_parameters,mae,training_time_s,prediction_time_s,diverged\n")
        for r in report.rows:
            mae = "inf" if math.isinf(r.mae) else f"{r.mae:.17g}"
            fh.write(
                f"{r.name},{r.n_parameters},{mae},{r.training_time:.17g},"
                f"{r.prediction_time:.17g},{int(r.diverged)}\n"
            )


def save_benchmark_json(report: BenchmarkReport, path) -> None:
    """Full per-trajectory error series alongside the summary rows."""
    payload = {"rows": [], "per_trajectory": {}}
    for r in report.rows:
        payload["rows"].append(
            {
                "model": r.name,
                "n_parameters": r.n_parameters,
                "mae": None if math.isinf(r.mae) else r.mae,
                "training_time_s": None if math.isnan(r.training_time) else r.training_time,
                "prediction_time_s": r.prediction_time,
                "diverged": r.diverged,
            }
        )
    for name, series in report.per_trajectory.items():
        entries = []
        for s in series:
            if s is None:
                entries.append(None)
                continue
            p = s["params"]
            entries.append(
                {
                    "params": {
                        "epsilon": p.epsilon,
                        "lam": p.lam,
                        "omega_c": p.omega_c,
                        "beta": p.beta,
                    },
                    "times": list(map(float, s["times"])),
                    "predicted": list(map(float, s["predicted"])),
                    "reference": list(map(float, s["reference"])),
                    "abs_error": list(map(float, s["abs_error"])),
                }
            )
        payload["per_trajectory"][name] = entries
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_forecast_series(series: dict, path) -> None:
    """Plot-data CSV `t,reference,predicted` for one (model, trajectory) pair."""
    with open(path, "w") as fh:
        fh.write("t,reference,predicted\n")
        for t, r, p in zip(series["times"], series["reference"], series["predicted"]):
            fh.write(f"{t:.17g},{r:.17g},{p:.17g}\n")
