"""End-to-end tests for the command-line front end."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from sbforecast.cli import run_command
from sbforecast.krr import KernelSpec, KrrModel, save_krr_model
from sbforecast.refdyn import SpinBosonParams, Trajectory, save_trajectory, trajectory_filename


def _synthetic_trajectories(out_dir, n=12):
    """Damped-cosine series standing in for propagated trajectories."""
    os.makedirs(out_dir, exist_ok=True)
    t = np.arange(201) * 0.1
    for k in range(n):
        p = SpinBosonParams(
            epsilon=0.0,
            lam=0.1 * (k % 9 + 1),
            omega_c=float(k % 4 + 1),
            beta=(0.25, 0.5, 0.75)[k % 3],
        )
        values = np.cos((1.0 + 0.05 * k) * t) * np.exp(-0.05 * (k + 1) * t)
        save_trajectory(Trajectory(p, t, values), os.path.join(out_dir, trajectory_filename(p)))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Synthetic trajectories sliced, trained, benchmarked, and reported."""
    root = tmp_path_factory.mktemp("cli")
    traj_dir = root / "traj"
    _synthetic_trajectories(traj_dir)

    data_dir = root / "data"
    assert run_command([
        "slice", "--in", str(traj_dir), "--out", str(data_dir),
        "--window", "10", "--holdout", "3", "--seed", "0",
    ]) == 0

    model_dir = root / "models"
    assert run_command([
        "train", "--train", str(data_dir / "subtrain.csv"),
        "--model", "krr-g", "--sigma", "4.0", "--lambda-reg", "1e-6",
        "--cap", "800", "--out", str(model_dir),
    ]) == 0
    assert run_command([
        "train", "--train", str(data_dir / "subtrain.csv"),
        "--model", "krr-l", "--cap", "800", "--out", str(model_dir),
    ]) == 0

    bench_dir = root / "bench"
    assert run_command([
        "benchmark",
        "--models", f"{model_dir / 'krr-g.model'},{model_dir / 'krr-l.model'}",
        "--holdout", str(data_dir / "holdout"),
        "--seed-length", "41",
        "--out", str(bench_dir),
    ]) == 0

    report_dir = root / "report"
    assert run_command([
        "report", "--in", str(bench_dir), "--out", str(report_dir),
    ]) == 0

    return {
        "root": root,
        "traj": traj_dir,
        "data": data_dir,
        "models": model_dir,
        "bench": bench_dir,
        "report": report_dir,
    }


class TestSlice:
    def test_outputs(self, pipeline):
        data = pipeline["data"]
        for name in ("train.csv", "subtrain.csv", "validation.csv", "splits.json", "manifest.json"):
            assert (data / name).is_file()
        holdout_files = list((data / "holdout").glob("traj_*.csv"))
        assert len(holdout_files) == 3

    def test_split_manifest_disjoint(self, pipeline):
        splits = json.loads((pipeline["data"] / "splits.json").read_text())["splits"]
        assert len(splits["holdout"]) == 3
        assert len(splits["train"]) == 9
        assert not set(splits["holdout"]) & set(splits["train"])

    def test_sample_counts(self, pipeline):
        # 9 training trajectories x (201 - 11 + 1) slices each.
        lines = (pipeline["data"] / "train.csv").read_text().splitlines()
        assert len(lines) - 1 == 9 * 191

    def test_deterministic_rerun(self, pipeline, tmp_path):
        out = tmp_path / "data2"
        assert run_command([
            "slice", "--in", str(pipeline["traj"]), "--out", str(out),
            "--window", "10", "--holdout", "3", "--seed", "0",
        ]) == 0
        for name in ("train.csv", "subtrain.csv", "validation.csv", "splits.json"):
            assert (out / name).read_bytes() == (pipeline["data"] / name).read_bytes()


class TestManifests:
    @pytest.mark.parametrize("key", ["data", "models", "bench", "report"])
    def test_manifest_artifacts_exist(self, pipeline, key):
        out_dir = pipeline[key]
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert len(manifest["config_hash"]) == 16
        int(manifest["config_hash"], 16)  # hex
        assert manifest["artifacts"]
        for rel in manifest["artifacts"]:
            assert (out_dir / rel).is_file(), rel

    def test_no_orphan_files(self, pipeline):
        out_dir = pipeline["report"]
        manifest = json.loads((out_dir / "manifest.json").read_text())
        listed = {os.path.normpath(a) for a in manifest["artifacts"]} | {"manifest.json"}
        present = {
            os.path.normpath(os.path.relpath(os.path.join(dp, f), out_dir))
            for dp, _, files in os.walk(out_dir)
            for f in files
        }
        assert present == listed


class TestTrain:
    def test_artifacts(self, pipeline):
        models = pipeline["models"]
        assert (models / "krr-g.model").is_file()
        times = json.loads((models / "krr-g_training_time.json").read_text())
        assert times["model"] == "krr-g" and times["training_time_s"] > 0

    def test_network_training(self, pipeline, tmp_path):
        out = tmp_path / "net"
        assert run_command([
            "train", "--train", str(pipeline["data"] / "subtrain.csv"),
            "--validation", str(pipeline["data"] / "validation.csv"),
            "--model", "ffnn", "--epochs", "1", "--cap", "200",
            "--out", str(out),
        ]) == 0
        assert (out / "ffnn.json").is_file() and (out / "ffnn.npz").is_file()
        history = (out / "ffnn_history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_mse,val_mse,train_mae,val_mae"
        assert len(history) == 2


class TestSearch:
    def test_writes_best_config(self, pipeline, tmp_path):
        out = tmp_path / "best.json"
        assert run_command([
            "search", "--train", str(pipeline["data"] / "subtrain.csv"),
            "--validation", str(pipeline["data"] / "validation.csv"),
            "--family", "linear", "--cap", "300", "--out", str(out),
        ]) == 0
        best = json.loads(out.read_text())
        assert best["family"] == "linear"
        assert best["validation_mae"] >= 0


class TestBenchmarkAndReport:
    def test_report_csv(self, pipeline):
        lines = (pipeline["bench"] / "report.csv").read_text().splitlines()
        assert lines[0] == "model,n_parameters,mae,training_time_s,prediction_time_s,diverged"
        names = {line.split(",")[0] for line in lines[1:]}
        assert names == {"krr-g", "krr-l"}

    def test_report_renders_figures_and_tables(self, pipeline):
        report = pipeline["report"]
        assert (report / "summary.csv").is_file()
        for fig in ("mae_by_model.png", "error_growth.png",
                    "forecast_krr-g.png", "forecast_krr-l.png"):
            assert (report / fig).stat().st_size > 0
        series = (report / "forecast_krr-g.csv").read_text().splitlines()
        assert series[0] == "t,reference,predicted"
        assert len(series) == 161  # 201 points - 41-point seed

    def test_single_forecast_command(self, pipeline, tmp_path):
        holdout = sorted((pipeline["data"] / "holdout").glob("traj_*.csv"))[0]
        out = tmp_path / "forecast.csv"
        assert run_command([
            "forecast", "--model", str(pipeline["models"] / "krr-g.model"),
            "--trajectory", str(holdout), "--out", str(out),
        ]) == 0
        assert out.read_text().startswith("t,reference,predicted\n")


class TestExitCodes:
    def test_unknown_model_is_bad_config(self, pipeline, tmp_path):
        code = run_command([
            "train", "--train", str(pipeline["data"] / "subtrain.csv"),
            "--model", "transformer", "--out", str(tmp_path / "x"),
        ])
        assert code == 1

    def test_parse_error_is_bad_config(self):
        assert run_command(["slice", "--nonsense"]) == 1

    def test_missing_sigma_is_bad_config(self, pipeline, tmp_path):
        code = run_command([
            "train", "--train", str(pipeline["data"] / "subtrain.csv"),
            "--model", "krr-g", "--out", str(tmp_path / "x"),
        ])
        assert code == 1

    def test_missing_dataset_is_exit_3(self, tmp_path):
        code = run_command([
            "train", "--train", str(tmp_path / "nope.csv"),
            "--model", "krr-l", "--out", str(tmp_path / "x"),
        ])
        assert code == 3

    def test_missing_trajectory_dir_is_exit_3(self, tmp_path):
        code = run_command([
            "slice", "--in", str(tmp_path / "nowhere"), "--out", str(tmp_path / "x"),
        ])
        assert code == 3

    def test_divergent_forecast_is_exit_2(self, pipeline, tmp_path):
        # A linear model predicting 1e6 * (last value) blows up recursively.
        model = KrrModel(
            spec=KernelSpec(family="linear"),
            lambda_reg=0.0,
            alphas=np.array([1.0]),
            training_inputs=np.array([[0.0] * 40 + [1e6]]),
        )
        model_path = tmp_path / "blowup.model"
        save_krr_model(model, model_path)
        holdout = sorted((pipeline["data"] / "holdout").glob("traj_*.csv"))[0]
        with np.errstate(over="ignore"):
            code = run_command([
                "forecast", "--model", str(model_path),
                "--trajectory", str(holdout), "--out", str(tmp_path / "out.csv"),
            ])
        assert code == 2


class TestGenerate:
    def test_single_point(self, tmp_path):
        out = tmp_path / "traj"
        code = run_command([
            "generate", "--grid", "symmetric",
            "--lambdas", "0.1", "--omega-cs", "5", "--betas", "0.5",
            "--out", str(out),
        ])
        assert code == 0
        files = list(out.glob("traj_*.csv"))
        assert len(files) == 1
        lines = files[0].read_text().splitlines()
        assert len(lines) > 200  # header/comments + 201 samples

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "sbforecast.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "generate" in proc.stdout and "benchmark" in proc.stdout
