"""Acceptance suite: ten go/no-go criteria, one printed pass/fail line each.

Lines are written to the real stdout so they survive pytest capture.
Criteria 7 and 8 train on the cached reduced-grid trajectories (see
conftest.py) and are the slow part of the suite.
"""

import numpy as np
import pytest

from sbforecast import datapipe, forecast as fc, krr, nnet, pso, refdyn

_CAPTURE = None


@pytest.fixture(autouse=True)
def _terminal(capfd):
    """Let _report bypass output capture so every criterion prints a line."""
    global _CAPTURE
    _CAPTURE = capfd
    yield
    _CAPTURE = None


def _report(num, name, ok, detail=""):
    tail = f" ({detail})" if detail else ""
    line = f"ACCEPTANCE {num:2d} {name}: {'PASS' if ok else 'FAIL'}{tail}"
    with _CAPTURE.disabled():
        print(line, flush=True)
    assert ok, line


EXPECTED_COUNTS = {
    "cnn1d": 530_258, "ffnn": 520_045, "lstm": 528_577, "gru": 553_453,
    "rnn": 535_468, "clstm": 501_965, "cgru": 515_806, "crnn": 513_673,
    "cblstm": 568_022, "cbgru": 514_860, "cbrnn": 508_842, "blstm": 511_809,
    "bgru": 534_991, "brnn": 511_959,
}


def test_01_parameter_counts():
    mismatches = {
        name: (nnet.count_parameters(nnet.ARCHITECTURES[name]), expected)
        for name, expected in EXPECTED_COUNTS.items()
        if nnet.count_parameters(nnet.ARCHITECTURES[name]) != expected
    }
    _report(1, "parameter-count oracle (14 architectures, exact)",
            not mismatches, detail=str(mismatches) if mismatches else "all exact")


def test_02_structural_ratios():
    def cell_params(kind, units, bidirectional=False):
        spec = nnet.NetSpec(
            name="probe",
            layers=(nnet.recurrent(kind, units, bidirectional),
                    nnet.flatten(), nnet.dense(1, "linear")),
            input_length=7,
            input_channels=3,
        )
        out_units = units * (2 if bidirectional else 1)
        head = 7 * out_units + 1
        return nnet.count_parameters(spec) - head

    lstm_is_4x = cell_params("lstm", 11) == 4 * cell_params("rnn", 11)
    bi_is_2x = all(
        cell_params(kind, 9, True) == 2 * cell_params(kind, 9)
        for kind in ("rnn", "lstm", "gru")
    )
    _report(2, "structural ratios (LSTM=4x RNN, bidirectional=2x)",
            lstm_is_4x and bi_is_2x)


def test_03_reference_dynamics_limits():
    # Decoupled symmetric system: <sigma_z(t)> = cos(t).
    free = refdyn.heom_propagate(
        refdyn.SpinBosonParams(epsilon=0.0, lam=0.0),
        refdyn.HierarchyConfig(depth=1, n_matsubara=0),
    )
    cos_err = float(np.abs(free.values - np.cos(free.times)).max())

    # Zero tunneling: the population is frozen at +1 despite the bath.
    frozen = refdyn.heom_propagate(
        refdyn.SpinBosonParams(epsilon=1.0, delta=0.0, lam=0.5, omega_c=4.0, beta=0.5),
        refdyn.HierarchyConfig(depth=5, n_matsubara=3),
    )
    frozen_err = float(np.abs(frozen.values - 1.0).max())

    # Self-convergence under (depth+1, modes+1) on five stratified grid points.
    points = [
        (0.0, 1.0, 1.0, 1.0),
        (0.0, 0.5, 5.0, 0.25),
        (1.0, 0.3, 3.0, 0.5),
        (1.0, 1.0, 1.0, 0.5),
        (0.0, 1.0, 10.0, 0.1),
    ]
    worst = 0.0
    for eps, lam, wc, beta in points:
        p = refdyn.SpinBosonParams(epsilon=eps, lam=lam, omega_c=wc, beta=beta)
        config = refdyn.suggest_hierarchy_config(p)
        refined = config.replace(depth=config.depth + 1,
                                 n_matsubara=config.n_matsubara + 1)
        diff = np.abs(
            refdyn.heom_propagate(p, config).values
            - refdyn.heom_propagate(p, refined).values
        ).max()
        worst = max(worst, float(diff))

    ok = cos_err < 1e-3 and frozen_err < 1e-10 and worst < 1e-4
    _report(3, "reference-dynamics limits",
            ok, f"cos {cos_err:.1e}, frozen {frozen_err:.1e}, self-conv {worst:.1e}")


def test_04_kernel_identities():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1000, 8))
    y = rng.normal(size=(1000, 8))
    m0 = krr.KernelSpec(family="matern", sigma=1.7, n=0)
    ex = krr.KernelSpec(family="exponential", sigma=1.7)
    d0 = np.abs(
        np.array([krr.kernel_eval(m0, a, b) for a, b in zip(x[:50], y[:50])])
        - np.array([krr.kernel_eval(ex, a, b) for a, b in zip(x[:50], y[:50])])
    ).max()
    full = np.abs(
        krr.kernel_matrix(m0, x, y) - krr.kernel_matrix(ex, x, y)
    ).max()
    matern_ok = max(float(d0), float(full)) < 1e-12

    # Linear-kernel dual (alpha) and primal (beta) predictions agree.
    xt = rng.normal(size=(60, 10))
    yt = rng.normal(size=60)
    model = krr.krr_train((xt, yt), krr.KernelSpec(family="linear"), 1e-4)
    beta = krr.extract_ridge_coefficients(model)
    q = rng.normal(size=(40, 10))
    beta_err = float(np.abs(q @ beta - krr.krr_predict_batch(model, q)).max())

    # Solve residual and tiny-N dense-inverse agreement.
    spec = krr.KernelSpec(family="gaussian", sigma=1.0)
    xs = rng.normal(size=(12, 4))
    ys = rng.normal(size=12)
    lam = 1e-6
    small = krr.krr_train((xs, ys), spec, lam)
    k = krr.kernel_matrix(spec, xs)
    residual = float(np.abs((k + lam * np.eye(12)) @ small.alphas - ys).max())
    rel_residual = residual / float(np.abs(ys).max())
    dense = np.linalg.inv(k + lam * np.eye(12)) @ ys
    dense_err = float(np.abs(small.alphas - dense).max())

    ok = matern_ok and beta_err < 1e-10 and rel_residual < 1e-8 and dense_err < 1e-8
    _report(4, "kernel identities",
            ok, f"matern0 {max(d0, full):.1e}, beta {beta_err:.1e}, "
                f"residual {rel_residual:.1e}, dense {dense_err:.1e}")


def test_05_gradient_correctness():
    cases = {
        "dense": (nnet.dense(12, "relu"), nnet.dense(1, "linear")),
        "conv+maxpool": (nnet.conv1d(5, 4), nnet.maxpool1d(2, 2),
                         nnet.flatten(), nnet.dense(1, "linear")),
        "rnn": (nnet.recurrent("rnn", 6), nnet.flatten(), nnet.dense(1, "linear")),
        "lstm": (nnet.recurrent("lstm", 5), nnet.flatten(), nnet.dense(1, "linear")),
        "gru": (nnet.recurrent("gru", 5), nnet.flatten(), nnet.dense(1, "linear")),
        "bidirectional": (nnet.recurrent("lstm", 4, True),
                          nnet.flatten(), nnet.dense(1, "linear")),
    }
    worst = {}
    for name, layers in cases.items():
        spec = nnet.NetSpec(name=name, layers=layers, input_length=10)
        model = nnet.build_custom_model(spec, seed=1)
        window = np.random.default_rng(2).normal(size=10)
        worst[name] = nnet.gradient_check(model, window, label=0.23,
                                          max_entries_per_array=32)
    bad = {k: f"{v:.1e}" for k, v in worst.items() if v >= 1e-6}
    _report(5, "gradient correctness (finite differences < 1e-6)",
            not bad, detail=str(bad) if bad else f"worst {max(worst.values()):.1e}")


def test_06_pipeline_counts():
    n_grid = len(datapipe.parameter_grid(datapipe.PAPER_GRID))

    # Synthetic damped-cosine stand-ins exercise the slicing arithmetic; the
    # full physical grid (tens of CPU-hours) is out of scope for the suite.
    t = np.arange(201) * 0.1
    trajectories = [
        refdyn.Trajectory(p, t, np.cos((1 + 0.3 * p.lam) * t) * np.exp(-p.lam * t))
        for p in datapipe.parameter_grid(datapipe.PAPER_GRID)
    ]
    holdout, remaining = datapipe.holdout_select(trajectories, 100, seed=0)
    train = datapipe.build_dataset(remaining, slice_length=42, seed=0)
    subtrain, validation = datapipe.split_subtrain(train, 0.8, seed=0)

    ok = (
        n_grid == 1000
        and len(holdout) == 100
        and len(remaining) == 900
        and len(train) == 144_000
        and len(subtrain) == 115_200
        and len(validation) == 28_800
    )
    _report(6, "pipeline counts (1000 grid, 100 holdout, 144000 samples, 80/20)",
            ok, f"train {len(train)}, subtrain {len(subtrain)}, val {len(validation)}")


def test_07_desk_scale_krr_forecasting(reduced_grid_trajectories):
    holdout, remaining = datapipe.holdout_select(reduced_grid_trajectories, 10, seed=0)
    train = datapipe.build_dataset(remaining, 42, "train", seed=0)
    subtrain, validation = datapipe.split_subtrain(train, 0.8, seed=0)

    # Length scale from a cheap coarse search; lambda re-selected at the
    # final training size, where ill-conditioned candidates are skipped.
    coarse = krr.SearchGrid(lambda_values=tuple(2.0**k for k in range(-35, -4, 3)))
    results = []
    for seed in (0, 1, 2):
        tr_search = datapipe.subsample(subtrain, 1000, seed)
        va_search = datapipe.subsample(validation, 1000, seed)
        tr_final = datapipe.subsample(subtrain, 4000, seed)

        spec_g, _, _ = krr.hyperparameter_search(
            tr_search, va_search, "gaussian", grid=coarse, seed=seed)
        spec_g, lam_g, _ = krr.hyperparameter_search(
            tr_final, va_search, "gaussian",
            grid=krr.SearchGrid(sigma_values=(spec_g.sigma,)), seed=seed,
        )
        spec_l, lam_l, _ = krr.hyperparameter_search(tr_final, va_search, "linear", seed=seed)

        gaussian = fc.Forecaster(krr.krr_train(tr_final, spec_g, lam_g), name="krr-g")
        linear = fc.Forecaster(krr.krr_train(tr_final, spec_l, lam_l), name="krr-l")
        report = fc.run_benchmark([gaussian, linear], holdout)
        maes = {r.name: r.mae for r in report.rows}
        results.append((seed, maes["krr-g"], maes["krr-l"]))

    margin_ok = all(l >= 2.0 * g for _, g, l in results)
    absolute_ok = all(g < 1e-2 for _, g, _ in results)
    detail = "; ".join(f"seed {s}: G {g:.1e} L {l:.1e}" for s, g, l in results)
    _report(7, "desk-scale KRR forecasting (G<L/2 and G<1e-2, 3 seeds)",
            margin_ok and absolute_ok, detail)


def test_08_desk_scale_cgru(reduced_grid_trajectories):
    holdout, remaining = datapipe.holdout_select(reduced_grid_trajectories, 10, seed=0)
    train = datapipe.build_dataset(remaining, 42, "train", seed=0)
    subtrain, validation = datapipe.split_subtrain(train, 0.8, seed=0)

    model = nnet.build_model("cgru", seed=0)
    history = nnet.train(
        model,
        datapipe.subsample(subtrain, 5000, seed=0),
        nnet.TrainOpts(learning_rate=1e-4, batch_size=128, epochs=30, seed=0),
        validation=datapipe.subsample(validation, 2000, seed=0),
    )
    val_mse = history[-1]["val_mse"]

    forecaster = fc.Forecaster(model, name="cgru")
    bounded = True
    for traj in holdout[:5]:
        try:
            predicted, _, _ = fc.forecast_trajectory(forecaster, traj)
        except fc.ForecastDivergence:
            bounded = False
            break
        bounded = bounded and bool(np.isfinite(predicted).all()) \
            and float(np.abs(predicted).max()) < 1.5
    _report(8, "desk-scale CGRU (val MSE < 1e-3, bounded forecasts)",
            val_mse < 1e-3 and bounded, f"val MSE {val_mse:.1e}")


def test_09_pso():
    # Sphere minimum with the classical stochastic update (the deterministic
    # variant stalls near 2e-3 at this budget; see the project notes).
    config = pso.PsoConfig(
        bounds=tuple((-5.0, 5.0) for _ in range(4)),
        n_particles=12, n_generations=50, seed=0, stochastic=True,
    )
    _, best, history = pso.pso_optimize(lambda x: float(np.sum(np.asarray(x) ** 2)), config)
    sphere_ok = best < 1e-3

    # Deterministic single-step update against a hand oracle.
    det = pso.PsoConfig(bounds=((-10.0, 10.0), (-10.0, 10.0)), n_particles=1, seed=0)
    swarm = pso.Swarm(
        particles=[pso.Particle(
            position=np.array([1.0, -2.0]),
            velocity=np.array([0.3, 0.1]),
            best_position=np.array([0.5, -1.0]),
            best_fitness=1.25,
        )],
        best_position=np.array([0.2, 0.4]),
        best_fitness=0.2,
        rng=np.random.default_rng(0),
    )
    pso.pso_step(swarm, lambda x: float(np.sum(np.asarray(x) ** 2)), det)
    v = 0.729 * np.array([0.3, 0.1]) \
        + 1.49445 * (np.array([0.5, -1.0]) - np.array([1.0, -2.0])) \
        + 1.49445 * (np.array([0.2, 0.4]) - np.array([1.0, -2.0]))
    x = np.array([1.0, -2.0]) + v
    step_err = float(np.abs(swarm.particles[0].position - x).max())

    bests = [row["best_fitness"] for row in history]
    monotone = all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))

    _report(9, "PSO (sphere < 1e-3, exact step update, monotone best)",
            sphere_ok and step_err < 1e-12 and monotone,
            f"sphere {best:.1e}, step {step_err:.1e}")


def test_10_determinism(tmp_path):
    t = np.arange(120) * 0.1
    trajectories = [
        refdyn.Trajectory(
            refdyn.SpinBosonParams(epsilon=0.0, lam=0.1 * (k + 1), omega_c=2.0, beta=0.5),
            t, np.cos((1 + 0.1 * k) * t) * np.exp(-0.1 * t),
        )
        for k in range(5)
    ]

    def build_files(tag):
        data = datapipe.build_dataset(trajectories, 12, seed=7)
        data_path = tmp_path / f"data_{tag}.csv"
        datapipe.save_dataset(data, data_path)
        capped = datapipe.subsample(data, 300, seed=7)
        model = krr.krr_train(capped, krr.KernelSpec(family="gaussian", sigma=2.0), 1e-6)
        model_path = tmp_path / f"model_{tag}.model"
        krr.save_krr_model(model, model_path)
        net = nnet.build_custom_model(
            nnet.NetSpec(name="tiny", layers=(nnet.dense(5, "relu"), nnet.dense(1, "linear")),
                         input_length=11),
            seed=7,
        )
        history = nnet.train(net, capped, nnet.TrainOpts(epochs=2, seed=7))
        return data_path.read_bytes(), model_path.read_bytes(), history

    d1, m1, h1 = build_files("a")
    d2, m2, h2 = build_files("b")
    histories_equal = all(
        a["train_mse"] == b["train_mse"] and a["train_mae"] == b["train_mae"]
        for a, b in zip(h1, h2)
    )
    _report(10, "determinism (byte-identical artifacts, identical histories)",
            d1 == d2 and m1 == m2 and histories_equal)
