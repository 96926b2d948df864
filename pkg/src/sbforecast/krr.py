"""Kernel ridge regression for next-step time-series prediction.

A trained model predicts f(x) = sum_i alpha_i k(x, x_i) where the alphas
solve the regularized linear system (K + lambda*I) alpha = y.  Five kernel
families are provided; the Matern family takes an integer order n and
reduces to the exponential kernel at n = 0, so the standard benchmark set
{linear, gaussian, exponential, matern n=1..4, decaying periodic} spans
eight kernels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .datapipe import Dataset, SlicedSample, subsample

__all__ = [
    "KernelSpec",
    "KrrModel",
    "SearchGrid",
    "kernel_eval",
    "kernel_matrix",
    "krr_train",
    "krr_predict",
    "krr_predict_batch",
    "extract_ridge_coefficients",
    "hyperparameter_search",
    "save_krr_model",
    "load_krr_model",
    "DEFAULT_SIGMA_GRID",
    "DEFAULT_LAMBDA_GRID",
    "DEFAULT_TRAIN_CAP",
]

KERNEL_FAMILIES = ("linear", "gaussian", "exponential", "matern", "decaying_periodic")

# Logarithmic hyperparameter grids, powers of two.
DEFAULT_SIGMA_GRID = tuple(2.0**k for k in range(-5, 16))
DEFAULT_LAMBDA_GRID = tuple(2.0**k for k in range(-35, -4))
DEFAULT_TRAIN_CAP = 6000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus the hyperparameters that family requires."""

    family: str
    sigma: float | None = None
    n: int | None = None
    p: float | None = None
    sigma_p: float | None = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        needs_sigma = self.family != "linear"
        if needs_sigma:
            if self.sigma is None or self.sigma <= 0:
                raise ValueError(f"{self.family} kernel requires sigma > 0")
        elif self.sigma is not None:
            raise ValueError("linear kernel takes no length scale")
        if self.family == "matern":
            if self.n is None or self.n < 0 or int(self.n) != self.n:
                raise ValueError("matern kernel requires a non-negative integer n")
            object.__setattr__(self, "n", int(self.n))
        elif self.n is not None:
            raise ValueError("order n only applies to the matern family")
        if self.family == "decaying_periodic":
            if self.p is None or self.p <= 0 or self.sigma_p is None or self.sigma_p <= 0:
                raise ValueError("decaying_periodic kernel requires p > 0 and sigma_p > 0")
        elif self.p is not None or self.sigma_p is not None:
            raise ValueError("period parameters only apply to decaying_periodic")


@dataclass
class KrrModel:
    """Trained kernel ridge model: stored windows plus their alpha weights."""

    spec: KernelSpec
    lambda_reg: float
    alphas: np.ndarray
    training_inputs: np.ndarray

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.training_inputs = np.atleast_2d(np.asarray(self.training_inputs, dtype=float))
        if len(self.alphas) != len(self.training_inputs):
            raise ValueError("alphas and training inputs must have equal length")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be non-negative")

    @property
    def window_length(self) -> int:
        return self.training_inputs.shape[1]


def _pairwise_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between rows of x and rows of y."""
    sq = np.sum(x**2, axis=1)[:, None] + np.sum(y**2, axis=1)[None, :]
    sq -= 2.0 * (x @ y.T)
    return np.sqrt(np.maximum(sq, 0.0))


def _kernel_from_distances(spec: KernelSpec, d: np.ndarray) -> np.ndarray:
    if spec.family == "gaussian":
        return np.exp(-(d**2) / (2.0 * spec.sigma**2))
    if spec.family == "exponential":
        return np.exp(-d / spec.sigma)
    if spec.family == "matern":
        n = spec.n
        r = 2.0 * d / spec.sigma
        acc = np.zeros_like(d)
        for k in range(n + 1):
            coef = math.factorial(n + k) / math.factorial(2 * n) * math.comb(n, k)
            acc += coef * r ** (n - k)
        return np.exp(-d / spec.sigma) * acc
    if spec.family == "decaying_periodic":
        return np.exp(
            -(d**2) / (2.0 * spec.sigma**2)
            - 2.0 / spec.sigma_p**2 * np.sin(np.pi * d / spec.p) ** 2
        )
    raise ValueError(f"no distance form for family {spec.family!r}")


def kernel_matrix(spec: KernelSpec, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Matrix of kernel values between rows of x and rows of y (default x)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = x if y is None else np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"window length mismatch: {x.shape[1]} vs {y.shape[1]}")
    if spec.family == "linear":
        return x @ y.T
    return _kernel_from_distances(spec, _pairwise_distances(x, y))


def kernel_eval(spec: KernelSpec, x_i, x_j) -> float:
    """Kernel value for one pair of equal-length windows."""
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != x_j.shape:
        raise ValueError(f"window length mismatch: {x_i.shape} vs {x_j.shape}")
    return float(kernel_matrix(spec, x_i[None, :], x_j[None, :])[0, 0])


def _dataset_arrays(data):
    if isinstance(data, Dataset):
        return data.arrays()
    x, y = data
    return np.atleast_2d(np.asarray(x, dtype=float)), np.asarray(y, dtype=float)


def _solve_regularized(k: np.ndarray, lambda_reg: float, y: np.ndarray) -> np.ndarray:
    """Solve (K + lambda*I) alpha = y by Cholesky with jitter escalation.

    K is positive semidefinite in exact arithmetic; roundoff can make the
    shifted matrix numerically indefinite when lambda is tiny, so a small
    diagonal jitter proportional to the mean diagonal is added up to three
    times before giving up.
    """
    from scipy.linalg import cho_factor, cho_solve

    n = len(y)
    a = k + lambda_reg * np.eye(n)
    jitter = 1e-10 * float(np.mean(np.diag(k)))
    for attempt in range(4):
        try:
            c = cho_factor(a, lower=True)
            return cho_solve(c, y)
        except np.linalg.LinAlgError:
            if attempt == 3:
                break
            a = a + jitter * np.eye(n)
    cond = float(np.linalg.cond(k + lambda_reg * np.eye(n)))
    raise np.linalg.LinAlgError(
        f"kernel system not positive definite after jitter escalation "
        f"(condition estimate {cond:.3e})"
    )


def krr_train(data, spec: KernelSpec, lambda_reg: float, gram: np.ndarray | None = None) -> KrrModel:
    """Fit alpha coefficients on a Dataset (or an (X, y) pair).

    ``gram`` optionally supplies a precomputed kernel matrix so that grid
    searches can reuse it across regularization values.
    """
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be non-negative")
    x, y = _dataset_arrays(data)
    if len(y) < 1:
        raise ValueError("training set must contain at least one sample")
    k = kernel_matrix(spec, x) if gram is None else gram
    k = 0.5 * (k + k.T)
    alphas = _solve_regularized(k, lambda_reg, y)
    residual = np.abs((k + lambda_reg * np.eye(len(y))) @ alphas - y).max()
    scale = max(np.abs(y).max(), 1e-300)
    if residual > 1e-8 * scale:
        raise np.linalg.LinAlgError(
            f"solve residual {residual:.3e} exceeds 1e-8 * max|y| = {1e-8 * scale:.3e} "
            f"(condition estimate {np.linalg.cond(k + lambda_reg * np.eye(len(y))):.3e})"
        )
    return KrrModel(spec=spec, lambda_reg=float(lambda_reg), alphas=alphas, training_inputs=x)


def krr_predict_batch(model: KrrModel, x: np.ndarray) -> np.ndarray:
    """Predictions for a matrix of windows, one per row."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.window_length:
        raise ValueError(
            f"window length {x.shape[1]} does not match training length {model.window_length}"
        )
    return kernel_matrix(model.spec, x, model.training_inputs) @ model.alphas


def krr_predict(model: KrrModel, x) -> float:
    """Prediction sum_i alpha_i k(x, x_i) for one window."""
    return float(krr_predict_batch(model, np.asarray(x, dtype=float)[None, :])[0])


def extract_ridge_coefficients(model: KrrModel) -> np.ndarray:
    """beta_s = sum_i alpha_i x_is; valid for the linear kernel only."""
    if model.spec.family != "linear":
        raise ValueError(
            f"ridge coefficients require the linear kernel, got {model.spec.family!r}"
        )
    return model.training_inputs.T @ model.alphas


@dataclass(frozen=True)
class SearchGrid:
    """Candidate grids for hyperparameter_search; defaults are the log grids."""

    sigma_values: tuple = DEFAULT_SIGMA_GRID
    lambda_values: tuple = DEFAULT_LAMBDA_GRID
    matern_n: int = 1
    n_random: int = 128  # decaying_periodic random-search budget
    p_range: tuple = (0.1, 20.0)

    def __post_init__(self):
        if len(self.sigma_values) == 0 or len(self.lambda_values) == 0:
            raise ValueError("hyperparameter grids must be non-empty")


def _candidate_specs(family: str, grid: SearchGrid, seed: int):
    if family == "linear":
        return [KernelSpec(family="linear")]
    if family in ("gaussian", "exponential"):
        return [KernelSpec(family=family, sigma=s) for s in grid.sigma_values]
    if family == "matern":
        return [KernelSpec(family=family, sigma=s, n=grid.matern_n) for s in grid.sigma_values]
    if family == "decaying_periodic":
        rng = np.random.default_rng(seed)
        lo, hi = math.log(min(grid.sigma_values)), math.log(max(grid.sigma_values))
        p_lo, p_hi = (math.log(v) for v in grid.p_range)
        specs = []
        for _ in range(grid.n_random):
            sigma = math.exp(rng.uniform(lo, hi))
            sigma_p = math.exp(rng.uniform(lo, hi))
            p = math.exp(rng.uniform(p_lo, p_hi))
            specs.append(KernelSpec(family=family, sigma=sigma, p=p, sigma_p=sigma_p))
        return specs
    raise ValueError(f"unknown kernel family {family!r}")


def hyperparameter_search(
    train: Dataset,
    validation: Dataset,
    family: str,
    grid: SearchGrid | None = None,
    seed: int = 0,
):
    """Exhaustive (or random, for decaying_periodic) search minimizing validation MAE.

    Returns (best KernelSpec, best lambda, best validation MAE).  Ties are
    broken by the smaller sigma, then the smaller lambda.
    """
    if len(train) == 0 or len(validation) == 0:
        raise ValueError("train and validation splits must be non-empty")
    grid = grid if grid is not None else SearchGrid()
    x_tr, y_tr = _dataset_arrays(train)
    x_val, y_val = _dataset_arrays(validation)

    best = None
    for spec in _candidate_specs(family, grid, seed):
        gram = kernel_matrix(spec, x_tr)
        cross = kernel_matrix(spec, x_val, x_tr)
        for lam in grid.lambda_values:
            try:
                model = krr_train((x_tr, y_tr), spec, lam, gram=gram)
            except np.linalg.LinAlgError:
                continue
            mae = float(np.mean(np.abs(cross @ model.alphas - y_val)))
            key = (mae, spec.sigma if spec.sigma is not None else 0.0, lam)
            if best is None or key < best[0]:
                best = (key, spec, lam)
    if best is None:
        raise np.linalg.LinAlgError("every candidate configuration failed to solve")
    return best[1], best[2], best[0][0]


def save_krr_model(model: KrrModel, path) -> None:
    """One file: a JSON header line, then CSV rows `alpha,x_1,...,x_T`."""
    spec = model.spec
    header = {
        "family": spec.family,
        "sigma": spec.sigma,
        "n": spec.n,
        "p": spec.p,
        "sigma_p": spec.sigma_p,
        "lambda": model.lambda_reg,
        "n_train": int(len(model.alphas)),
        "window_length": int(model.window_length),
    }
    t = model.window_length
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write("alpha," + ",".join(f"x_{i+1}" for i in range(t)) + "\n")
        for a, row in zip(model.alphas, model.training_inputs):
            fh.write(f"{a:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def load_krr_model(path) -> KrrModel:
    with open(path) as fh:
        header = json.loads(fh.readline())
        fh.readline()  # column header
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows])
    spec = KernelSpec(
        family=header["family"],
        sigma=header["sigma"],
        n=header["n"],
        p=header["p"],
        sigma_p=header["sigma_p"],
    )
    return KrrModel(
        spec=spec,
        lambda_reg=float(header["lambda"]),
        alphas=data[:, 0],
        training_inputs=data[:, 1:],
    )
