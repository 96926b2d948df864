"""Parameter grids, window slicing, and dataset splits.

Trajectories are cut into fixed-length supervised samples: a window of T
consecutive population-difference values paired with the next value as the
label.  Splits keep hold-out trajectories disjoint from everything used for
training, while the sub-training/validation split is drawn at sample level.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .refdyn import SpinBosonParams, Trajectory

__all__ = [
    "GridSpec",
    "SlicedSample",
    "Dataset",
    "parameter_grid",
    "grid_point_id",
    "slice_trajectory",
    "holdout_select",
    "build_dataset",
    "split_subtrain",
    "save_dataset",
    "load_dataset",
    "save_split_manifest",
    "PAPER_GRID",
    "SYMMETRIC_GRID",
    "ASYMMETRIC_GRID",
]

DEFAULT_WINDOW = 41  # slices of length 42: 41 inputs + 1 label


@dataclass(frozen=True)
class GridSpec:
    """Lists of physics-grid values whose Cartesian product defines the runs."""

    epsilon_values: tuple
    lambda_values: tuple
    omega_c_values: tuple
    beta_values: tuple

    def __post_init__(self):
        for name in ("epsilon_values", "lambda_values", "omega_c_values", "beta_values"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, tuple(float(v) for v in vals))

    @property
    def n_points(self) -> int:
        return (
            len(self.epsilon_values)
            * len(self.lambda_values)
            * len(self.omega_c_values)
            * len(self.beta_values)
        )


PAPER_GRID = GridSpec(
    epsilon_values=(0.0, 1.0),
    lambda_values=tuple(0.1 * k for k in range(1, 11)),
    omega_c_values=tuple(float(k) for k in range(1, 11)),
    beta_values=(0.1, 0.25, 0.5, 0.75, 1.0),
)
SYMMETRIC_GRID = GridSpec((0.0,), PAPER_GRID.lambda_values, PAPER_GRID.omega_c_values, PAPER_GRID.beta_values)
ASYMMETRIC_GRID = GridSpec((1.0,), PAPER_GRID.lambda_values, PAPER_GRID.omega_c_values, PAPER_GRID.beta_values)


@dataclass(frozen=True)
class SlicedSample:
    """One supervised sample: an input window and the next-step label."""

    input: np.ndarray
    label: float
    origin: tuple  # (grid-point id, slice offset)

    def __post_init__(self):
        object.__setattr__(self, "input", np.asarray(self.input, dtype=float))


@dataclass
class Dataset:
    """Collection of equal-length windows carrying a split tag."""

    samples: list
    window_length: int
    split_tag: str = "train"

    VALID_TAGS = ("train", "subtrain", "validation", "holdout")

    def __post_init__(self):
        if self.split_tag not in self.VALID_TAGS:
            raise ValueError(f"unknown split tag {self.split_tag!r}")
        for s in self.samples:
            if len(s.input) != self.window_length:
                raise ValueError(
                    f"sample window {len(s.input)} != dataset window {self.window_length}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def arrays(self):
        """(X, y) matrices for vectorized consumers."""
        x = np.array([s.input for s in self.samples])
        y = np.array([s.label for s in self.samples])
        return x, y


def parameter_grid(spec: GridSpec):
    """Cartesian product of the grid lists in lexicographic order."""
    return [
        SpinBosonParams(epsilon=e, lam=l, omega_c=w, beta=b)
        for e, l, w, b in itertools.product(
            spec.epsilon_values, spec.lambda_values, spec.omega_c_values, spec.beta_values
        )
    ]


def grid_point_id(params: SpinBosonParams) -> str:
    return f"eps{params.epsilon:g}_lam{params.lam:g}_wc{params.omega_c:g}_beta{params.beta:g}"


def slice_trajectory(traj: Trajectory, slice_length: int, grid_id: str | None = None):
    """All stride-1 slices of length ``slice_length``; window T = slice_length - 1."""
    n = len(traj)
    if slice_length < 2:
        raise ValueError(f"slice length must be >= 2, got {slice_length}")
    if n < slice_length:
        raise ValueError(
            f"trajectory length {n} is shorter than slice length {slice_length}"
        )
    gid = grid_id if grid_id is not None else grid_point_id(traj.params)
    values = traj.values
    return [
        SlicedSample(
            input=values[j : j + slice_length - 1],
            label=float(values[j + slice_length - 1]),
            origin=(gid, j),
        )
        for j in range(n - slice_length + 1)
    ]


def holdout_select(trajectories, n: int, seed: int):
    """Split trajectories into (holdout, remaining), deterministic under seed."""
    if n > len(trajectories):
        raise ValueError(f"cannot hold out {n} of {len(trajectories)} trajectories")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(trajectories))
    hold_idx = set(order[:n].tolist())
    holdout = [t for i, t in enumerate(trajectories) if i in hold_idx]
    remaining = [t for i, t in enumerate(trajectories) if i not in hold_idx]
    return holdout, remaining


def build_dataset(trajectories, slice_length: int, split_tag: str = "train", seed: int | None = None):
    """Slice every trajectory and pool the samples into one Dataset.

    When a seed is given the pooled sample order is shuffled once, so later
    mini-batching is reproducible without reshuffling.
    """
    samples = []
    for traj in trajectories:
        samples.extend(slice_trajectory(traj, slice_length))
    if seed is not None:
        rng = np.random.default_rng(seed)
        samples = [samples[i] for i in rng.permutation(len(samples))]
    return Dataset(samples=samples, window_length=slice_length - 1, split_tag=split_tag)


def split_subtrain(train: Dataset, fraction: float, seed: int):
    """Sample-level random split into (subtrain, validation)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if len(train) == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train))
    n_sub = int(fraction * len(train))
    sub = [train.samples[i] for i in order[:n_sub]]
    val = [train.samples[i] for i in order[n_sub:]]
    return (
        Dataset(sub, train.window_length, "subtrain"),
        Dataset(val, train.window_length, "validation"),
    )


def subsample(data: Dataset, n: int, seed: int) -> Dataset:
    """Seeded subset of at most n samples, preserving the split tag."""
    if n >= len(data):
        return data
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(data))[:n]
    return Dataset([data.samples[i] for i in idx], data.window_length, data.split_tag)


def save_dataset(data: Dataset, path) -> None:
    """CSV rows: grid_id,offset,x_1,...,x_T,y."""
    t = data.window_length
    header = "grid_id,offset," + ",".join(f"x_{i+1}" for i in range(t)) + ",y"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for s in data.samples:
            xs = ",".join(f"{v:.17g}" for v in s.input)
            fh.write(f"{s.origin[0]},{s.origin[1]},{xs},{s.label:.17g}\n")


def load_dataset(path, split_tag: str = "train") -> Dataset:
    samples = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        t = len(header) - 3
        for line in fh:
            parts = line.rstrip("\n").split(",")
            gid, offset = parts[0], int(parts[1])
            vals = np.array([float(v) for v in parts[2:]])
            samples.append(SlicedSample(input=vals[:-1], label=float(vals[-1]), origin=(gid, offset)))
    return Dataset(samples=samples, window_length=t, split_tag=split_tag)


def save_split_manifest(path, seed: int, splits: dict) -> None:
    """JSON manifest: grid ids per split plus the seed that produced them."""
    payload = {"seed": seed, "splits": {k: sorted(v) for k, v in splits.items()}}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
