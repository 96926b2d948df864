"""Shared fixtures.

The acceptance tests need a reduced grid of 100 reference trajectories
(epsilon=0, lambda in 0.1..0.5, omega_c in 2..6, beta in 0.25..1.0).
Propagating them takes roughly fifteen minutes, so the files are cached in a
directory reused across test runs; set SBFORECAST_TEST_DATA to relocate it.
"""

import os

import pytest

from sbforecast import datapipe, refdyn

REDUCED_GRID = datapipe.GridSpec(
    epsilon_values=(0.0,),
    lambda_values=(0.1, 0.2, 0.3, 0.4, 0.5),
    omega_c_values=(2.0, 3.0, 4.0, 5.0, 6.0),
    beta_values=(0.25, 0.5, 0.75, 1.0),
)


@pytest.fixture(scope="session")
def reduced_grid_trajectories():
    cache = os.environ.get("SBFORECAST_TEST_DATA", "/tmp/sbforecast_test_data")
    os.makedirs(cache, exist_ok=True)
    trajectories = []
    for params in datapipe.parameter_grid(REDUCED_GRID):
        path = os.path.join(cache, refdyn.trajectory_filename(params))
        if not os.path.exists(path):
            config = refdyn.suggest_hierarchy_config(params)
            refdyn.save_trajectory(refdyn.heom_propagate(params, config), path)
        trajectories.append(refdyn.load_trajectory(path))
    return trajectories
