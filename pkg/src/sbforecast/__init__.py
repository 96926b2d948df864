"""Spin-boson long-time dynamics forecasting workbench.

Modules
-------
refdyn    numerically exact reference trajectories (hierarchical propagator)
datapipe  parameter grids, window slicing, dataset splits
krr       kernel ridge regression engine
nnet      from-scratch neural-network engine (14 benchmark architectures)
pso       particle swarm optimizer
forecast  recursive forecasting and the accuracy/timing benchmark
plotting  figure rendering for reports
cli       command-line front end
"""

from . import datapipe, forecast, krr, nnet, pso, refdyn

__version__ = "0.1.0"

__all__ = ["datapipe", "forecast", "krr", "nnet", "pso", "refdyn", "__version__"]
