"""Particle swarm optimization for hyperparameter tuning.

The velocity update follows the deterministic form

    v(t+1) = w*v(t) + c_p*(x_p - x) + c_g*(x_g - x)
    x(t+1) = x(t) + v(t+1)

with inertia w, cognitive coefficient c_p toward the particle's own best
x_p, and social coefficient c_g toward the swarm best x_g.  The classical
stochastic variant (uniform(0,1) factors on the cognitive and social terms)
is available behind a flag.  Positions leaving the bounds are re-drawn per
coordinate, uniformly within that coordinate's initial interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["PsoConfig", "Particle", "Swarm", "pso_step", "pso_optimize", "save_history"]


@dataclass(frozen=True)
class PsoConfig:
    """Swarm size, coefficients, per-dimension bounds, and the run seed."""

    bounds: tuple  # ((lo, hi), ...) per dimension
    n_particles: int = 3
    n_generations: int = 50
    w: float = 0.729
    c_p: float = 1.49445
    c_g: float = 1.49445
    seed: int = 0
    stochastic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds))
        if self.n_particles < 1 or self.n_generations < 1:
            raise ValueError("n_particles and n_generations must be >= 1")
        if min(self.w, self.c_p, self.c_g) < 0:
            raise ValueError("coefficients must be non-negative")
        for lo, hi in self.bounds:
            if lo >= hi:
                raise ValueError(f"invalid bound ({lo}, {hi}): lo must be < hi")

    @property
    def n_dims(self) -> int:
        return len(self.bounds)


@dataclass
class Particle:
    """Position, velocity, and the best point this particle has visited."""

    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float
    fitness: float = math.inf  # most recent evaluation


@dataclass
class Swarm:
    particles: list
    best_position: np.ndarray
    best_fitness: float
    rng: np.random.Generator


def _evaluate(objective, position: np.ndarray) -> float:
    """Objective value with the NaN -> +inf policy."""
    value = float(objective(position))
    if math.isnan(value):
        return math.inf
    return value


def _init_swarm(objective, config: PsoConfig) -> Swarm:
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    particles = []
    best_pos, best_fit = None, math.inf
    for _ in range(config.n_particles):
        pos = rng.uniform(lo, hi)
        vel = np.zeros_like(pos)
        fit = _evaluate(objective, pos)
        particles.append(Particle(pos.copy(), vel, pos.copy(), fit, fitness=fit))
        if best_pos is None or fit < best_fit:
            best_pos, best_fit = pos.copy(), fit
    return Swarm(particles=particles, best_position=best_pos, best_fitness=best_fit, rng=rng)


def pso_step(swarm: Swarm, objective, config: PsoConfig) -> Swarm:
    """One synchronous generation: velocity/position update, then re-evaluation."""
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    for particle in swarm.particles:
        if config.stochastic:
            r_p = swarm.rng.uniform(size=config.n_dims)
            r_g = swarm.rng.uniform(size=config.n_dims)
        else:
            r_p = r_g = 1.0
        particle.velocity = (
            config.w * particle.velocity
            + config.c_p * r_p * (particle.best_position - particle.position)
            + config.c_g * r_g * (swarm.best_position - particle.position)
        )
        particle.position = particle.position + particle.velocity
        outside = (particle.position < lo) | (particle.position > hi)
        if np.any(outside):
            redraw = swarm.rng.uniform(lo, hi)
            particle.position = np.where(outside, redraw, particle.position)
        fitness = _evaluate(objective, particle.position)
        particle.fitness = fitness
        if fitness < particle.best_fitness:
            particle.best_fitness = fitness
            particle.best_position = particle.position.copy()
        if fitness < swarm.best_fitness:
            swarm.best_fitness = fitness
            swarm.best_position = particle.position.copy()
    return swarm


def pso_optimize(objective, config: PsoConfig):
    """Run the swarm for n_generations; returns (best position, best fitness, history).

    History has one row per (generation, particle):
    dicts with generation, particle, fitness, best_fitness, position.
    """
    swarm = _init_swarm(objective, config)
    history = []
    for generation in range(1, config.n_generations + 1):
        pso_step(swarm, objective, config)
        for i, particle in enumerate(swarm.particles):
            history.append(
                {
                    "generation": generation,
                    "particle": i,
                    "fitness": particle.fitness,
                    "best_fitness": swarm.best_fitness,
                    "position": particle.position.copy(),
                }
            )
    return swarm.best_position.copy(), swarm.best_fitness, history


def save_history(history, path) -> None:
    """CSV rows: generation,particle,fitness,best_fitness,position..."""
    if not history:
        raise ValueError("empty history")
    n_dims = len(history[0]["position"])
    pos_cols = ",".join(f"x_{i+1}" for i in range(n_dims))
    with open(path, "w") as fh:
        fh.write(f"generation,particle,fitness,best_fitness,{pos_cols}\n")
        for row in history:
            pos = ",".join(f"{v:.17g}" for v in row["position"])
            fh.write(
                f"{row['generation']},{row['particle']},{row['fitness']:.17g},"
                f"{row['best_fitness']:.17g},{pos}\n"
            )
