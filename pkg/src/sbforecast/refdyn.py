"""Numerically exact population dynamics for the spin-boson model.

A two-level system with energy bias ``epsilon`` and tunneling element
``delta`` is coupled through sigma_z to a harmonic bath with a Debye
spectral density.  The reduced dynamics is propagated with a hierarchy of
auxiliary density operators built on the exponential decomposition of the
bath correlation function (one Drude pole plus Matsubara terms).  The
observable of interest is the population difference <sigma_z(t)> starting
from the |+><+| system state and a thermal bath.

All quantities are expressed in units of the tunneling element: energies in
delta, times in 1/delta.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpinBosonParams",
    "HierarchyConfig",
    "Trajectory",
    "ConvergenceError",
    "PropagationError",
    "debye_spectral_density",
    "bath_correlation_modes",
    "bath_correlation_modes_pade",
    "bath_correlation_function",
    "decomposition_tail_sum",
    "sigma_z_expectation",
    "heom_propagate",
    "heom_propagate_rho",
    "propagate_converged",
    "suggest_hierarchy_config",
    "trajectory_filename",
    "save_trajectory",
    "load_trajectory",
]

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)

# [sigma_z, A] and the one-sided sigma_z products are elementwise masks in
# the {|+>, |->} basis; used to avoid 2x2 matmuls in the hot loop.
_SZ_DIAG = np.array([1.0, -1.0])
_COMM_MASK = _SZ_DIAG[:, None] - _SZ_DIAG[None, :]  # [[0,2],[-2,0]]


class ConvergenceError(RuntimeError):
    """Hierarchy refinement failed to reach the requested tolerance."""


class PropagationError(FloatingPointError):
    """NaN or overflow encountered while propagating the hierarchy."""


@dataclass(frozen=True)
class SpinBosonParams:
    """One point of the (epsilon, delta, lambda, omega_c, beta) grid."""

    epsilon: float
    delta: float = 1.0
    lam: float = 0.0
    omega_c: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.omega_c <= 0:
            raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def hamiltonian(self) -> np.ndarray:
        return 0.5 * self.epsilon * SIGMA_Z + 0.5 * self.delta * SIGMA_X


@dataclass(frozen=True)
class HierarchyConfig:
    """Truncation and integration settings for the hierarchy propagation."""

    depth: int = 10
    n_matsubara: int = 3
    dt_integrate: float = 0.01
    t_max: float = 20.0
    dt_save: float = 0.1
    convergence_tol: float = 1e-4
    max_depth: int = 40
    decomposition: str = "pade"

    def __post_init__(self):
        if self.depth < 0 or self.n_matsubara < 0:
            raise ValueError("depth and n_matsubara must be non-negative")
        if self.dt_integrate <= 0 or self.dt_save <= 0 or self.t_max <= 0:
            raise ValueError("time steps and t_max must be positive")
        if self.decomposition not in ("pade", "matsubara"):
            raise ValueError(f"unknown decomposition {self.decomposition!r}")
        if self.dt_integrate > self.dt_save:
            raise ValueError(
                f"dt_integrate={self.dt_integrate} exceeds dt_save={self.dt_save}"
            )
        n_save = self.t_max / self.dt_save
        if abs(n_save - round(n_save)) > 1e-9:
            raise ValueError(
                f"dt_save={self.dt_save} does not divide t_max={self.t_max}"
            )

    @property
    def n_save(self) -> int:
        return round(self.t_max / self.dt_save)

    def replace(self, **kwargs) -> "HierarchyConfig":
        from dataclasses import replace

        return replace(self, **kwargs)


@dataclass
class Trajectory:
    """Uniformly sampled <sigma_z(t)> time series with its grid metadata."""

    params: SpinBosonParams
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        dt = np.diff(self.times)
        if len(dt) and (np.any(dt <= 0) or np.ptp(dt) > 1e-9):
            raise ValueError("times must be strictly increasing and uniform")

    def __len__(self) -> int:
        return len(self.times)


def debye_spectral_density(omega, params: SpinBosonParams):
    """Debye spectral density 2*lam*omega*omega_c / (omega^2 + omega_c^2)."""
    omega = np.asarray(omega, dtype=float)
    wc = params.omega_c
    return 2.0 * params.lam * omega * wc / (omega**2 + wc**2)


def bath_correlation_modes(params: SpinBosonParams, n_matsubara: int):
    """Exponential decomposition C(t) = sum_j c_j exp(-gamma_j t), t >= 0.

    The first pair is the Drude pole with decay rate omega_c; the following
    ``n_matsubara`` pairs carry the Matsubara frequencies 2*pi*k/beta.

    Returns a list of (coefficient, decay_rate) with complex coefficients and
    positive real decay rates.
    """
    if n_matsubara < 0:
        raise ValueError("n_matsubara must be non-negative")
    lam, wc, beta = params.lam, params.omega_c, params.beta
    if beta <= 0 or wc <= 0:
        raise ValueError("beta and omega_c must be positive")

    modes = [(lam * wc * (1.0 / math.tan(beta * wc / 2.0) - 1.0j), wc)]
    for k in range(1, n_matsubara + 1):
        nu_k = 2.0 * math.pi * k / beta
        if abs(nu_k - wc) < 1e-12 * wc:
            raise ValueError(
                f"Matsubara frequency {nu_k} degenerate with omega_c={wc}"
            )
        c_k = 4.0 * lam * wc / beta * nu_k / (nu_k**2 - wc**2)
        modes.append((complex(c_k), nu_k))
    return modes


def _pade_poles(n: int):
    """(eta_j, xi_j) of the [N-1/N] Pade approximant of the Bose function.

    Both pole locations and residues follow from small symmetric eigenvalue
    problems; xi_j/(2*pi) approaches the Matsubara integers while the
    approximant converges orders of magnitude faster in n.
    """
    sub = np.array([1.0 / math.sqrt((2 * m + 1) * (2 * m + 3)) for m in range(1, 2 * n)])
    lam = np.linalg.eigvalsh(np.diag(sub, 1) + np.diag(sub, -1))
    xi = np.sort(2.0 / lam[lam > 1e-12])
    sub = np.array([1.0 / math.sqrt((2 * m + 3) * (2 * m + 5)) for m in range(1, 2 * n - 1)])
    lam = np.linalg.eigvalsh(np.diag(sub, 1) + np.diag(sub, -1))
    zeta = np.sort(2.0 / lam[lam > 1e-12])
    eta = np.empty(n)
    for j in range(n):
        num = np.prod(zeta**2 - xi[j] ** 2) if n > 1 else 1.0
        den = np.prod(np.delete(xi**2, j) - xi[j] ** 2)
        eta[j] = 0.5 * n * (2 * n + 3) * num / den
    return eta, xi


def bath_correlation_modes_pade(params: SpinBosonParams, n_pade: int):
    """Pade variant of the exponential bath decomposition.

    Same (coefficient, decay_rate) layout as ``bath_correlation_modes`` with
    the Drude pair first; the remaining pairs carry shifted rates xi_j/beta
    and reweighted residues.  Preferred by the propagator for its much faster
    convergence at large beta*omega_c.
    """
    lam, wc, beta = params.lam, params.omega_c, params.beta
    if beta <= 0 or wc <= 0:
        raise ValueError("beta and omega_c must be positive")
    if n_pade == 0:
        return bath_correlation_modes(params, 0)
    eta, xi = _pade_poles(n_pade)
    y = beta * wc / 2.0
    cot_p = 1.0 / y + float(np.sum(2.0 * eta * y / (y**2 - (xi / 2.0) ** 2)))
    modes = [(lam * wc * (cot_p - 1.0j), wc)]
    for e_j, x_j in zip(eta, xi):
        g_j = x_j / beta
        if abs(g_j - wc) < 1e-12 * wc:
            raise ValueError(f"Pade frequency {g_j} degenerate with omega_c={wc}")
        c_j = 4.0 * lam * e_j * wc / beta * g_j / (g_j**2 - wc**2)
        modes.append((complex(c_j), g_j))
    return modes


def decomposition_tail_sum(params: SpinBosonParams, modes) -> float:
    """Residual of int_0^inf C(t) dt not captured by the truncated modes.

    The exact integral is 2*lam/(beta*wc) - i*lam; the imaginary part is
    carried entirely by the Drude pair, so the residual is real and can be
    folded into a Markovian double-commutator closure.
    """
    lam, wc, beta = params.lam, params.omega_c, params.beta
    total = 2.0 * lam / (beta * wc)
    partial = sum((c / g).real for c, g in modes)
    return total - partial


def bath_correlation_function(t, params: SpinBosonParams, n_matsubara: int = 200):
    """C(t) evaluated from the truncated exponential decomposition (t > 0)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for c, g in bath_correlation_modes(params, n_matsubara):
        out += c * np.exp(-g * t)
    return out


def sigma_z_expectation(rho: np.ndarray, tol: float = 1e-6) -> float:
    """Population difference rho[0,0] - rho[1,1] of a valid density matrix."""
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 density matrix, got shape {rho.shape}")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"trace {np.trace(rho)} deviates from 1 beyond {tol}")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("density matrix is not Hermitian within tolerance")
    val = rho[0, 0] - rho[1, 1]
    if abs(val.imag) > tol:
        raise ValueError(f"population difference has imaginary part {val.imag}")
    return float(val.real)


def _hierarchy_indices(n_modes: int, depth: int, caps=None):
    """Multi-indices with |n| <= depth and n_j <= caps[j], plus raise/lower maps.

    Per-mode caps keep fast-decaying modes shallow; levels beyond a few quanta
    of a rapidly decaying exponential are negligible yet dominate stiffness.
    """
    if caps is None:
        caps = [depth] * n_modes
    indices = [
        idx
        for idx in itertools.product(*(range(min(c, depth) + 1) for c in caps))
        if sum(idx) <= depth
    ]
    lookup = {idx: i for i, idx in enumerate(indices)}
    n_ado = len(indices)
    up = np.full((n_ado, n_modes), -1, dtype=np.int64)
    down = np.full((n_ado, n_modes), -1, dtype=np.int64)
    for i, idx in enumerate(indices):
        for j in range(n_modes):
            raised = idx[:j] + (idx[j] + 1,) + idx[j + 1 :]
            if sum(raised) <= depth:
                up[i, j] = lookup.get(raised, -1)
            if idx[j] > 0:
                lowered = idx[:j] + (idx[j] - 1,) + idx[j + 1 :]
                down[i, j] = lookup[lowered]
    return np.array(indices, dtype=np.int64), up, down


def _unitary_rho_trajectory(params: SpinBosonParams, config: HierarchyConfig):
    """Closed-system propagation used for the decoupled (lambda = 0) limit."""
    h = params.hamiltonian
    evals, vecs = np.linalg.eigh(h)
    times = np.arange(config.n_save + 1) * config.dt_save
    rho0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    rho0_e = vecs.conj().T @ rho0 @ vecs
    rhos = np.empty((len(times), 2, 2), dtype=complex)
    for i, t in enumerate(times):
        phase = np.exp(-1j * evals * t)
        rho_e = (phase[:, None] * rho0_e) * phase.conj()[None, :]
        rhos[i] = vecs @ rho_e @ vecs.conj().T
    return times, rhos


def heom_propagate_rho(params: SpinBosonParams, config: HierarchyConfig):
    """Propagate the hierarchy and return (times, reduced density matrices).

    Uses scaled auxiliary operators and a fixed-step classical Runge-Kutta
    integrator.  The substep is shrunk below ``dt_integrate`` whenever the
    fastest total decay rate in the hierarchy would violate the explicit
    stability bound.
    """
    if params.lam == 0.0:
        return _unitary_rho_trajectory(params, config)
    if config.depth < 1:
        raise ValueError("depth must be >= 1 for a coupled bath")

    if config.decomposition == "pade":
        modes = bath_correlation_modes_pade(params, config.n_matsubara)
    else:
        modes = bath_correlation_modes(params, config.n_matsubara)
    coeffs = np.array([c for c, _ in modes])
    rates = np.array([g for _, g in modes])
    keep = np.abs(coeffs) > 0
    coeffs, rates = coeffs[keep], rates[keep]
    n_modes = len(coeffs)
    abs_c = np.abs(coeffs)

    # Modes decaying much faster than every system scale only need a couple of
    # hierarchy levels; capping them removes the stiffest decay rates.
    g_ref = max(params.omega_c, math.hypot(params.epsilon, params.delta))
    caps = [
        config.depth
        if g <= g_ref
        else max(2, math.ceil(config.depth * g_ref / g))
        for g in rates
    ]
    indices, up, down = _hierarchy_indices(n_modes, config.depth, caps)
    n_ado = len(indices)
    total_decay = indices @ rates

    # Per-(ADO, mode) couplings of the scaled hierarchy.
    s_up = np.sqrt((indices + 1.0) * abs_c[None, :])
    s_up[up < 0] = 0.0
    s_dn = np.sqrt(indices / abs_c[None, :])
    s_dn[down < 0] = 0.0
    up_idx = np.where(up >= 0, up, 0)
    down_idx = np.where(down >= 0, down, 0)

    # Elementwise masks: [sz, A] = A * _COMM_MASK and
    # c*sz@A - conj(c)*A@sz = A * dn_mask[j].
    dn_mask = (
        coeffs[:, None, None] * _SZ_DIAG[None, :, None]
        - coeffs.conj()[:, None, None] * _SZ_DIAG[None, None, :]
    )

    h_sys = params.hamiltonian

    # Markovian closure of the dropped Matsubara tail (fast-bath limit of the
    # neglected modes): every ADO picks up -tail * [sz, [sz, .]], which is the
    # elementwise mask (sz_a - sz_b)^2 in this basis.
    tail = decomposition_tail_sum(params, modes)
    tail_mask = tail * _COMM_MASK**2

    def rhs(state):
        drho = -1j * (h_sys @ state - state @ h_sys)
        drho -= total_decay[:, None, None] * state
        drho -= state * tail_mask
        for j in range(n_modes):
            drho -= 1j * s_up[:, j, None, None] * (state[up_idx[:, j]] * _COMM_MASK)
            drho -= 1j * s_dn[:, j, None, None] * (state[down_idx[:, j]] * dn_mask[j])
        return drho

    # Explicit RK4 stability along the negative real axis is ~2.78/|z|.
    dt = config.dt_integrate
    max_decay = float(total_decay.max())
    if max_decay > 0:
        dt = min(dt, 2.0 / max_decay)
    n_sub = max(1, math.ceil(config.dt_save / dt - 1e-9))
    h_step = config.dt_save / n_sub

    state = np.zeros((n_ado, 2, 2), dtype=complex)
    state[0] = [[1.0, 0.0], [0.0, 0.0]]

    times = np.arange(config.n_save + 1) * config.dt_save
    rhos = np.empty((len(times), 2, 2), dtype=complex)
    rhos[0] = state[0]
    for i in range(1, len(times)):
        for _ in range(n_sub):
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * h_step * k1)
            k3 = rhs(state + 0.5 * h_step * k2)
            k4 = rhs(state + h_step * k3)
            state = state + (h_step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state.view(float))):
            raise PropagationError(
                f"non-finite hierarchy state at t={times[i]:.3f} "
                f"(depth={config.depth}, n_matsubara={config.n_matsubara})"
            )
        rhos[i] = state[0]
    return times, rhos


def suggest_hierarchy_config(params: SpinBosonParams, **overrides) -> HierarchyConfig:
    """Truncation settings sized to the coupling strength and temperature.

    The hierarchy depth needed grows with the dimensionless Drude coupling
    |c_0|/omega_c^2, the number of bath exponentials with beta*omega_c; both
    fits were calibrated against self-convergence scans over the physics grid.
    """
    lam, wc, beta = params.lam, params.omega_c, params.beta
    if lam == 0.0:
        return HierarchyConfig(depth=1, n_matsubara=0, **overrides)
    c0 = lam * wc * math.sqrt(1.0 / math.tan(beta * wc / 2.0) ** 2 + 1.0)
    ratio = c0 / wc**2
    depth = int(np.clip(math.ceil(5 + 5.5 * math.sqrt(ratio)), 4, 32))
    n_modes = int(np.clip(math.ceil(beta * wc / 2.0) + 2, 3, 8))
    return HierarchyConfig(depth=depth, n_matsubara=n_modes, **overrides)


def heom_propagate(params: SpinBosonParams, config: HierarchyConfig) -> Trajectory:
    """Propagate and reduce to the <sigma_z(t)> trajectory on the save grid."""
    times, rhos = heom_propagate_rho(params, config)
    values = np.real(rhos[:, 0, 0] - rhos[:, 1, 1])
    return Trajectory(params=params, times=times, values=values)


def propagate_converged(params: SpinBosonParams, config: HierarchyConfig):
    """Refine (depth, n_matsubara) until the saved trajectory is stable.

    Increments both truncation settings until the max change across saved
    points drops below ``config.convergence_tol``.  Returns the converged
    trajectory and the residual of the last refinement step.
    """
    traj = heom_propagate(params, config)
    if params.lam == 0.0:
        return traj, 0.0
    depth, n_mats = config.depth, config.n_matsubara
    while True:
        refined = heom_propagate(
            params, config.replace(depth=depth + 1, n_matsubara=n_mats + 1)
        )
        residual = float(np.abs(refined.values - traj.values).max())
        if residual < config.convergence_tol:
            return traj, residual
        depth, n_mats = depth + 1, n_mats + 1
        traj = refined
        if depth > config.max_depth:
            raise ConvergenceError(
                f"hierarchy not converged at depth {depth} "
                f"(residual {residual:.3e} > {config.convergence_tol:.1e})"
            )


def trajectory_filename(params: SpinBosonParams) -> str:
    return (
        f"traj_eps{params.epsilon:g}_lam{params.lam:g}"
        f"_wc{params.omega_c:g}_beta{params.beta:g}.csv"
    )


def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,sigma_z\n")
        for t, v in zip(traj.times, traj.values):
            fh.write(f"{t:.17g},{v:.17g}\n")


def load_trajectory(path, params: SpinBosonParams | None = None) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if params is None:
        params = _params_from_filename(path)
    return Trajectory(params=params, times=data[:, 0], values=data[:, 1])


def _params_from_filename(path) -> SpinBosonParams:
    import os
    import re

    name = os.path.basename(str(path))
    m = re.match(
        r"traj_eps(?P<eps>[-\d.e+]+)_lam(?P<lam>[-\d.e+]+)"
        r"_wc(?P<wc>[-\d.e+]+)_beta(?P<beta>[-\d.e+]+)\.csv$",
        name,
    )
    if m is None:
        raise ValueError(f"cannot parse grid parameters from filename {name!r}")
    return SpinBosonParams(
        epsilon=float(m["eps"]),
        lam=float(m["lam"]),
        omega_c=float(m["wc"]),
        beta=float(m["beta"]),
    )
