"""Sensor domain types: Hamiltonian, coupling operator, initial state, rotated frame.

Conventions fixed here and relied on everywhere else:
  |e> = (1, 0)^T, |g> = (0, 1)^T, sigma_z |e> = +|e>.
  The tunneling delta is the energy unit (time in 1/delta, inverse temperature
  as beta*delta); captions elsewhere only ever fix ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class SensorParams:
    """Static qubit-sensor parameters.

    epsilon: bias; delta: tunneling (>= 0; the energy unit when nonzero);
    theta: coupling angle in [0, pi); alpha, varphi: initial-state angles.
    The Rabi frequency Omega = hypot(epsilon, delta) must be positive, which
    permits the pure-dephasing configuration delta = 0 with finite bias.
    """

    epsilon: float
    delta: float = 1.0
    theta: float = 0.0
    alpha: float = math.pi / 4
    varphi: float = math.pi / 2

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0 <= self.theta < math.pi:
            raise ValueError(f"theta must lie in [0, pi), got {self.theta}")
        if self.rabi_frequency() <= 0:
            raise ValueError("epsilon and delta cannot both vanish")

    def rabi_frequency(self) -> float:
        return math.hypot(self.epsilon, self.delta)


@dataclass(frozen=True)
class RotatedParams:
    """Sensor parameters in the frame that diagonalizes the coupling operator."""

    eps_tilde: float
    delta_tilde: float
    phi: float


def build_sensor_hamiltonian(p: SensorParams) -> np.ndarray:
    """H_s = (epsilon/2) sigma_z + (delta/2) sigma_x."""
    return 0.5 * (p.epsilon * SIGMA_Z + p.delta * SIGMA_X)


def build_coupling_operator(p: SensorParams) -> np.ndarray:
    """sin(theta) sigma_z + cos(theta) sigma_x; traceless with eigenvalues +-1."""
    return math.sin(p.theta) * SIGMA_Z + math.cos(p.theta) * SIGMA_X


def build_initial_state(p: SensorParams) -> np.ndarray:
    """Projector onto cos(alpha)|e> + sin(alpha) e^{-i varphi}|g>."""
    psi = np.array([math.cos(p.alpha), math.sin(p.alpha) * np.exp(-1j * p.varphi)])
    return np.outer(psi, psi.conj())


def rotate_params(p: SensorParams) -> RotatedParams:
    """Rotation angle and rotated (bias, tunneling).

    phi = pi/2 - theta is the branch of arctan(cot(theta)) continuous on
    [0, pi); it satisfies sin(theta + phi) = 1, so the rotated coupling
    amplitude equals the bare one. arctan(cot(0)) itself is singular, hence
    the closed form rather than the arctan.
    """
    phi = math.pi / 2 - p.theta
    eps_tilde = p.epsilon * math.sin(p.theta) + p.delta * math.cos(p.theta)
    delta_tilde = p.delta * math.sin(p.theta) - p.epsilon * math.cos(p.theta)
    return RotatedParams(eps_tilde=eps_tilde, delta_tilde=delta_tilde, phi=phi)


def hamiltonian_eigensystem(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending: ground first) and eigenvector columns of a 2x2 Hermitian."""
    evals, evecs = np.linalg.eigh(h)
    return evals, evecs


def spre(a: np.ndarray) -> np.ndarray:
    """Superoperator of left multiplication, acting on row-major vec(X)."""
    return np.kron(a, np.eye(a.shape[0]))


def spost(b: np.ndarray) -> np.ndarray:
    """Superoperator of right multiplication, acting on row-major vec(X)."""
    return np.kron(np.eye(b.shape[0]), b.T)


def validate_density(rho: np.ndarray) -> np.ndarray:
    """Check trace (1e-8) and Hermiticity (1e-10) of a 2x2 density matrix."""
    from .errors import InvalidDensity

    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise InvalidDensity(f"expected a 2x2 matrix, got shape {rho.shape}")
    if abs(np.trace(rho) - 1.0) > 1e-8:
        raise InvalidDensity(f"trace {np.trace(rho):.3e} is not 1 within 1e-8")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise InvalidDensity("matrix is not Hermitian within 1e-10")
    return rho
