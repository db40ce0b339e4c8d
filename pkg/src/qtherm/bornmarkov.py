"""Born-Markov master equation, the benchmark against the exact hierarchy.

The reduced dynamics is generated by

    d rho / dt = (L_s - S^x Upsilon^x + S^x Xi^o) rho

with S^x the commutator and Xi^o the anticommutator superoperator of

    Upsilon =      int_0^inf dt  C_R(t) S(-t),
    Xi      = -i * int_0^inf dt  C_I(t) S(-t),

where S(-t) = e^{-iH_s t} S e^{iH_s t} and C_R/C_I are the real/imaginary
parts of the reservoir correlation function.  With the correlation function
given as a sum of exponentials (bath.matsubara_expand), the half-line
integrals are exact: in the H_s eigenbasis, element (m, n) of S(-t) carries
the phase e^{-i omega_mn t}, so each exponential term contributes the kernel
1 / (nu_l + i omega_mn).  Combining Upsilon and Xi back into the one-sided
transform Lambda = Upsilon - Xi = sum_l zeta_l * kernel_l * S_mn, the *real*
part of each coefficient zeta_l * kernel_l is the dissipative rate (it is
what carries detailed balance -- note the cross term Im zeta * Im kernel),
while the imaginary part is the Hamiltonian-like Lamb shift, dropped by
default following the usual simplification (a flag restores it).  Dropping
Im(kernel) from *both* operators instead would erase the emission/absorption
asymmetry and relax everything to the maximally mixed state.

Upsilon comes out Hermitian and Xi anti-Hermitian with either flag value, so
the generator preserves Hermiticity; trace preservation is structural (the
outermost operation is a commutator).  Positivity is *not* guaranteed
(Redfield-type generator); propagation reports the most negative eigenvalue
seen instead of clipping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import ExponentialSeries
from .errors import DegenerateSteadyState
from .model import (
    SensorParams,
    build_coupling_operator,
    build_sensor_hamiltonian,
    spost,
    spre,
    validate_density,
)
from .trajectory import Trajectory, choose_step, propagate_linear

__all__ = [
    "BmGenerator",
    "bm_propagate",
    "bm_steady_state",
    "build_bm_generator",
]


@dataclass
class BmGenerator:
    """4x4 superoperator matrix acting on row-major vec(rho), plus provenance."""

    matrix: np.ndarray
    lamb_shift_included: bool
    upsilon: np.ndarray
    xi: np.ndarray
    hamiltonian: np.ndarray
    coupling: np.ndarray


def build_bm_generator(
    p: SensorParams,
    series: ExponentialSeries,
    lamb_shift: bool = False,
) -> BmGenerator:
    """Assemble the master-equation generator in closed form."""
    h = build_sensor_hamiltonian(p)
    s = build_coupling_operator(p)
    evals, vecs = np.linalg.eigh(h)
    s_eig = vecs.conj().T @ s @ vecs
    omega = evals[:, None] - evals[None, :]  # omega_mn = E_m - E_n

    # One kernel per series term, broadcast over the 2x2 frequency grid so
    # long Matsubara expansions (cold baths need thousands of terms before
    # the absorption rate converges) stay cheap.
    kernels = 1.0 / (series.nu[:, None, None] + 1j * omega[None, :, :])
    re_zeta = series.zeta.real[:, None, None]
    im_zeta = series.zeta.imag[:, None, None]
    if lamb_shift:
        ups_eig = np.sum(re_zeta * kernels, axis=0) * s_eig
        xi_eig = -1j * np.sum(im_zeta * kernels, axis=0) * s_eig
    else:
        # Keep the dissipative Re(zeta * kernel) of the one-sided transform
        # only: for Upsilon that is Re zeta * Re kernel; for Xi the full
        # coefficient is Im zeta * (-i * kernel) whose real part is
        # Im zeta * Im kernel (identity Re(-i w) = Im w).
        ups_eig = np.sum(re_zeta * kernels.real, axis=0) * s_eig
        xi_eig = np.sum(im_zeta * kernels.imag, axis=0) * s_eig

    upsilon = vecs @ ups_eig @ vecs.conj().T
    xi = vecs @ xi_eig @ vecs.conj().T

    commutator_s = spre(s) - spost(s)
    matrix = (
        -1j * (spre(h) - spost(h))
        - commutator_s @ (spre(upsilon) - spost(upsilon))
        + commutator_s @ (spre(xi) + spost(xi))
    )
    return BmGenerator(matrix=matrix, lamb_shift_included=lamb_shift,
                       upsilon=upsilon, xi=xi, hamiltonian=h, coupling=s)


def _unvec(y: np.ndarray) -> np.ndarray:
    return y[:4].reshape(2, 2).copy()


def bm_propagate(
    gen: BmGenerator,
    rho0: np.ndarray,
    t_end: float,
    dt: float | None = None,
    stride: int = 1,
    self_check: bool = True,
) -> Trajectory:
    """RK4 on the 4-vectorized master equation; same contract as the hierarchy."""
    rho0 = validate_density(rho0)
    if dt is None:
        gap = np.linalg.eigvalsh(gen.hamiltonian)
        dt = choose_step(gen.matrix, frequency_scale=float(gap[-1] - gap[0]))
    traj, _ = propagate_linear(gen.matrix, rho0.reshape(-1), t_end, dt,
                               _unvec, stride=stride, self_check=self_check)
    trace_err = float(np.max(np.abs(np.trace(traj.states, axis1=1, axis2=2) - 1.0)))
    herm_err = float(np.max(np.abs(
        traj.states - np.conj(np.transpose(traj.states, (0, 2, 1))))))
    min_eig = float(min(np.linalg.eigvalsh(rho).min() for rho in traj.states))
    traj.metadata.update({
        "solver": "bornmarkov",
        "lamb_shift": gen.lamb_shift_included,
        "trace_error": trace_err,
        "hermiticity_error": herm_err,
        "min_eigenvalue": min_eig,
    })
    return traj


def bm_steady_state(gen: BmGenerator, tol: float = 1e-10) -> np.ndarray:
    """Unique trace-one solution of generator . vec(rho) = 0.

    Null space via SVD; DegenerateSteadyState unless its dimension is exactly
    one at the tolerance (relative to the largest singular value).
    """
    _, svals, vh = np.linalg.svd(gen.matrix)
    cutoff = tol * max(float(svals.max()), 1.0)
    null_dim = int(np.sum(svals < cutoff))
    if null_dim != 1:
        raise DegenerateSteadyState(
            f"stationary subspace has dimension {null_dim} at tolerance "
            f"{tol:.1e} (singular values {svals})"
        )
    rho = vh[-1].conj().reshape(2, 2)
    trace = np.trace(rho)
    if abs(trace) < 1e-12:
        raise DegenerateSteadyState(
            "null vector is traceless; no normalizable stationary state"
        )
    rho = rho / trace
    return 0.5 * (rho + rho.conj().T)
