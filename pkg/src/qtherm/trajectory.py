"""Fixed-step propagation of linear ODE systems dy/dt = M y.

Shared by the hierarchy solver and the Born-Markov solver: both reduce to a
(sparse or dense) time-independent generator acting on a flat complex vector.
Classical 4th-order Runge-Kutta with

  * a step choice tied to a power-iteration estimate of the generator's
    spectral radius (|dt * lambda| = 1.4, well inside the RK4 stability
    region), capped for accuracy at 0.05 / max(frequency scale, 1);
  * a halved-step self-check on a short prefix that halves dt (up to three
    times) until the prefix agrees to a relative tolerance;
  * a divergence detector that raises StepInstability the moment any vector
    entry exceeds a sup-norm cap (NaNs fail the same comparison).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import StepInstability

__all__ = [
    "Trajectory",
    "choose_step",
    "estimate_spectral_radius",
    "propagate_linear",
    "validate_step",
]


@dataclass
class Trajectory:
    """Time grid, stored 2x2 slices, and solver metadata for one propagation."""

    times: np.ndarray   # (n_samples,), strictly increasing, starts at 0
    states: np.ndarray  # (n_samples, 2, 2) complex
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def estimate_spectral_radius(m, iterations: int = 25) -> float:
    """Power-iteration estimate of max |eigenvalue| of m.

    Deterministic (fixed seed). On non-normal generators this is an estimate,
    not a bound; callers pair it with a safety factor and the halved-step
    self-check.
    """
    dim = m.shape[0]
    rng = np.random.default_rng(7)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    radius = 0.0
    for _ in range(iterations):
        w = m @ v
        radius = np.linalg.norm(w)
        if radius == 0.0:
            return 0.0
        v = w / radius
    return float(radius)


def choose_step(m, frequency_scale: float, safety: float = 1.4,
                accuracy_cap: float = 0.05) -> float:
    """Default integration step for generator m (see module docstring)."""
    radius = estimate_spectral_radius(m)
    dt_stability = safety / radius if radius > 0 else np.inf
    dt_accuracy = accuracy_cap / max(frequency_scale, 1.0)
    return float(min(dt_stability, dt_accuracy))


def _rk4_run(m, y0, n_steps, dt, stride, extract, cap):
    y = y0.astype(complex, copy=True)
    times = [0.0]
    slices = [extract(y)]
    sixth = dt / 6.0
    half = dt / 2.0
    for n in range(1, n_steps + 1):
        k1 = m @ y
        k2 = m @ (y + half * k1)
        k3 = m @ (y + half * k2)
        k4 = m @ (y + dt * k3)
        y += sixth * (k1 + 2.0 * (k2 + k3) + k4)
        peak = np.max(np.abs(y))
        if not peak < cap:  # also catches NaN
            raise StepInstability(
                f"sup-norm {peak:.3e} exceeded cap {cap:.1e} at t={n * dt:.4g} "
                f"(dt={dt:.3e})"
            )
        if n % stride == 0:
            times.append(n * dt)
            slices.append(extract(y))
    return np.array(times), np.array(slices), y


def validate_step(
    m,
    y0: np.ndarray,
    dt: float,
    extract: Callable[[np.ndarray], np.ndarray],
    horizon: float,
    divergence_cap: float = 1e6,
    tol: float = 1e-6,
    max_halvings: int = 3,
) -> tuple[float, float]:
    """Halved-step self-check on a short prefix; returns (validated dt, error).

    Integrates min(50 steps, horizon) once at dt and once at dt/2 and compares
    the extracted slices at the common end time. dt is halved until the
    relative difference drops below tol; StepInstability after max_halvings.
    """
    check_error = np.inf
    for _ in range(max_halvings + 1):
        n_coarse = min(50, max(int(np.ceil(horizon / dt)), 1))
        try:
            _, coarse, _ = _rk4_run(m, y0, n_coarse, dt, n_coarse,
                                    extract, divergence_cap)
            _, fine, _ = _rk4_run(m, y0, 2 * n_coarse, dt / 2, 2 * n_coarse,
                                  extract, divergence_cap)
        except StepInstability:
            # the probe itself blew up: clearly too coarse, halve and retry
            check_error = np.inf
            dt /= 2
            continue
        scale = max(np.max(np.abs(fine[-1])), 1e-12)
        check_error = float(np.max(np.abs(coarse[-1] - fine[-1])) / scale)
        if check_error < tol:
            return dt, check_error
        dt /= 2
    raise StepInstability(
        f"halved-step self-check failed after {max_halvings} halvings "
        f"(relative error {check_error:.2e})"
    )


def propagate_linear(
    m,
    y0: np.ndarray,
    t_end: float,
    dt: float,
    extract: Callable[[np.ndarray], np.ndarray],
    stride: int = 1,
    divergence_cap: float = 1e6,
    self_check: bool = True,
    self_check_tol: float = 1e-6,
    max_halvings: int = 3,
) -> tuple[Trajectory, np.ndarray]:
    """RK4 over [0, t_end]; returns (trajectory of extracted slices, final y).

    The step is first validated on a short prefix against its halved version;
    on failure dt is halved (up to max_halvings) before giving up with
    StepInstability. t_end is rounded up to a whole number of steps.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    check_error = None
    if self_check:
        dt, check_error = validate_step(
            m, y0, dt, extract, horizon=t_end,
            divergence_cap=divergence_cap, tol=self_check_tol,
            max_halvings=max_halvings,
        )
    n_steps = max(int(np.ceil(t_end / dt - 1e-9)), 1)
    times, slices, y = _rk4_run(m, y0, n_steps, dt, stride, extract,
                                divergence_cap)
    traj = Trajectory(
        times=times,
        states=slices,
        metadata={"dt": dt, "stride": stride, "self_check_error": check_error},
    )
    return traj, y
