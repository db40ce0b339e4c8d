"""Hierarchy of auxiliary density matrices for exact reduced dynamics.

The reservoir correlation function is a sum of k_max+1 exponentials
(see bath.matsubara_expand), which closes the reduced dynamics on a family
of auxiliary 2x2 matrices rho_nu indexed by multi-indices
nu = (nu_0, ..., nu_{k_max}) with sum(nu) <= L:

    d rho_nu / dt = (L_s - nu.mu) rho_nu
                    + Phi sum_l rho_{nu + e_l}
                    + sum_l nu_l Theta_l rho_{nu - e_l}

with L_s = -i [H_s, .], Phi = -i [S, .] and
Theta_l rho = -i (zeta_l S rho - conj(zeta_l) rho S).  Indices outside the
depth bound contribute zero (hard closure); convergence is checked by
increasing L and k_max until observables stop moving.

Implementation notes
--------------------
The whole hierarchy is one flat complex vector (row-major vec of each
auxiliary, canonical graded-lexicographic index order) and the right-hand
side is one sparse matrix assembled once per run from 4x4 blocks:
spre(A) = kron(A, I), spost(B) = kron(I, B^T).  Neighbor tables
(index of nu +- e_l) are precomputed so the assembly is a flat sweep.
Propagation is fixed-step RK4 (see trajectory.py) with a halved-step
self-check; the default step comes from a power-iteration estimate of the
generator's spectral radius.  Everything is deterministic: canonical index
order, fixed seeds, no threaded reductions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bath import BathSpec, ExponentialSeries, matsubara_expand
from .errors import (
    HierarchyTooLarge,
    InvalidDensity,
    NoSteadyState,
)
from .model import (
    SIGMA_Z,
    SensorParams,
    build_coupling_operator,
    build_sensor_hamiltonian,
    spost,
    spre,
    validate_density,
)
from .trajectory import Trajectory, _rk4_run, choose_step, propagate_linear, validate_step

__all__ = [
    "ConvergenceReport",
    "HierarchyIndex",
    "HierarchyState",
    "build_generator",
    "build_hierarchy",
    "convergence_sweep",
    "enumerate_indices",
    "hierarchy_rhs",
    "hierarchy_size",
    "propagate",
    "sigma_z_expectation",
    "steady_state",
    "suggest_k_max",
]

_IDENT4 = np.eye(4, dtype=complex)


@dataclass(frozen=True)
class HierarchyIndex:
    """Occupation counts, one slot per exponential term of the bath series."""

    nu: tuple[int, ...]

    def __post_init__(self):
        if any(n < 0 for n in self.nu):
            raise ValueError("hierarchy index counts must be non-negative")

    @property
    def tier(self) -> int:
        return sum(self.nu)

    def raised(self, slot: int) -> "HierarchyIndex":
        lifted = list(self.nu)
        lifted[slot] += 1
        return HierarchyIndex(tuple(lifted))

    def lowered(self, slot: int) -> "HierarchyIndex":
        lowered = list(self.nu)
        lowered[slot] -= 1
        return HierarchyIndex(tuple(lowered))


def hierarchy_size(k_max: int, depth: int) -> int:
    """Number of multi-indices with k_max+1 slots and total <= depth."""
    return math.comb(depth + k_max + 1, k_max + 1)


def enumerate_indices(k_max: int, depth: int) -> list[tuple[int, ...]]:
    """All index tuples with sum <= depth, graded lexicographic order.

    The zero index (physical state) always comes first; ties within a tier
    break lexicographically.  This order is the canonical layout of the flat
    state vector and must never depend on dict iteration or threading.
    """
    slots = k_max + 1

    def compositions(remaining_slots: int, cap: int):
        if remaining_slots == 0:
            yield ()
            return
        for head in range(cap + 1):
            for rest in compositions(remaining_slots - 1, cap - head):
                yield (head,) + rest

    return sorted(compositions(slots, depth), key=lambda t: (sum(t), t))


@dataclass
class HierarchyState:
    """All auxiliary matrices at one instant, flattened in canonical order."""

    indices: tuple[tuple[int, ...], ...]
    lookup: dict
    data: np.ndarray  # (n_indices, 2, 2) complex
    k_max: int
    depth: int
    time: float = 0.0

    @property
    def root(self) -> np.ndarray:
        """Physical reduced density matrix (index 0...0, position 0)."""
        return self.data[0]

    def entry(self, nu) -> np.ndarray:
        key = tuple(nu.nu) if isinstance(nu, HierarchyIndex) else tuple(nu)
        return self.data[self.lookup[key]]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


def build_hierarchy(
    series: ExponentialSeries,
    depth: int,
    rho0: np.ndarray,
    max_indices: int = 60_000,
) -> HierarchyState:
    """Initial hierarchy state: physical root = rho0, all auxiliaries zero."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    rho0 = validate_density(rho0)
    count = hierarchy_size(series.k_max, depth)
    if count > max_indices:
        raise HierarchyTooLarge(
            f"hierarchy with k_max={series.k_max}, depth={depth} has {count} "
            f"indices, above the cap {max_indices}; lower the truncation or "
            f"raise max_indices"
        )
    indices = tuple(enumerate_indices(series.k_max, depth))
    lookup = {nu: i for i, nu in enumerate(indices)}
    data = np.zeros((count, 2, 2), dtype=complex)
    data[0] = rho0
    return HierarchyState(indices=indices, lookup=lookup, data=data,
                          k_max=series.k_max, depth=depth, time=0.0)


def _neighbor_tables(indices, lookup, n_slots):
    n = len(indices)
    plus = np.full((n, n_slots), -1, dtype=np.int64)
    minus = np.full((n, n_slots), -1, dtype=np.int64)
    for i, nu in enumerate(indices):
        for slot in range(n_slots):
            up = nu[:slot] + (nu[slot] + 1,) + nu[slot + 1:]
            plus[i, slot] = lookup.get(up, -1)
            if nu[slot] > 0:
                down = nu[:slot] + (nu[slot] - 1,) + nu[slot + 1:]
                minus[i, slot] = lookup[down]
    return plus, minus


def _expand_blocks(block_rows, block_cols, blocks):
    """Turn (n,) block coordinates + (n,4,4) blocks into COO triplets."""
    n = len(block_rows)
    local = np.arange(4)
    rows = (4 * block_rows[:, None, None] + local[None, :, None])
    cols = (4 * block_cols[:, None, None] + local[None, None, :])
    rows = np.broadcast_to(rows, (n, 4, 4)).ravel()
    cols = np.broadcast_to(cols, (n, 4, 4)).ravel()
    return rows, cols, blocks.reshape(-1)


def build_generator(
    state: HierarchyState,
    h_s: np.ndarray,
    s_op: np.ndarray,
    series: ExponentialSeries,
) -> sp.csr_matrix:
    """Sparse matrix M with d(flat)/dt = M @ flat for the whole hierarchy."""
    if state.k_max != series.k_max:
        raise ValueError(
            f"state truncation k_max={state.k_max} does not match the series "
            f"(k_max={series.k_max})"
        )
    indices = state.indices
    n = len(indices)
    n_slots = series.k_max + 1
    counts = np.array(indices, dtype=float)           # (n, n_slots)
    plus, minus = _neighbor_tables(indices, state.lookup, n_slots)

    liouvillian = -1j * (spre(h_s) - spost(h_s))
    phi = -1j * (spre(s_op) - spost(s_op))
    thetas = [
        -1j * (z * spre(s_op) - np.conj(z) * spost(s_op))
        for z in series.zeta
    ]

    all_rows, all_cols, all_vals = [], [], []

    # diagonal: L_s - (nu . mu) on each auxiliary
    shifts = counts @ series.nu                        # (n,)
    diag = liouvillian[None, :, :] - shifts[:, None, None] * _IDENT4[None, :, :]
    arange_n = np.arange(n)
    r, c, v = _expand_blocks(arange_n, arange_n, diag)
    all_rows.append(r); all_cols.append(c); all_vals.append(v)

    for slot in range(n_slots):
        # coupling to nu + e_slot: the same Phi block for every slot
        has_up = plus[:, slot] >= 0
        if np.any(has_up):
            src = arange_n[has_up]
            dst = plus[has_up, slot]
            blocks = np.broadcast_to(phi, (len(src), 4, 4))
            r, c, v = _expand_blocks(src, dst, blocks)
            all_rows.append(r); all_cols.append(c); all_vals.append(v)
        # coupling to nu - e_slot, weighted by the occupation nu_slot
        has_down = minus[:, slot] >= 0
        if np.any(has_down):
            src = arange_n[has_down]
            dst = minus[has_down, slot]
            blocks = counts[has_down, slot][:, None, None] * thetas[slot][None, :, :]
            r, c, v = _expand_blocks(src, dst, blocks)
            all_rows.append(r); all_cols.append(c); all_vals.append(v)

    rows = np.concatenate(all_rows)
    cols = np.concatenate(all_cols)
    vals = np.concatenate(all_vals)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(4 * n, 4 * n))
    return m.tocsr()


def hierarchy_rhs(
    state: HierarchyState,
    h_s: np.ndarray,
    s_op: np.ndarray,
    series: ExponentialSeries,
) -> HierarchyState:
    """Time derivative of every auxiliary, packaged as a HierarchyState."""
    m = build_generator(state, h_s, s_op, series)
    dot = (m @ state.flat()).reshape(-1, 2, 2)
    return HierarchyState(indices=state.indices, lookup=state.lookup,
                          data=dot, k_max=state.k_max, depth=state.depth,
                          time=state.time)


def _extract_root(flat: np.ndarray) -> np.ndarray:
    return flat[:4].reshape(2, 2).copy()


def propagate(
    state: HierarchyState,
    h_s: np.ndarray,
    s_op: np.ndarray,
    series: ExponentialSeries,
    t_end: float,
    dt: float | None = None,
    stride: int = 1,
    divergence_cap: float = 1e6,
    self_check: bool = True,
) -> Trajectory:
    """Fixed-step RK4 propagation of the hierarchy over [0, t_end].

    Records the physical root slice every `stride` steps.  The default dt is
    1.4 / (power-iteration spectral-radius estimate), capped at
    0.05/max(Omega, 1); the halved-step self-check then guards the choice.
    """
    m = build_generator(state, h_s, s_op, series)
    if dt is None:
        gap = np.linalg.eigvalsh(h_s)
        dt = choose_step(m, frequency_scale=float(gap[-1] - gap[0]))
    traj, _ = propagate_linear(
        m, state.flat(), t_end, dt, _extract_root, stride=stride,
        divergence_cap=divergence_cap, self_check=self_check,
    )
    trace_err = float(np.max(np.abs(np.trace(traj.states, axis1=1, axis2=2) - 1.0)))
    herm_err = float(np.max(np.abs(traj.states - np.conj(np.transpose(traj.states, (0, 2, 1))))))
    traj.metadata.update({
        "solver": "hierarchy",
        "k_max": state.k_max,
        "depth": state.depth,
        "trace_error": trace_err,
        "hermiticity_error": herm_err,
    })
    return traj


def steady_state(
    state: HierarchyState,
    h_s: np.ndarray,
    s_op: np.ndarray,
    series: ExponentialSeries,
    window: float = 20.0,
    tol: float = 1e-7,
    t_max: float = 2000.0,
    dt: float | None = None,
    divergence_cap: float = 1e6,
    return_time: bool = False,
):
    """Propagate until the root stops moving over a trailing window.

    Convergence: max-norm change of the root across one window of length
    `window` falls below `tol`.  Raises NoSteadyState at t_max.  With
    return_time=True also returns the time at which the criterion fired.
    """
    m = build_generator(state, h_s, s_op, series)
    if dt is None:
        gap = np.linalg.eigvalsh(h_s)
        dt = choose_step(m, frequency_scale=float(gap[-1] - gap[0]))
    y = state.flat().astype(complex, copy=True)
    dt, _ = validate_step(m, y, dt, _extract_root, horizon=window,
                          divergence_cap=divergence_cap)
    n_window = max(int(np.ceil(window / dt)), 1)
    previous = _extract_root(y)
    t = 0.0
    residual = np.inf
    while t < t_max:
        _, _, y = _rk4_run(m, y, n_window, dt, n_window, _extract_root,
                           divergence_cap)
        t += n_window * dt
        root = _extract_root(y)
        residual = float(np.max(np.abs(root - previous)))
        if residual < tol:
            if abs(np.trace(root) - 1.0) > 1e-8:
                raise InvalidDensity(
                    f"steady-state trace drifted to {np.trace(root).real:.10f}"
                )
            root = 0.5 * (root + root.conj().T)
            return (root, t) if return_time else root
        previous = root
    raise NoSteadyState(
        f"windowed residual {residual:.3e} still above tol={tol:.1e} at "
        f"t_max={t_max:g} (window {window:g})"
    )


def sigma_z_expectation(traj: Trajectory) -> np.ndarray:
    """tr(sigma_z rho(t)) for each stored sample, as real numbers."""
    values = np.einsum("ij,tji->t", SIGMA_Z, traj.states)
    worst = float(np.max(np.abs(values.imag))) if len(values) else 0.0
    if worst > 1e-10:
        raise InvalidDensity(
            f"<sigma_z> has imaginary part {worst:.2e} (> 1e-10); "
            f"the trajectory is not Hermitian"
        )
    return values.real


def suggest_k_max(
    params: SensorParams,
    bath: BathSpec,
    rate_factor: float = 2.5,
    tail_weight: float = 0.01,
    probe_terms: int = 200,
    k_cap: int = 64,
) -> int:
    """Smallest k_max whose dropped terms are negligible for the dynamics.

    Two conditions: the last kept decay rate must exceed rate_factor times
    the fastest physical frequency max(Omega, omega_c), and the dropped
    amplitude-to-rate weight sum_{l>k} |zeta_l|/nu_l must be below
    tail_weight of the kept sum.  chi=0 needs no resonance terms at all.
    """
    if bath.chi == 0.0:
        return 0
    scale = rate_factor * max(params.rabi_frequency(), bath.omega_c)
    probe = matsubara_expand(bath, k_cap + probe_terms)
    weights = np.abs(probe.zeta) / np.where(probe.nu > 0, probe.nu, np.inf)
    for k in range(k_cap + 1):
        nu_k = 2.0 * np.pi * k / bath.beta if k > 0 else bath.omega_c
        kept = weights[: k + 1].sum()
        tail = weights[k + 1: k + 1 + probe_terms].sum()
        if nu_k >= scale and tail <= tail_weight * kept:
            return k
    return k_cap


@dataclass
class ConvergenceReport:
    """Successive-deviation ladder over hierarchy truncations."""

    entries: list = field(default_factory=list)  # dicts: k_max, depth, deviation
    converged: bool = False
    threshold: float = 1e-4
    metadata: dict = field(default_factory=dict)


def convergence_sweep(
    params: SensorParams,
    bath: BathSpec,
    rho0: np.ndarray,
    t_end: float,
    depths,
    k_maxes,
    threshold: float = 1e-4,
    samples: int = 201,
    dt: float | None = None,
    max_indices: int = 60_000,
) -> ConvergenceReport:
    """Propagate over a (k_max, depth) grid and compare <sigma_z(t)> curves.

    The grid is walked in ascending (k_max, depth) order; each curve is
    interpolated onto a common time grid and compared with its predecessor.
    `converged` means the final deviation fell below `threshold`.
    """
    depths = sorted(set(int(d) for d in depths))
    k_maxes = sorted(set(int(k) for k in k_maxes))
    if not depths or not k_maxes:
        raise ValueError("depth and k_max ranges must be non-empty")
    h_s = build_sensor_hamiltonian(params)
    s_op = build_coupling_operator(params)
    grid = np.linspace(0.0, t_end, samples)
    report = ConvergenceReport(threshold=threshold,
                               metadata={"t_end": t_end, "samples": samples})
    previous_curve = None
    for k in k_maxes:
        series = matsubara_expand(bath, k)
        for depth in depths:
            state = build_hierarchy(series, depth, rho0, max_indices=max_indices)
            traj = propagate(state, h_s, s_op, series, t_end, dt=dt)
            curve = np.interp(grid, traj.times, sigma_z_expectation(traj))
            deviation = (None if previous_curve is None
                         else float(np.max(np.abs(curve - previous_curve))))
            report.entries.append(
                {"k_max": k, "depth": depth, "deviation": deviation}
            )
            previous_curve = curve
    last = report.entries[-1]["deviation"]
    report.converged = last is not None and last < threshold
    return report
