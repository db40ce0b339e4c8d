"""Experiment drivers: named data products behind the CLI.

Each experiment resolves its truncation (honouring "auto"), runs the physics,
and hands back header + rows for the CSV writer plus the convergence evidence
that goes into the run manifest.  `execute_run` / `execute_sweep` wrap that
with output writing; `replay_manifest` re-executes a manifest's resolved
config and must reproduce the CSV byte-for-byte.

Experiments and their columns:
    dynamics          t, rx, ry, rz, sz          (one solver)
    qfi-dynamics      t, F_beta                  (four beta-offset runs)
    max-qfi-vs-theta  theta, t_opt, F_max
    steady-vs-chi     chi, ratio_<s>, F_steady_<s>, omega_tilde_<s> per solver
    table1            chi, omega_P_ratio, omega_H_ratio
    compare-bm        t, sz_heom, sz_bm          (same expansion for both)
    converge          k_max, depth, deviation

Parallelism: sweep points and beta-offset runs fan out over a process pool
when threads > 1.  The first offset run still resolves the step sequentially
(exactly as the serial path does), so results are independent of the worker
count; assembly is ordered.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .bath import BathSpec, matsubara_expand
from .bornmarkov import bm_propagate, bm_steady_state, build_bm_generator
from .config import (GridSpec, INTRINSIC_AXES, RunConfig, Truncation,
                     config_from_mapping)
from .errors import ConfigError
from .estimation import (BetaOffsetRuns, bloch_from_density,
                         collect_beta_offset_runs, gibbs_qfi, max_qfi_over_time,
                         qfi_bloch, qfi_from_runs,
                         renormalized_frequency_from_steady, _single_run,
                         _stencil)
from .hierarchy import (build_generator, build_hierarchy, convergence_sweep,
                        propagate, sigma_z_expectation, steady_state,
                        suggest_k_max, _extract_root)
from .manifest import RunManifest
from .model import (SensorParams, build_coupling_operator, build_initial_state,
                    build_sensor_hamiltonian, hamiltonian_eigensystem)
from .trajectory import choose_step, validate_step

TABLE_CHI_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)

#: Born-Markov steady-state experiments keep a long Matsubara tail: the
#: one-sided transform is a closed-form sum over the series, so a huge k_max
#: costs nothing and the thermal ratio error falls off like 1/k_max.
BM_STEADY_K_MAX = 200_000

_STEADY_DEFAULTS = {"window": 20.0, "tol": 1e-7, "t_max": 2000.0}


def format_number(x) -> str:
    """Decimal, 12 significant digits — the file format contract."""
    return f"{float(x):.12g}"


def write_csv(path: str | Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(x) for x in row])


@dataclass
class RunnerOutput:
    header: list[str]
    rows: list[tuple]
    evidence: dict
    resolved_updates: dict


@dataclass
class RunResult:
    csv_path: Path
    manifest_path: Path
    manifest: RunManifest
    header: list[str]
    rows: list[tuple]
    png_path: Optional[Path] = None


# --------------------------------------------------------------------------
# resolution of "auto" truncation

def resolve_truncation(cfg: RunConfig) -> tuple[int, int, dict]:
    """Fill in auto k_max/depth; returns (k_max, depth, evidence).

    k_max: kernel-tail-weight heuristic (suggest_k_max).  depth: shortest
    ladder entry whose successive sigma_z deviation drops below 1e-3 on a
    short prefix of the dynamics (convergence_sweep), at the resolved k_max.
    Intrinsic chi sweeps resolve at their largest coupling.
    """
    evidence: dict = {}
    bath = cfg.bath
    axis = INTRINSIC_AXES.get(cfg.experiment)
    if axis == "chi":
        chis = cfg.sweep.get("chi", TABLE_CHI_GRID)
        positive = [c for c in chis if c > 0]
        if positive:
            bath = replace(bath, chi=max(positive))
            evidence["resolved_at_chi"] = max(positive)

    k_max = cfg.truncation.k_max
    if k_max is None:
        k_max = suggest_k_max(cfg.sensor, bath)
        evidence["k_max_auto"] = {"value": k_max,
                                  "method": "kernel tail-weight heuristic"}

    depth = cfg.truncation.depth
    if depth is None:
        t_probe = min(cfg.grid.t_end, 20.0) if cfg.grid else 20.0
        ladder = [2, 3, 4, 5, 6, 8]
        report = convergence_sweep(
            cfg.sensor, bath, build_initial_state(cfg.sensor), t_probe,
            depths=ladder, k_maxes=[k_max], threshold=1e-3,
            max_indices=int(cfg.options.get("max_indices", 200_000)))
        depth = ladder[-1]
        for entry in report.entries:
            if entry["deviation"] is not None and entry["deviation"] < 1e-3:
                depth = entry["depth"]
                break
        evidence["depth_auto"] = {"value": depth, "ladder": report.entries,
                                  "threshold": 1e-3, "t_probe": t_probe}
    return k_max, depth, evidence


# --------------------------------------------------------------------------
# parallel helpers (top-level so the process pool can pickle them)

def _offset_worker(args):
    (p, bath, t_end, solver, k_max, depth, dt, stride, lamb, max_indices) = args
    return _single_run(p, bath, t_end, solver, k_max, depth, dt, stride,
                       self_check=False, lamb_shift=lamb,
                       max_indices=max_indices)


def collect_offsets(p, bath, t_end, solver, k_max, depth, delta_frac, dt,
                    stride, lamb, max_indices, threads) -> BetaOffsetRuns:
    """collect_beta_offset_runs, optionally fanning runs 2-4 out to a pool.

    The first run resolves the step exactly as the serial path does, so the
    numbers are identical for any worker count.
    """
    if threads <= 1:
        return collect_beta_offset_runs(
            p, bath, t_end, solver=solver, k_max=k_max, depth=depth,
            delta_frac=delta_frac, dt=dt, stride=stride, lamb_shift=lamb,
            max_indices=max_indices)
    beta = bath.beta
    delta = delta_frac * beta
    betas = [beta - 2 * delta, beta - delta, beta + delta, beta + 2 * delta]
    first = _single_run(p, replace(bath, beta=betas[0]), t_end, solver, k_max,
                        depth, dt, stride, self_check=dt is None,
                        lamb_shift=lamb, max_indices=max_indices)
    if dt is None:
        dt = first.metadata["dt"]
    jobs = [(p, replace(bath, beta=b), t_end, solver, k_max, depth, dt,
             stride, lamb, max_indices) for b in betas[1:]]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        rest = list(pool.map(_offset_worker, jobs))
    return BetaOffsetRuns(beta=beta, delta=delta, minus2=first, minus1=rest[0],
                          plus1=rest[1], plus2=rest[2])


def _run_pool(worker, jobs, threads):
    """Map over jobs, in order, on up to `threads` processes."""
    if threads <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, jobs))


# --------------------------------------------------------------------------
# steady-state machinery shared by steady-vs-chi and table1

def _heom_steady_frozen(p, bath, k_max, depth, window, tol, t_max,
                        max_indices):
    """Steady state plus the (validated) step and horizon it used.

    Freezing dt and t_s lets the beta-offset runs for the steady-state QFI
    integrate on the identical grid, so the residual transient (order tol,
    smooth in beta) cancels in the stencil instead of being amplified.
    """
    h = build_sensor_hamiltonian(p)
    s = build_coupling_operator(p)
    series = matsubara_expand(bath, k_max)
    state = build_hierarchy(series, depth, build_initial_state(p),
                            max_indices=max_indices)
    m = build_generator(state, h, s, series)
    gap = np.linalg.eigvalsh(h)
    dt = choose_step(m, frequency_scale=float(gap[-1] - gap[0]))
    dt, _ = validate_step(m, state.flat(), dt, _extract_root, horizon=window)
    rho, t_s = steady_state(state, h, s, series, window=window, tol=tol,
                            t_max=t_max, dt=dt, return_time=True)
    return rho, t_s, dt


def _heom_steady_qfi(p, bath, k_max, depth, delta_frac, window, tol, t_max,
                     max_indices):
    """QFI of the hierarchy steady state via four same-horizon offset runs."""
    rho_c, t_s, dt = _heom_steady_frozen(p, bath, k_max, depth, window, tol,
                                         t_max, max_indices)
    beta = bath.beta
    delta = delta_frac * beta
    stride = max(int(round(t_s / dt / 50)), 1)
    finals = []
    for b in (beta - 2 * delta, beta - delta, beta + delta, beta + 2 * delta):
        series = matsubara_expand(replace(bath, beta=b), k_max)
        state = build_hierarchy(series, depth, build_initial_state(p),
                                max_indices=max_indices)
        traj = propagate(state, build_sensor_hamiltonian(p),
                         build_coupling_operator(p), series, t_end=t_s, dt=dt,
                         stride=stride, self_check=False)
        rho = traj.states[-1]
        finals.append(np.real([np.trace(rho @ s) for s in PAULIS]))
    dr = _stencil(finals[0], finals[1], finals[2], finals[3], delta)
    r_mid = 0.5 * (finals[1] + finals[2])
    norm = float(np.linalg.norm(r_mid))
    if norm >= 1.0:
        # hard-truncation artifact (the truncated correlation function is
        # not completely positive); report it instead of crashing the sweep
        return float("nan"), rho_c, t_s, dt, norm
    return float(qfi_bloch(r_mid, dr)), rho_c, t_s, dt, norm


def _bm_steady_rho(p, bath, k_bm, lamb):
    series = matsubara_expand(bath, k_bm)
    return bm_steady_state(build_bm_generator(p, series, lamb_shift=lamb))


def _bm_steady_qfi(p, bath, k_bm, delta_frac, lamb):
    beta = bath.beta
    delta = delta_frac * beta
    rs = [bloch_from_density(_bm_steady_rho(p, replace(bath, beta=b), k_bm,
                                            lamb)).r
          for b in (beta - 2 * delta, beta - delta, beta + delta,
                    beta + 2 * delta)]
    dr = _stencil(rs[0], rs[1], rs[2], rs[3], delta)
    return float(qfi_bloch(0.5 * (rs[1] + rs[2]), dr))


def _eigen_ratio(rho, h):
    _, vecs = hamiltonian_eigensystem(np.asarray(h, dtype=complex))
    pops = np.real(np.diag(vecs.conj().T @ rho @ vecs))
    return float(pops[0] / pops[1])


# --------------------------------------------------------------------------
# runners

def _grid_options(cfg):
    t_end = cfg.grid.t_end
    dt = cfg.grid.dt
    stride = cfg.grid.stride
    return t_end, dt, stride


def _run_dynamics(cfg: RunConfig, k_max: int, depth: int,
                  threads: int) -> RunnerOutput:
    t_end, dt, stride = _grid_options(cfg)
    solver = cfg.solver[0]
    lamb = bool(cfg.options.get("lamb_shift", False))
    traj = _single_run(cfg.sensor, cfg.bath, t_end, solver, k_max, depth, dt,
                       stride, self_check=dt is None, lamb_shift=lamb,
                       max_indices=int(cfg.options.get("max_indices", 200_000)))
    bloch = np.einsum("kij,tji->tk",
                      np.stack([np.array([[0, 1], [1, 0]], complex),
                                np.array([[0, -1j], [1j, 0]], complex),
                                np.array([[1, 0], [0, -1]], complex)]),
                      traj.states).real
    rows = [(t, b[0], b[1], b[2], b[2])
            for t, b in zip(traj.times, bloch)]
    evidence = {"trace_error": traj.metadata.get("trace_error"),
                "hermiticity_error": traj.metadata.get("hermiticity_error")}
    return RunnerOutput(["t", "rx", "ry", "rz", "sz"], rows, evidence,
                        {"grid": {"dt": traj.metadata["dt"]}})


def _run_qfi_dynamics(cfg: RunConfig, k_max: int, depth: int,
                      threads: int) -> RunnerOutput:
    t_end, dt, stride = _grid_options(cfg)
    runs = collect_offsets(
        cfg.sensor, cfg.bath, t_end, cfg.solver[0], k_max, depth,
        float(cfg.options.get("delta_frac", 1e-6)), dt, stride,
        bool(cfg.options.get("lamb_shift", False)),
        int(cfg.options.get("max_indices", 200_000)), threads)
    curve = qfi_from_runs(runs)
    rows = list(zip(curve.times, curve.values))
    evidence = {"delta_frac": curve.delta_frac,
                "offsets": "beta(1 -+ d), beta(1 -+ 2d), bath rebuilt per "
                           "offset, shared step"}
    return RunnerOutput(["t", "F_beta"], rows, evidence,
                        {"grid": {"dt": runs.minus2.metadata["dt"]}})


def _theta_worker(args):
    (cfg, theta, k_max, depth) = args
    sensor = replace(cfg.sensor, theta=theta)
    t_end, dt, stride = _grid_options(cfg)
    runs = collect_beta_offset_runs(
        sensor, cfg.bath, t_end, solver=cfg.solver[0], k_max=k_max,
        depth=depth, delta_frac=float(cfg.options.get("delta_frac", 1e-6)),
        dt=dt, stride=stride,
        lamb_shift=bool(cfg.options.get("lamb_shift", False)),
        max_indices=int(cfg.options.get("max_indices", 200_000)))
    t_opt, f_max = max_qfi_over_time(qfi_from_runs(runs))
    return (theta, t_opt, f_max), runs.minus2.metadata["dt"]


def _run_max_qfi_vs_theta(cfg: RunConfig, k_max: int, depth: int,
                          threads: int) -> RunnerOutput:
    thetas = cfg.sweep["theta"]
    results = _run_pool(_theta_worker,
                        [(cfg, theta, k_max, depth) for theta in thetas],
                        threads)
    rows = [row for row, _ in results]
    evidence = {"dt_per_theta": {format_number(t): dt
                                 for (t, _, _), dt in results}}
    return RunnerOutput(["theta", "t_opt", "F_max"], rows, evidence, {})


def _steady_chi_worker(args):
    (cfg, chi, k_max, depth, basis) = args
    p, beta = cfg.sensor, cfg.bath.beta
    omega = p.rabi_frequency()
    h = build_sensor_hamiltonian(p)
    opts = {**_STEADY_DEFAULTS, **{k: cfg.options[k] for k in _STEADY_DEFAULTS
                                   if k in cfg.options}}
    delta_frac = float(cfg.options.get("delta_frac", 1e-6))
    max_indices = int(cfg.options.get("max_indices", 200_000))
    k_bm = int(cfg.options.get("bm_k_max", BM_STEADY_K_MAX))
    lamb = bool(cfg.options.get("lamb_shift", False))
    bath = replace(cfg.bath, chi=chi)

    row = [chi]
    point_evidence = {}
    for solver in cfg.solver:
        if solver == "gibbs":
            ratio = math.exp(beta * omega)
            f_steady = gibbs_qfi(omega, beta)
            omega_tilde = omega
        elif solver == "bornmarkov":
            rho = _bm_steady_rho(p, bath, k_bm, lamb)
            omega_tilde = renormalized_frequency_from_steady(
                rho, h, beta, basis=basis)
            ratio = (_eigen_ratio(rho, h) if basis == "eigen"
                     else math.exp(beta * omega_tilde))
            f_steady = _bm_steady_qfi(p, bath, k_bm, delta_frac, lamb)
        else:
            f_steady, rho, t_s, dt = _heom_steady_qfi(
                p, bath, k_max, depth, delta_frac, opts["window"],
                opts["tol"], opts["t_max"], max_indices)
            omega_tilde = renormalized_frequency_from_steady(
                rho, h, beta, basis=basis)
            ratio = (_eigen_ratio(rho, h) if basis == "eigen"
                     else math.exp(beta * omega_tilde))
            point_evidence.update({"t_s": t_s, "dt": dt})
        row.extend([ratio, f_steady, omega_tilde])
    return tuple(row), point_evidence


def _run_steady_vs_chi(cfg: RunConfig, k_max: int, depth: int,
                       threads: int) -> RunnerOutput:
    basis = cfg.options.get("basis", "eigen")
    chis = cfg.sweep["chi"]
    results = _run_pool(_steady_chi_worker,
                        [(cfg, chi, k_max, depth, basis) for chi in chis],
                        threads)
    rows = [row for row, _ in results]
    header = ["chi"]
    for solver in cfg.solver:
        header.extend([f"ratio_{solver}", f"F_steady_{solver}",
                       f"omega_tilde_{solver}"])
    evidence = {
        "basis": basis,
        "points": {format_number(chi): ev
                   for chi, (_, ev) in zip(chis, results) if ev},
    }
    return RunnerOutput(header, rows, evidence, {})


def _table_point_worker(args):
    (cfg, chi, k_max, depth) = args
    from .polaron import solve_selfconsistent

    p = cfg.sensor
    omega = p.rabi_frequency()
    beta = cfg.bath.beta
    if chi == 0.0:
        # zero coupling: the sensor never relaxes and the displacement is
        # trivial — both ratios are exactly 1 by definition
        return (chi, 1.0, 1.0), {}
    bath = replace(cfg.bath, chi=chi)
    opts = {**_STEADY_DEFAULTS, **{k: cfg.options[k] for k in _STEADY_DEFAULTS
                                   if k in cfg.options}}
    pol = solve_selfconsistent(p, bath)
    rho, t_s, dt = _heom_steady_frozen(
        p, bath, k_max, depth, opts["window"], opts["tol"], opts["t_max"],
        int(cfg.options.get("max_indices", 200_000)))
    omega_h = renormalized_frequency_from_steady(rho, build_sensor_hamiltonian(p),
                                                 beta, basis="computational")
    return ((chi, pol.omega_p / omega, omega_h / omega),
            {"t_s": t_s, "dt": dt, "polaron_iterations": pol.iterations})


def _run_table1(cfg: RunConfig, k_max: int, depth: int,
                threads: int) -> RunnerOutput:
    chis = cfg.sweep.get("chi", TABLE_CHI_GRID)
    results = _run_pool(_table_point_worker,
                        [(cfg, chi, k_max, depth) for chi in chis], threads)
    rows = [row for row, _ in results]
    evidence = {
        "basis": "computational",
        "points": {format_number(chi): ev
                   for chi, (_, ev) in zip(chis, results) if ev},
    }
    if cfg.options.get("evidence", True):
        evidence["plateau"] = _table_plateau(cfg, k_max, depth, rows)
    return RunnerOutput(["chi", "omega_P_ratio", "omega_H_ratio"], rows,
                        evidence, {})


def _table_plateau(cfg, k_max, depth, rows) -> dict:
    """Truncation plateau at the strongest tested coupling.

    Reruns the worst-case point with k_max-2 and depth-1 and records how far
    the ratio moves; small deviations are the convergence evidence the
    manifest is required to carry.
    """
    candidates = [row for row in rows if row[0] > 0]
    if not candidates:
        return {}
    chi, _, production = max(candidates, key=lambda row: row[0])
    p = cfg.sensor
    beta = cfg.bath.beta
    omega = p.rabi_frequency()
    bath = replace(cfg.bath, chi=chi)
    opts = {**_STEADY_DEFAULTS, **{k: cfg.options[k] for k in _STEADY_DEFAULTS
                                   if k in cfg.options}}
    entries = []
    for k_red, l_red in ((max(k_max - 2, 0), depth), (k_max, max(depth - 1, 1))):
        if (k_red, l_red) == (k_max, depth):
            continue
        rho, _, _ = _heom_steady_frozen(
            p, bath, k_red, l_red, opts["window"], opts["tol"], opts["t_max"],
            int(cfg.options.get("max_indices", 200_000)))
        ratio = renormalized_frequency_from_steady(
            rho, build_sensor_hamiltonian(p), beta,
            basis="computational") / omega
        entries.append({"k_max": k_red, "depth": l_red, "omega_H_ratio": ratio,
                        "deviation": abs(ratio - production)})
    return {"chi": chi, "production": {"k_max": k_max, "depth": depth,
                                       "omega_H_ratio": production},
            "entries": entries}


def _run_compare_bm(cfg: RunConfig, k_max: int, depth: int,
                    threads: int) -> RunnerOutput:
    """HEOM and Born-Markov side by side on the same bath expansion.

    Sharing the ExponentialSeries is the point: it isolates the Born-Markov
    approximation itself from the (slowly converging) Matsubara tail, which
    would otherwise shift both curves together.
    """
    t_end, dt, stride = _grid_options(cfg)
    p = cfg.sensor
    h = build_sensor_hamiltonian(p)
    s = build_coupling_operator(p)
    series = matsubara_expand(cfg.bath, k_max)
    state = build_hierarchy(series, depth, build_initial_state(p),
                            max_indices=int(cfg.options.get("max_indices",
                                                            200_000)))
    traj_h = propagate(state, h, s, series, t_end, dt=dt, stride=stride,
                       self_check=dt is None)
    dt = traj_h.metadata["dt"]
    gen = build_bm_generator(p, series,
                             lamb_shift=bool(cfg.options.get("lamb_shift",
                                                             False)))
    traj_b = bm_propagate(gen, build_initial_state(p), t_end, dt=dt,
                          stride=stride, self_check=False)
    sz_h = sigma_z_expectation(traj_h)
    sz_b = sigma_z_expectation(traj_b)
    n = min(len(sz_h), len(sz_b))
    rows = list(zip(traj_h.times[:n], sz_h[:n], sz_b[:n]))
    deviation = float(np.max(np.abs(sz_h[:n] - sz_b[:n])))
    return RunnerOutput(["t", "sz_heom", "sz_bm"], rows,
                        {"max_abs_deviation": deviation,
                         "shared_k_max": k_max},
                        {"grid": {"dt": dt}})


def _run_converge(cfg: RunConfig, k_max: int, depth: int,
                  threads: int) -> RunnerOutput:
    t_end, dt, stride = _grid_options(cfg)
    depths = [int(d) for d in cfg.options.get(
        "depths", sorted({max(depth - 2, 1), max(depth - 1, 1), depth}))]
    k_maxes = [int(k) for k in cfg.options.get(
        "k_maxes", sorted({max(k_max - 1, 0), k_max}))]
    threshold = float(cfg.options.get("threshold", 1e-4))
    report = convergence_sweep(
        cfg.sensor, cfg.bath, build_initial_state(cfg.sensor), t_end,
        depths=depths, k_maxes=k_maxes, threshold=threshold,
        samples=int(cfg.options.get("samples", 201)), dt=dt,
        max_indices=int(cfg.options.get("max_indices", 200_000)))
    rows = [(e["k_max"], e["depth"],
             float("nan") if e["deviation"] is None else e["deviation"])
            for e in report.entries]
    evidence = {"entries": report.entries, "converged": report.converged,
                "threshold": report.threshold, **report.metadata}
    return RunnerOutput(["k_max", "depth", "deviation"], rows, evidence, {})


RUNNERS = {
    "dynamics": _run_dynamics,
    "qfi-dynamics": _run_qfi_dynamics,
    "max-qfi-vs-theta": _run_max_qfi_vs_theta,
    "steady-vs-chi": _run_steady_vs_chi,
    "table1": _run_table1,
    "compare-bm": _run_compare_bm,
    "converge": _run_converge,
}


# --------------------------------------------------------------------------
# config <-> mapping plumbing

def config_to_mapping(cfg: RunConfig, k_max: int | None = None,
                      depth: int | None = None) -> dict:
    """JSON/YAML-safe mapping that round-trips through config_from_mapping."""
    data = {
        "experiment": cfg.experiment,
        "sensor": {k: float(v) for k, v in asdict(cfg.sensor).items()},
        "bath": {k: float(v) for k, v in asdict(cfg.bath).items()},
        "solver": (cfg.solver[0] if len(cfg.solver) == 1
                   else list(cfg.solver)),
        "truncation": {
            "k_max": cfg.truncation.k_max if k_max is None else k_max,
            "depth": cfg.truncation.depth if depth is None else depth,
        },
        "output": {"path": cfg.output.path, "format": cfg.output.format},
        "options": dict(cfg.options),
    }
    if data["truncation"]["k_max"] is None:
        data["truncation"]["k_max"] = "auto"
    if data["truncation"]["depth"] is None:
        data["truncation"]["depth"] = "auto"
    if cfg.grid is not None:
        data["grid"] = {"t_end": cfg.grid.t_end, "stride": cfg.grid.stride}
        if cfg.grid.dt is not None:
            data["grid"]["dt"] = cfg.grid.dt
    if cfg.sweep:
        data["sweep"] = {axis: list(values)
                         for axis, values in cfg.sweep.items()}
    return data


def _apply_updates(mapping: dict, updates: dict) -> None:
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(mapping.get(key), dict):
            _apply_updates(mapping[key], value)
        else:
            mapping[key] = value


# --------------------------------------------------------------------------
# entry points

def execute_run(cfg: RunConfig, output_dir: str | Path, threads: int = 1,
                plot: bool = True, seed: int | None = None) -> RunResult:
    started = time.perf_counter()
    extra = [a for a in cfg.sweep if a != INTRINSIC_AXES.get(cfg.experiment)]
    if extra:
        raise ConfigError([f"sweep axes {extra} are not consumed by "
                           f"{cfg.experiment}; use the sweep subcommand"])
    k_max, depth, evidence = resolve_truncation(cfg)
    out = RUNNERS[cfg.experiment](cfg, k_max, depth, threads)
    evidence.update(out.evidence)
    resolved = config_to_mapping(cfg, k_max=k_max, depth=depth)
    _apply_updates(resolved, out.resolved_updates)
    return _write_outputs(cfg, resolved, out, evidence, output_dir, threads,
                          plot, seed, started, mode="run")


def execute_sweep(cfg: RunConfig, output_dir: str | Path, threads: int = 1,
                  plot: bool = True, seed: int | None = None) -> RunResult:
    """Cartesian product over the non-intrinsic sweep axes.

    Axis values become leading CSV columns; each point runs the experiment
    with that parameter substituted.  Points fan out to the pool; inside a
    point everything is serial so the worker count cannot reorder any sums.
    """
    started = time.perf_counter()
    intrinsic = INTRINSIC_AXES.get(cfg.experiment)
    axes = [a for a in cfg.sweep if a != intrinsic]
    if not axes:
        raise ConfigError(["sweep requested but no sweep axes beyond the "
                           "experiment's own; use `run`"])
    combos = list(itertools.product(*(cfg.sweep[a] for a in axes)))
    jobs = []
    for combo in combos:
        point = cfg
        for axis, value in zip(axes, combo):
            if axis in ("chi", "omega_c", "beta"):
                point = replace(point, bath=replace(point.bath,
                                                    **{axis: value}))
            else:
                point = replace(point, sensor=replace(point.sensor,
                                                      **{axis: value}))
        jobs.append((point, combo))
    results = _run_pool(_sweep_point_worker,
                        [(point, combo) for point, combo in jobs],
                        threads)

    header = None
    rows: list[tuple] = []
    evidence: dict = {"axes": axes, "points": {}}
    for (point, combo), (out, point_k, point_depth) in zip(jobs, results):
        if header is None:
            header = list(axes) + out.header
        key = ",".join(f"{a}={format_number(v)}"
                       for a, v in zip(axes, combo))
        point_evidence = {"k_max": point_k, "depth": point_depth,
                          **out.evidence}
        if out.resolved_updates:
            point_evidence["resolved"] = out.resolved_updates
        evidence["points"][key] = point_evidence
        rows.extend(tuple(combo) + tuple(row) for row in out.rows)

    resolved = config_to_mapping(cfg)
    out_stub = RunnerOutput(header or list(axes), rows, evidence, {})
    return _write_outputs(cfg, resolved, out_stub, evidence, output_dir,
                          threads, plot, seed, started, mode="sweep")


def _sweep_point_worker(args):
    point, _combo = args
    k_max, depth, _ = resolve_truncation(point)
    out = RUNNERS[point.experiment](point, k_max, depth, threads=1)
    return out, k_max, depth


def _write_outputs(cfg, resolved, out, evidence, output_dir, threads, plot,
                   seed, started, mode) -> RunResult:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    base = cfg.output.path
    csv_path = output_dir / f"{base}.csv"
    manifest_path = output_dir / f"{base}.manifest.json"
    write_csv(csv_path, out.header, out.rows)

    manifest = RunManifest(
        experiment=cfg.experiment,
        resolved_config=resolved,
        convergence=evidence,
        threads=threads,
        seed=seed,
        mode=mode,
    )
    manifest.register_output("csv", csv_path, output_dir)

    png_path = None
    if plot:
        from .plotting import render_csv
        png_path = output_dir / f"{base}.png"
        render_csv(csv_path, cfg.experiment, png_path, header=out.header)
        manifest.register_output("png", png_path, output_dir)

    manifest.wall_time_s = time.perf_counter() - started
    manifest.save(manifest_path)
    return RunResult(csv_path=csv_path, manifest_path=manifest_path,
                     manifest=manifest, header=out.header, rows=out.rows,
                     png_path=png_path)


def replay_manifest(manifest_path: str | Path, output_dir: str | Path,
                    threads: int = 1, plot: bool = False) -> RunResult:
    """Re-execute a manifest's resolved config; must byte-reproduce the CSV."""
    manifest = RunManifest.load(manifest_path)
    cfg = config_from_mapping(manifest.resolved_config)
    runner = execute_sweep if manifest.mode == "sweep" else execute_run
    return runner(cfg, output_dir, threads=threads, plot=plot,
                  seed=manifest.seed)
