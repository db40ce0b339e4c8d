"""Command-line interface: `qtherm run|validate|sweep`.

Exit codes: 0 success; 2 configuration problems (validation diagnostics,
memory-estimate rejection); 3 solver non-convergence (no steady state,
fixed-point iteration cap, step instability); 4 degeneracies surfaced from
the physics modules (Matsubara resonance, non-unique steady state, population
underflow, divergent displacement exponent).

The default output directory comes from $QTHERM_OUTPUT_DIR, falling back to
the working directory.  `run --replay <manifest>` re-executes a previous
run's resolved configuration and reproduces its CSV byte-for-byte.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .config import DEFAULT_MAX_MEMORY, estimate_memory_bytes, load_config, validate_file
from .errors import (ConfigError, DegenerateMatsubara, DegeneratePopulation,
                     DegenerateSteadyState, DivergentExponent,
                     HierarchyTooLarge, NoConvergence, NoSteadyState,
                     QuadratureNoConvergence, StepInstability)
from .experiments import execute_run, execute_sweep, replay_manifest

EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_DEGENERACY = 4

_NONCONVERGENCE = (NoSteadyState, NoConvergence, StepInstability,
                   QuadratureNoConvergence)
_DEGENERACY = (DegenerateMatsubara, DegenerateSteadyState,
               DegeneratePopulation, DivergentExponent)


def _default_output_dir() -> str:
    return os.environ.get("QTHERM_OUTPUT_DIR", ".")


def _parse_memory(text: str | None) -> int:
    if text is None:
        return DEFAULT_MAX_MEMORY
    text = text.strip()
    suffixes = {"k": 1024, "m": 1024**2, "g": 1024**3}
    factor = suffixes.get(text[-1].lower()) if text else None
    try:
        if factor is not None:
            return int(float(text[:-1]) * factor)
        return int(text)
    except ValueError:
        raise click.BadParameter(
            f"--max-memory wants bytes or a K/M/G suffix, got {text!r}")


def _common_options(fn):
    fn = click.option("--output-dir", type=click.Path(file_okay=False),
                      default=_default_output_dir,
                      help="Directory for CSV/manifest/PNG "
                           "(default $QTHERM_OUTPUT_DIR or '.').")(fn)
    fn = click.option("--threads", type=int, default=1, show_default=True,
                      help="Process-pool width for sweep points and "
                           "beta-offset runs; results are identical for any "
                           "value.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Recorded in the manifest (reserved; no "
                           "stochastic components yet).")(fn)
    fn = click.option("--max-memory", default=None,
                      help="Memory budget for the hierarchy, e.g. 2G "
                           "(default 3G).")(fn)
    fn = click.option("--no-plot", is_flag=True,
                      help="Skip the PNG next to the CSV.")(fn)
    return fn


def _reject_oversized(cfg, max_memory: int) -> None:
    k, depth = cfg.truncation.k_max, cfg.truncation.depth
    if k is not None and depth is not None:
        estimate = estimate_memory_bytes(k, depth)
        if estimate > max_memory:
            raise ConfigError(
                [f"truncation (k_max={k}, depth={depth}) needs "
                 f"~{estimate / 1024**3:.2f} GiB > budget "
                 f"{max_memory / 1024**3:.2f} GiB"])


def _execute(action, *args, **kwargs):
    try:
        return action(*args, **kwargs)
    except ConfigError as exc:
        click.echo(json.dumps({"error": "config",
                               "diagnostics": exc.diagnostics}, indent=2),
                   err=True)
        sys.exit(EXIT_CONFIG)
    except HierarchyTooLarge as exc:
        click.echo(json.dumps({"error": "config",
                               "diagnostics": [str(exc)]}, indent=2), err=True)
        sys.exit(EXIT_CONFIG)
    except _NONCONVERGENCE as exc:
        click.echo(f"no convergence: {exc}", err=True)
        sys.exit(EXIT_NONCONVERGENCE)
    except _DEGENERACY as exc:
        click.echo(f"degeneracy: {exc}", err=True)
        sys.exit(EXIT_DEGENERACY)


def _report(result) -> None:
    click.echo(f"rows: {len(result.rows)}")
    for name, entry in result.manifest.outputs.items():
        click.echo(f"{name}: {entry['path']}  sha256 {entry['sha256'][:12]}…")
    click.echo(f"wall time: {result.manifest.wall_time_s:.2f} s")


@click.group()
@click.version_option(__version__)
def main():
    """Qubit-thermometer experiments: hierarchy vs Born-Markov vs Gibbs."""


@main.command()
@click.argument("config_file", required=False,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--replay", "replay_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Re-execute a manifest's resolved config instead of "
                   "reading a config file.")
@_common_options
def run(config_file, replay_path, output_dir, threads, seed, max_memory,
        no_plot):
    """Run one experiment from CONFIG_FILE (or --replay MANIFEST)."""
    if (config_file is None) == (replay_path is None):
        raise click.UsageError("pass exactly one of CONFIG_FILE or --replay")
    budget = _parse_memory(max_memory)

    if replay_path is not None:
        result = _execute(replay_manifest, replay_path, output_dir,
                          threads=threads, plot=not no_plot)
    else:
        def _load_and_run():
            cfg = load_config(config_file)
            _reject_oversized(cfg, budget)
            return execute_run(cfg, output_dir, threads=threads,
                               plot=not no_plot, seed=seed)
        result = _execute(_load_and_run)
    _report(result)


@main.command()
@click.argument("config_file", type=click.Path(dir_okay=False))
def validate(config_file):
    """Check CONFIG_FILE and print a machine-readable diagnostics list.

    Exit 2 when any error-severity diagnostic exists; warnings alone exit 0.
    """
    diagnostics = validate_file(config_file)
    click.echo(json.dumps([d.to_dict() for d in diagnostics], indent=2))
    if any(d.severity == "error" for d in diagnostics):
        sys.exit(EXIT_CONFIG)


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@_common_options
def sweep(config_file, output_dir, threads, seed, max_memory, no_plot):
    """Run the sweep axes of CONFIG_FILE as one combined data set."""
    budget = _parse_memory(max_memory)

    def _load_and_sweep():
        cfg = load_config(config_file)
        _reject_oversized(cfg, budget)
        return execute_sweep(cfg, output_dir, threads=threads,
                             plot=not no_plot, seed=seed)
    result = _execute(_load_and_sweep)
    _report(result)


if __name__ == "__main__":
    main()
