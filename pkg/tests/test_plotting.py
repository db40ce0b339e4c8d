"""PNG rendering reads the CSV back (the figure shows what the file says),
one branch per experiment, grouped by leading sweep axes when present.
"""

import csv
from pathlib import Path

import pytest

from qtherm.plotting import render_csv


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


CASES = {
    "dynamics": (
        ["t", "rx", "ry", "rz", "sz"],
        [[0.0, 0.0, 0.1, 1.0, 0.3], [1.0, 0.2, 0.0, 0.8, 0.1]],
    ),
    "qfi-dynamics": (
        ["t", "F_beta"],
        [[0.0, 0.0], [1.0, 2.5], [2.0, 1.9]],
    ),
    "max-qfi-vs-theta": (
        ["theta", "t_opt", "F_max"],
        [[0.0, 3.0, 40.0], [0.5, 4.0, 42.0]],
    ),
    "steady-vs-chi": (
        ["chi", "ratio_heom", "F_steady_heom", "omega_tilde_heom",
         "ratio_gibbs", "F_steady_gibbs", "omega_tilde_gibbs"],
        [[0.25, 2.9, 0.3, 1.05, 3.06, 0.23, 1.12],
         [0.5, 2.7, 0.28, 0.99, 3.06, 0.23, 1.12]],
    ),
    "table1": (
        ["chi", "omega_P_ratio", "omega_H_ratio"],
        [[0.0, 1.0, 1.0], [0.1, 0.98, 0.83], [0.2, 0.97, 0.74]],
    ),
    "compare-bm": (
        ["t", "sz_heom", "sz_bm"],
        [[0.0, 0.3, 0.3], [1.0, 0.1, 0.12], [2.0, -0.05, 0.0]],
    ),
    "converge": (
        ["k_max", "depth", "deviation"],
        [[1, 2, 0.1], [1, 3, 0.01], [2, 3, float("nan")]],
    ),
}


@pytest.mark.parametrize("experiment", sorted(CASES))
def test_render_each_experiment(tmp_path, experiment):
    header, rows = CASES[experiment]
    path = write_csv(tmp_path / "data.csv", header, rows)
    png = tmp_path / "data.png"
    render_csv(path, experiment, png)
    assert png.exists()
    assert png.stat().st_size > 1000


def test_render_grouped_by_sweep_axis(tmp_path):
    header = ["omega_c", "t", "rx", "ry", "rz", "sz"]
    rows = [[0.5, 0.0, 0.0, 0.1, 1.0, 0.3], [0.5, 1.0, 0.2, 0.0, 0.8, 0.1],
            [10.0, 0.0, 0.0, 0.1, 1.0, 0.3], [10.0, 1.0, 0.1, 0.1, 0.7, 0.2]]
    path = write_csv(tmp_path / "sweep.csv", header, rows)
    png = tmp_path / "sweep.png"
    render_csv(path, "dynamics", png)
    assert png.exists() and png.stat().st_size > 1000


def test_unknown_experiment_raises(tmp_path):
    path = write_csv(tmp_path / "x.csv", ["a"], [[1.0]])
    with pytest.raises(ValueError, match="experiment"):
        render_csv(path, "mystery", tmp_path / "x.png")
