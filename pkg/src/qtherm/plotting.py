"""Figure rendering for the CLI report path.

One PNG per run, drawn from the CSV that was just written (not from live
arrays), so the plot is guaranteed to show exactly what the data file says.
Determinism claims stay on the CSV bytes; the PNG is registered in the
manifest with a checksum but its bytes depend on the matplotlib build.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    return header, data


def _column(header, data, name):
    return data[:, header.index(name)]


def _grouped(header, data, known_tail):
    """Split rows on leading sweep-axis columns (everything before the tail)."""
    n_axes = len(header) - len(known_tail)
    if n_axes <= 0 or len(data) == 0:
        return [("", data)]
    keys = data[:, :n_axes]
    groups = []
    seen = []
    for key in keys:
        tup = tuple(key)
        if tup not in seen:
            seen.append(tup)
    for tup in seen:
        mask = np.all(keys == np.array(tup), axis=1)
        label = ", ".join(f"{header[i]}={tup[i]:g}" for i in range(n_axes))
        groups.append((label, data[mask]))
    return groups


def render_csv(csv_path: str | Path, experiment: str, png_path: str | Path,
               header: list[str] | None = None) -> Path:
    header_read, data = _read_csv(csv_path)
    header = header_read
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)

    if experiment == "dynamics":
        tail = ["t", "rx", "ry", "rz", "sz"]
        for label, block in _grouped(header, data, tail):
            t = block[:, header.index("t")]
            ax.plot(t, block[:, header.index("sz")],
                    label=(label + " " if label else "") + "sz")
            for comp in ("rx", "ry"):
                ax.plot(t, block[:, header.index(comp)], alpha=0.4, lw=0.8,
                        label=(label + " " if label else "") + comp)
        ax.set_xlabel("t (1/Delta)")
        ax.set_ylabel("Bloch components")

    elif experiment == "qfi-dynamics":
        tail = ["t", "F_beta"]
        for label, block in _grouped(header, data, tail):
            ax.plot(block[:, header.index("t")],
                    block[:, header.index("F_beta")], label=label or None)
        ax.set_xlabel("t (1/Delta)")
        ax.set_ylabel("F_beta")

    elif experiment == "max-qfi-vs-theta":
        tail = ["theta", "t_opt", "F_max"]
        for label, block in _grouped(header, data, tail):
            ax.plot(block[:, header.index("theta")],
                    block[:, header.index("F_max")], marker="o",
                    label=label or None)
        ax.set_xlabel("theta (rad)")
        ax.set_ylabel("max_t F_beta")

    elif experiment == "steady-vs-chi":
        chi = _column(header, data, "chi")
        ratio_cols = [h for h in header if h.startswith("ratio_")]
        f_cols = [h for h in header if h.startswith("F_steady_")]
        ax.set_xlabel("chi (Delta)")
        ax.set_ylabel("p_g / p_e")
        for name in ratio_cols:
            ax.plot(chi, _column(header, data, name), marker="s",
                    label=name.replace("ratio_", ""))
        ax2 = ax.twinx()
        for name in f_cols:
            ax2.plot(chi, _column(header, data, name), marker="*", ls="--",
                     label=name.replace("F_steady_", "") + " QFI")
        ax2.set_ylabel("steady-state QFI")
        lines, labels = ax.get_legend_handles_labels()
        lines2, labels2 = ax2.get_legend_handles_labels()
        ax.legend(lines + lines2, labels + labels2, fontsize=8)

    elif experiment == "table1":
        chi = _column(header, data, "chi")
        ax.plot(chi, _column(header, data, "omega_P_ratio"), marker="o",
                label="polaron")
        ax.plot(chi, _column(header, data, "omega_H_ratio"), marker="s",
                label="hierarchy")
        ax.set_xlabel("chi (Delta)")
        ax.set_ylabel("renormalized frequency / Omega")

    elif experiment == "compare-bm":
        tail = ["t", "sz_heom", "sz_bm"]
        for label, block in _grouped(header, data, tail):
            t = block[:, header.index("t")]
            line, = ax.plot(t, block[:, header.index("sz_heom")],
                            label=(label + " " if label else "") + "hierarchy")
            ax.plot(t, block[:, header.index("sz_bm")], ls="--",
                    color=line.get_color(),
                    label=(label + " " if label else "") + "Born-Markov")
        ax.set_xlabel("t (1/Delta)")
        ax.set_ylabel("<sigma_z>")

    elif experiment == "converge":
        labels = [f"K={int(k)},L={int(d)}" for k, d in data[:, :2]]
        dev = data[:, 2]
        finite = np.isfinite(dev)
        ax.semilogy(np.arange(len(dev))[finite], dev[finite], marker="o")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45, fontsize=7)
        ax.set_ylabel("successive max deviation of <sigma_z>")

    else:
        raise ValueError(f"no renderer for experiment {experiment!r}")

    if experiment not in ("steady-vs-chi",):
        handles, labels = ax.get_legend_handles_labels()
        if labels:
            ax.legend(fontsize=8)
    ax.set_title(experiment)
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)
    return Path(png_path)
