"""Deterministic artifact writers: delimited tables, JSON, and SVG figures.

All writers produce byte-identical output for identical inputs: floats are
formatted with a fixed %.12g, JSON is sorted and newline-terminated, and the
figure renderer pins the SVG hash salt and strips the embedded date.  Timing
columns vary between runs, so they stay behind an opt-in flag.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .dde import Trajectory  # noqa: E402
from .search import SearchOutcome  # noqa: E402

__all__ = [
    "format_number",
    "write_json",
    "write_probes_csv",
    "write_cells_csv",
    "cell_from_outcome",
    "write_trajectory_csv",
    "write_suite_csv",
    "render_trajectory_svg",
    "run_manifest",
]

_SVG_SALT = "delaycert"


def format_number(value) -> str:
    """Fixed-width-free, locale-free rendering used by every table writer."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12g" % float(value)
    return str(value)


def write_json(obj, path) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def write_probes_csv(outcome: SearchOutcome, path, include_timing: bool = False) -> None:
    """One row per bisection probe, in probe order."""
    header = [outcome.variable, "xi", "certified", "shift", "anchor"]
    if include_timing:
        header.append("solve_time")
    rows = []
    for p in outcome.probes:
        row = [p.value, p.xi, p.certified, p.shift, "" if p.anchor is None else p.anchor]
        if include_timing:
            row.append(p.solve_time)
        rows.append(row)
    _write_rows(path, header, rows)


def cell_from_outcome(outcome: SearchOutcome, mu: float) -> dict:
    """Table-cell record for one finished search."""
    cert = outcome.best
    return {
        "mu": mu,
        "variable": outcome.variable,
        "value": outcome.best_value,
        "certified": outcome.certified,
        "xi": cert.xi if cert else None,
        "margin": min(cert.margins.values()) if cert else None,
        "anchor": cert.attenuation_anchor if cert else None,
        "solve_time": cert.solver.solve_time if cert else None,
    }


def write_cells_csv(cells, path, include_timing: bool = False) -> None:
    """Per-cell summary rows (one searched table cell per row)."""
    header = ["mu", "variable", "value", "certified", "xi", "margin", "anchor"]
    if include_timing:
        header.append("solve_time")
    rows = []
    for cell in cells:
        row = [
            cell["mu"],
            cell["variable"],
            "" if cell["value"] is None else cell["value"],
            cell["certified"],
            "" if cell["xi"] is None else cell["xi"],
            "" if cell["margin"] is None else cell["margin"],
            "" if cell.get("anchor") is None else cell["anchor"],
        ]
        if include_timing:
            row.append("" if cell["solve_time"] is None else cell["solve_time"])
        rows.append(row)
    _write_rows(path, header, rows)


def write_trajectory_csv(traj: Trajectory, delay, path) -> None:
    """Time grid, state components, and the delay signal sampled on the grid."""
    n = traj.dim
    header = ["t"] + [f"r{i + 1}" for i in range(n)] + ["h"]
    hvals = np.asarray(delay(traj.t), dtype=float)
    rows = (
        [traj.t[i]] + [traj.r[i, j] for j in range(n)] + [hvals[i]]
        for i in range(len(traj.t))
    )
    _write_rows(path, header, rows)


def write_suite_csv(cases, path) -> None:
    """Inequality-suite cases with their slacks, one row per case."""
    header = [
        "index",
        "kind",
        "dim",
        "c1",
        "c2",
        "delta",
        "lhs",
        "rhs",
        "slack",
        "scale",
        "rhs_prev_order",
        "corollary_gap",
    ]
    rows = (
        [
            c.index,
            c.kind,
            c.dim,
            c.c1,
            c.c2,
            c.delta,
            c.lhs,
            c.rhs,
            c.slack,
            c.scale,
            c.rhs_prev_order,
            c.corollary_gap,
        ]
        for c in cases
    )
    _write_rows(path, header, rows)


def render_trajectory_svg(
    traj: Trajectory,
    path,
    delay=None,
    envelope: tuple[float, float, float] | None = None,
    title: str | None = None,
) -> None:
    """Line plot of the state components, reproducibly rendered to SVG.

    envelope, when given, is (gain, rate, history_norm): the dashed curves
    +/- gain * history_norm * e^{-rate t} are overlaid so decay against the
    certified envelope is visible at a glance.
    """
    with matplotlib.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        try:
            for j in range(traj.dim):
                ax.plot(traj.t, traj.r[:, j], linewidth=1.4, label=f"r{j + 1}(t)")
            if envelope is not None:
                gain, rate, phi_norm = envelope
                bound = gain * phi_norm * np.exp(-rate * traj.t)
                ax.plot(traj.t, bound, "k--", linewidth=1.0, label="envelope")
                ax.plot(traj.t, -bound, "k--", linewidth=1.0)
            if delay is not None:
                ax2 = ax.twinx()
                ax2.plot(traj.t, np.asarray(delay(traj.t), dtype=float),
                         color="0.6", linewidth=0.8, alpha=0.7)
                ax2.set_ylabel("h(t)", color="0.45")
                ax2.tick_params(axis="y", colors="0.45")
            ax.set_xlabel("t")
            ax.set_ylabel("state")
            if title:
                ax.set_title(title)
            ax.legend(loc="upper right", fontsize=8)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def run_manifest(command: str, parameters: dict, input_paths=(), seed: int | None = None) -> dict:
    """Machine-readable record of what produced a set of artifacts."""
    from . import __version__

    inputs = {str(p): _sha256(p) for p in input_paths}
    return {
        "schema": "delaycert.manifest/1",
        "command": command,
        "parameters": parameters,
        "inputs": inputs,
        "seed": seed,
        "versions": {
            "delaycert": __version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "matplotlib": matplotlib.__version__,
        },
    }
