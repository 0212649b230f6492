"""Plot data series and rendered figures for simulation reports."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .zonotope import Zonotope, interval_hull

SPEED_COLUMNS = ("t", "x", "speed", "target_speed", "level")
HULL_COLUMNS = ("t", "node", "x_lo", "x_hi", "y_lo", "y_hi", "area", "frobenius")

_LEVEL_COLOURS = {"nominal": "#2b8a3e", "cautious": "#e8a33d", "slow": "#d9480f", "very_slow": "#a61e4d"}


def speed_series(report) -> list[dict]:
    return [
        {"t": r["t"], "x": r["ego"]["x"], "speed": r["ego"]["speed"],
         "target_speed": r["target_speed"], "level": r["level"]}
        for r in report.records
    ]


def hull_series(report) -> list[dict]:
    """Position hull and area of every node's set at every step it exists."""
    rows = []
    for r in report.records:
        for node, info in sorted(r["nodes"].items()):
            hull = interval_hull(Zonotope.from_record(info["set"]))
            rows.append({"t": r["t"], "node": node,
                         "x_lo": float(hull.lower[0]), "x_hi": float(hull.upper[0]),
                         "y_lo": float(hull.lower[1]), "y_hi": float(hull.upper[1]),
                         "area": info["area"], "frobenius": info["frobenius"]})
    return rows


def write_csv(path, rows, columns) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def plot_speed(reports: dict, path) -> Path:
    """Ego speed against time, one line per labelled report."""
    fig = Figure(figsize=(7, 3.5), layout="constrained")
    ax = fig.add_subplot()
    for label, rep in reports.items():
        s = speed_series(rep)
        ax.plot([p["t"] for p in s], [p["speed"] for p in s], label=label, lw=1.4)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("ego speed [m/s]")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    if len(reports) > 1:
        ax.legend(frameon=False, fontsize="small")
    fig.savefig(path, dpi=120)
    return Path(path)


def plot_levels(report, path) -> Path:
    """Single-run speed trace coloured by the active speed level."""
    s = speed_series(report)
    t = np.array([p["t"] for p in s])
    v = np.array([p["speed"] for p in s])
    levels = [p["level"] for p in s]
    fig = Figure(figsize=(7, 3.5), layout="constrained")
    ax = fig.add_subplot()
    ax.plot(t, v, color="0.3", lw=1.0)
    for name, colour in _LEVEL_COLOURS.items():
        mask = np.array([lv == name for lv in levels])
        if mask.any():
            ax.scatter(t[mask], v[mask], s=6, color=colour, label=name.replace("_", " "))
    for e in report.events:
        if e["kind"] == "emergency_brake":
            ax.axvline(e["t"], color="k", ls=":", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("ego speed [m/s]")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False, fontsize="small", markerscale=2)
    ax.grid(alpha=0.3)
    fig.savefig(path, dpi=120)
    return Path(path)


def plot_hulls(report, path) -> Path:
    """Fused-set area per node over time, and the ego's position hull against the truth."""
    rows = hull_series(report)
    fig = Figure(figsize=(7, 6), layout="constrained")
    ax_area, ax_y = fig.subplots(2, 1, sharex=True)
    for node in sorted({r["node"] for r in rows}):
        mine = [r for r in rows if r["node"] == node]
        ax_area.plot([r["t"] for r in mine], [r["area"] for r in mine], ".", ms=2, label=node)
    ax_area.set_yscale("log")
    ax_area.set_ylabel("position area [m²]")
    ax_area.legend(frameon=False, fontsize="small")
    ax_area.grid(alpha=0.3)

    ego = [r for r in rows if r["node"] == "ego"]
    if ego:
        t = [r["t"] for r in ego]
        ax_y.fill_between(t, [r["y_lo"] for r in ego], [r["y_hi"] for r in ego],
                          alpha=0.3, step="mid", label="ego set, y hull")
    truth = [(r["t"], r["pedestrian"][1]) for r in report.records if r["pedestrian"] is not None]
    if truth:
        ax_y.plot(*zip(*truth), color="k", lw=1.0, label="pedestrian y")
    ax_y.set_xlabel("time [s]")
    ax_y.set_ylabel("y [m]")
    ax_y.legend(frameon=False, fontsize="small")
    ax_y.grid(alpha=0.3)
    fig.savefig(path, dpi=120)
    return Path(path)
