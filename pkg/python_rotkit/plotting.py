"""Static SVG figures from result CSVs."""

from __future__ import annotations

import io
import logging
from collections import defaultdict

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure
from scipy.stats import gaussian_kde

from python_rotkit import helpers
from python_rotkit.const import (
    CHORDAL_MAX,
    CSV_SCHEMAS,
    PLOT_SCHEMAS,
    REPRESENTATION_WIDTH,
    PlotKind,
    RepresentationType,
)
from python_rotkit.exceptions import DataError

_LOGGER = logging.getLogger(__name__)

mpl.use("Agg")
# fixed element ids so identical data gives identical bytes
mpl.rcParams["svg.hashsalt"] = "rotkit"

_DENSITY_POINTS = 200


def _column(rows: list[list[str]], header: list[str], name: str) -> np.ndarray:
    index = header.index(name)
    return np.array([float(row[index]) for row in rows], dtype=np.float64)


def _scatter(fig: Figure, header: list[str], rows: list[list[str]]) -> None:
    ax = fig.add_subplot()
    ax.set_xlabel(header[1])
    ax.set_ylabel(header[2])
    groups: dict[str, list[list[str]]] = defaultdict(list)
    for row in rows:
        groups[row[0]].append(row)
    for rep, members in groups.items():
        ax.scatter(_column(members, header, "d_so3"), _column(members, header, "d_repr"), s=2, label=rep)
        try:
            width = REPRESENTATION_WIDTH[RepresentationType(rep)]
        except (KeyError, ValueError):
            continue
        ax.axhline(width, color="red", linewidth=0.8, linestyle="--")
    ax.plot([0.0, CHORDAL_MAX], [0.0, CHORDAL_MAX], color="black", linewidth=0.8, label="ratio 1")
    if rows:
        ax.legend(loc="upper left")


def _density(fig: Figure, header: list[str], rows: list[list[str]]) -> str:
    ax = fig.add_subplot()
    ax.set_xlabel(f"log {header[2]}")
    ax.set_ylabel("density")
    groups: dict[str, list[float]] = defaultdict(list)
    for row in rows:
        groups[f"{row[0]} {row[1]}"].append(float(row[2]))
    bandwidths = []
    for label, ratios in groups.items():
        logs = np.log(np.asarray(ratios))
        if logs.size < 2 or np.ptp(logs) == 0.0:
            _LOGGER.debug("density %s skipped: %d distinct samples", label, np.unique(logs).size)
            continue
        kde = gaussian_kde(logs)
        grid = np.linspace(logs.min(), logs.max(), _DENSITY_POINTS)
        ax.plot(grid, kde(grid), label=label)
        bandwidths.append(f"{label}={kde.factor * float(np.std(logs, ddof=1)):.6g}")
    if bandwidths:
        ax.legend()
    return "kde bandwidth " + ("; ".join(bandwidths) or "n/a")


def _vecfield(fig: Figure, header: list[str], rows: list[list[str]]) -> None:
    ax = fig.add_subplot()
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    ax.set_aspect("equal")
    if not rows:
        return
    y1, y2 = _column(rows, header, "y1"), _column(rows, header, "y2")
    gx, gy = _column(rows, header, "gx"), _column(rows, header, "gy")
    defined = _column(rows, header, "defined") > 0.5
    ax.quiver(y1[defined], y2[defined], gx[defined], gy[defined], angles="xy")
    ax.scatter(y1[~defined], y2[~defined], marker="x", color="red", label="undefined")
    ax.legend(loc="upper left")


def _paths(fig: Figure, header: list[str], rows: list[list[str]]) -> None:
    ax = fig.add_subplot()
    ax.set_xlabel(header[1])
    ax.set_ylabel(header[-1])
    ax.set_yscale("log")
    traces: dict[str, dict[int, float]] = defaultdict(dict)
    for row in rows:
        traces[row[0]][int(row[1])] = float(row[-1])
    for run, trace in traces.items():
        steps = sorted(trace)
        # log axes cannot show an exact zero
        ax.plot(steps, [max(trace[s], np.finfo(float).tiny) for s in steps], linewidth=0.6, label=run)


def render_svg(kind: PlotKind, text: str) -> str:
    """SVG for a result CSV; the header must match the schema of ``kind``."""
    schema = list(CSV_SCHEMAS[PLOT_SCHEMAS[kind]])
    if text.strip():
        header, rows = helpers.table_from_csv(text)
    else:
        header, rows = schema, []
    if header != schema:
        raise DataError(f"line 1: {kind.value} plot expects columns {','.join(schema)}, got {','.join(header)}")

    fig = Figure(figsize=(6.4, 4.8))
    description = f"{kind.value} plot of {len(rows)} rows"
    match kind:
        case PlotKind.SCATTER:
            _scatter(fig, header, rows)
        case PlotKind.DENSITY:
            description = _density(fig, header, rows)
        case PlotKind.VECFIELD:
            _vecfield(fig, header, rows)
        case PlotKind.PATHS:
            _paths(fig, header, rows)

    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None, "Description": description})
    _LOGGER.debug("rendered %s plot with %d rows", kind.value, len(rows))
    return buffer.getvalue()
