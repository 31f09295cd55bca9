"""The four figure kinds and their renderer.

Each renderer draws from one input file, labels axes with units, and writes
a static image.  Rendering never mutates its inputs; with a fixed
matplotlib version, rendering the same spec twice produces identical PNG
bytes (the writer embeds no timestamps).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first
import numpy as np  # noqa: E402

from .tables import SchemaError, TraceTable, read_metrics, read_trace

KINDS = ("manipulability", "ee_path", "jerk", "force_distance")

# Which input file each kind draws from.
_NEEDS = {
    "manipulability": "trace",
    "ee_path": "trace",
    "jerk": "metrics",
    "force_distance": "trace",
}

_TITLES = {
    "manipulability": "Control-point manipulability",
    "ee_path": "End-effector path",
    "jerk": "Peak jerk per second",
    "force_distance": "Repulsion vs distance",
}


@dataclass(frozen=True)
class FigureSpec:
    """One figure to render: kind, input files, output image, labels."""

    kind: str
    out: str
    trace: str | None = None
    metrics: str | None = None
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}; known: {', '.join(KINDS)}"
            )
        if not self.out:
            raise ValueError("output image path must be set")
        needed = _NEEDS[self.kind]
        source = getattr(self, needed)
        if source is None:
            raise ValueError(f"{self.kind} figures need --{needed}")
        if not Path(source).exists():
            raise ValueError(f"{needed} file {source} does not exist")

    @property
    def heading(self) -> str:
        return self.title if self.title is not None else _TITLES[self.kind]


@dataclass(frozen=True)
class RenderResult:
    """Where the image landed and how many data series it draws."""

    path: Path
    n_series: int


def _save(fig, out) -> Path:
    out = Path(out)
    kwargs = {}
    if out.suffix.lower() == ".png":
        # Pin the one text chunk matplotlib writes so reruns are byte-stable.
        kwargs["metadata"] = {"Software": "plotkit"}
    fig.savefig(out, dpi=120, **kwargs)
    plt.close(fig)
    return out


def _manipulability(spec: FigureSpec, table: TraceTable) -> RenderResult:
    indices = table.cp_indices("w")
    if not indices:
        raise SchemaError(
            f"no cp*_w columns; file has: {', '.join(table.header)}"
        )
    table.require(["t"])
    t = table.column("t")
    fig, ax = plt.subplots(figsize=(7, 4))
    for i in indices:
        ax.plot(t, table.column(f"cp{i}_w"), label=f"cp{i}", linewidth=1.2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("manipulability [m^3]")
    ax.set_title(spec.heading)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    return RenderResult(_save(fig, spec.out), len(indices))


def _ee_path(spec: FigureSpec, table: TraceTable) -> RenderResult:
    table.require(["t", "ee_x", "ee_y", "ee_z"])
    x = table.column("ee_x")
    y = table.column("ee_y")
    z = table.column("ee_z")
    fig, (top, side) = plt.subplots(1, 2, figsize=(9, 4.2))
    for ax, v, name in ((top, y, "y"), (side, z, "z")):
        ax.plot(x, v, linewidth=1.2)
        if len(x):
            ax.plot(x[0], v[0], "o", ms=6, label="start")
            ax.plot(x[-1], v[-1], "s", ms=6, label="end")
            ax.legend(loc="best", fontsize=8)
        ax.set_xlabel("x [m]")
        ax.set_ylabel(f"{name} [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, alpha=0.3)
    fig.suptitle(spec.heading)
    fig.tight_layout()
    return RenderResult(_save(fig, spec.out), 2)


def _jerk(spec: FigureSpec) -> RenderResult:
    metrics = read_metrics(spec.metrics)
    indices, channels, values = metrics.select("max_jerk_per_s")
    starts = np.array([float(i) for i in indices])
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / len(channels)
    for c, channel in enumerate(channels):
        offset = (c - (len(channels) - 1) / 2.0) * width
        ax.bar(starts + offset, values[:, c], width=width, label=channel)
    ax.set_xticks(starts)
    ax.set_xlabel("window start [s]")
    ax.set_ylabel("max |jerk| [rad/s^3]")
    ax.set_title(spec.heading)
    ax.legend(loc="best", fontsize=8, ncols=min(len(channels), 4))
    ax.grid(True, axis="y", alpha=0.3)
    return RenderResult(_save(fig, spec.out), len(channels))


def _force_distance(spec: FigureSpec, table: TraceTable) -> RenderResult:
    indices = table.cp_indices("dmin")
    if not indices:
        raise SchemaError(
            f"no cp*_dmin columns; file has: {', '.join(table.header)}"
        )
    table.require([f"cp{i}_repulse_mag" for i in indices])
    fig, ax = plt.subplots(figsize=(7, 4))
    for i in indices:
        d = table.column(f"cp{i}_dmin")
        mag = table.column(f"cp{i}_repulse_mag")
        near = np.isfinite(d)
        if np.any(near):
            order = np.argsort(d[near])
            ax.plot(d[near][order], mag[near][order], ".", ms=3,
                    label=f"cp{i}")
        else:
            # Nothing ever entered range: the curve is identically zero.
            ax.plot([0.0, 1.0], [0.0, 0.0], linewidth=1.2, label=f"cp{i}")
    ax.set_xlabel("distance to nearest obstacle [m]")
    ax.set_ylabel("repulsive speed [m/s]")
    ax.set_title(spec.heading)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    return RenderResult(_save(fig, spec.out), len(indices))


def render(spec: FigureSpec) -> RenderResult:
    """Draw one figure and write it to ``spec.out``."""
    if spec.kind == "jerk":
        return _jerk(spec)
    table = read_trace(spec.trace)
    if spec.kind == "manipulability":
        return _manipulability(spec, table)
    if spec.kind == "ee_path":
        return _ee_path(spec, table)
    return _force_distance(spec, table)
