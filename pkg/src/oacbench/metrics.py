"""Post-hoc trace analysis.

Everything here is a pure function over a recorded trace: smoothing and
numerical differentiation for jerk profiles, manipulability statistics per
control point, a histogram of the projection metric, and the paired
force-versus-distance curves.  Results serialize to two small CSV files
(``metrics.csv`` and ``curves.csv``) whose schemas are documented in the
README.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .scenario_sim import TraceTable

DEFAULT_SG_WINDOW = 21
DEFAULT_SG_POLYORDER = 3
PROJECTION_BINS = 20


@dataclass(frozen=True)
class SignalSeries:
    """Uniformly sampled multi-channel signal."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if t.ndim != 1 or values.ndim != 2 or values.shape[0] != t.shape[0]:
            raise ValueError("t must be 1-D and values (len(t), channels)")
        if t.shape[0] >= 2:
            gaps = np.diff(t)
            if np.max(np.abs(gaps - gaps[0])) > 1e-12:
                raise ValueError("time grid must be uniform within 1e-12")
            if gaps[0] <= 0.0:
                raise ValueError("time grid must be increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

    @property
    def dt(self) -> float:
        if len(self.t) < 2:
            raise ValueError("series too short to have a step")
        return float(self.t[1] - self.t[0])

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


def _fit_at_zero(offsets: np.ndarray, window: np.ndarray, polyorder: int) -> float:
    """Least-squares polynomial through one window, evaluated at offset 0."""
    degree = min(polyorder, len(offsets) - 1)
    design = np.vander(offsets, degree + 1, increasing=True)
    coeffs, *_ = np.linalg.lstsq(design, window, rcond=None)
    return float(coeffs[0])


def savgol(series: SignalSeries, window: int, polyorder: int) -> SignalSeries:
    """Least-squares polynomial smoothing over a sliding window.

    Interior samples use the standard convolution kernel; near the ends
    the window truncates and the polynomial refits on what remains, so
    polynomial inputs reproduce exactly everywhere.
    """
    if window % 2 != 1 or window < 1:
        raise ValueError("window must be a positive odd integer")
    if polyorder < 0 or polyorder >= window:
        raise ValueError("polyorder must satisfy 0 <= polyorder < window")
    m = len(series.t)
    if window > m:
        raise ValueError(f"window {window} exceeds series length {m}")

    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    design = np.vander(offsets, polyorder + 1, increasing=True)
    # Row of the normal-equations solve that evaluates the fit at center.
    kernel = np.linalg.solve(design.T @ design, design.T)[0]

    values = series.values
    smoothed = np.empty_like(values)
    if m >= window:
        windows = np.lib.stride_tricks.sliding_window_view(values, window, axis=0)
        smoothed[half : m - half] = windows @ kernel
    for i in range(half):
        local = np.arange(0, i + half + 1, dtype=float) - i
        for c in range(values.shape[1]):
            smoothed[i, c] = _fit_at_zero(local, values[: i + half + 1, c], polyorder)
    for i in range(m - half, m):
        lo = i - half
        local = np.arange(lo, m, dtype=float) - i
        for c in range(values.shape[1]):
            smoothed[i, c] = _fit_at_zero(local, values[lo:, c], polyorder)
    return SignalSeries(t=series.t, values=smoothed)


def central_gradient(series: SignalSeries, dt: float | None = None) -> SignalSeries:
    """Second-order finite-difference derivative.

    Central differences in the interior, one-sided second-order stencils
    at both ends.
    """
    if len(series.t) < 3:
        raise ValueError("need at least 3 samples to differentiate")
    step = series.dt if dt is None else float(dt)
    grad = np.gradient(series.values, step, axis=0, edge_order=2)
    return SignalSeries(t=series.t, values=grad)


@dataclass(frozen=True)
class JerkProfile:
    jerk: SignalSeries
    bucket_starts: np.ndarray     # integer seconds
    max_per_bucket: np.ndarray    # (n_buckets, n_channels)


def _bucket_index(t: np.ndarray, n_buckets: int) -> np.ndarray:
    # The final boundary sample folds into the last whole-second bucket.
    idx = np.floor(t).astype(int)
    return np.clip(idx, 0, n_buckets - 1)


def jerk_profile(
    velocity: SignalSeries,
    sg_window: int = DEFAULT_SG_WINDOW,
    sg_polyorder: int = DEFAULT_SG_POLYORDER,
) -> JerkProfile:
    """Smooth velocities once, differentiate twice, bucket the peaks.

    Buckets are whole seconds of trace time; each holds the per-channel
    maximum of |jerk| over that second.
    """
    smoothed = savgol(velocity, sg_window, sg_polyorder)
    accel = central_gradient(smoothed)
    jerk = central_gradient(accel)

    duration = float(jerk.t[-1] - jerk.t[0])
    n_buckets = max(1, int(math.floor(duration + 1e-9)))
    buckets = _bucket_index(jerk.t - jerk.t[0], n_buckets)
    peaks = np.zeros((n_buckets, jerk.n_channels))
    magnitude = np.abs(jerk.values)
    for b in range(n_buckets):
        mask = buckets == b
        if np.any(mask):
            peaks[b] = magnitude[mask].max(axis=0)
    return JerkProfile(
        jerk=jerk,
        bucket_starts=np.arange(n_buckets),
        max_per_bucket=peaks,
    )


@dataclass(frozen=True)
class ForceDistanceCurve:
    """Paired avoidance-magnitude and clearance series for one control point."""

    cp_index: int
    t: np.ndarray
    d_min: np.ndarray
    magnitude: np.ndarray


def force_distance_curves(table: TraceTable) -> list[ForceDistanceCurve]:
    """Extract the per-control-point (t, d_min, ||V||) pairings."""
    n_cp = table.n_control_points
    if n_cp == 0:
        raise ValueError("trace has no control point columns")
    t = table.column("t")
    curves = []
    for i in range(n_cp):
        curves.append(
            ForceDistanceCurve(
                cp_index=i,
                t=t,
                d_min=table.column(f"cp{i}_dmin"),
                magnitude=table.column(f"cp{i}_repulse_mag"),
            )
        )
    return curves


def joint_velocity_series(table: TraceTable) -> SignalSeries:
    """Commanded joint velocities stacked into one series."""
    n = table.n_joints
    if n == 0:
        raise ValueError("trace has no joint velocity columns")
    values = np.column_stack([table.column(f"qd{i}") for i in range(n)])
    return SignalSeries(t=table.column("t"), values=values)


@dataclass(frozen=True)
class MetricsReport:
    jerk_bucket_starts: np.ndarray
    jerk_max_per_bucket: np.ndarray      # (n_buckets, n_joints)
    manipulability_min: np.ndarray       # per control point
    manipulability_mean: np.ndarray
    projection_hist_edges: np.ndarray    # (PROJECTION_BINS + 1,)
    projection_hist_counts: np.ndarray   # (PROJECTION_BINS,)
    min_obstacle_distance: float
    solver_failures: int
    curves: list[ForceDistanceCurve]


def report(
    table: TraceTable,
    sg_window: int = DEFAULT_SG_WINDOW,
    sg_polyorder: int = DEFAULT_SG_POLYORDER,
) -> MetricsReport:
    """Aggregate every analysis over one trace."""
    length = len(table)
    window = min(sg_window, length if length % 2 == 1 else length - 1)
    profile = jerk_profile(
        joint_velocity_series(table), window, min(sg_polyorder, window - 1)
    )

    n_cp = table.n_control_points
    w_min = np.zeros(n_cp)
    w_mean = np.zeros(n_cp)
    projections = []
    for i in range(n_cp):
        w = table.column(f"cp{i}_w")
        live = w[np.isfinite(w)]
        w_min[i] = live.min() if live.size else math.nan
        w_mean[i] = live.mean() if live.size else math.nan
        proj = table.column(f"cp{i}_proj_norm")
        projections.append(proj[np.isfinite(proj)])
    pooled = np.concatenate(projections) if projections else np.zeros(0)
    edges = np.linspace(0.0, 1.0, PROJECTION_BINS + 1)
    counts, _ = np.histogram(pooled, bins=edges)

    clearance = table.column("min_body_dist")
    finite = clearance[np.isfinite(clearance)]
    min_distance = float(finite.min()) if finite.size else math.inf

    failures = sum(1 for status in table.statuses if status != "optimal")

    return MetricsReport(
        jerk_bucket_starts=profile.bucket_starts,
        jerk_max_per_bucket=profile.max_per_bucket,
        manipulability_min=w_min,
        manipulability_mean=w_mean,
        projection_hist_edges=edges,
        projection_hist_counts=counts.astype(int),
        min_obstacle_distance=min_distance,
        solver_failures=failures,
        curves=force_distance_curves(table),
    )


# --- serialization --------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def write_metrics(rep: MetricsReport, path) -> None:
    """Long-format summary table: metric,index,channel,value."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "index", "channel", "value"])
        for b, start in enumerate(rep.jerk_bucket_starts):
            for j in range(rep.jerk_max_per_bucket.shape[1]):
                writer.writerow(
                    ["max_jerk_per_s", int(start), f"q{j}",
                     _fmt(rep.jerk_max_per_bucket[b, j])]
                )
        for i, value in enumerate(rep.manipulability_min):
            writer.writerow(["manipulability_min", i, f"cp{i}", _fmt(value)])
        for i, value in enumerate(rep.manipulability_mean):
            writer.writerow(["manipulability_mean", i, f"cp{i}", _fmt(value)])
        for b in range(len(rep.projection_hist_counts)):
            lo = rep.projection_hist_edges[b]
            hi = rep.projection_hist_edges[b + 1]
            writer.writerow(
                ["projection_hist", b, f"{lo:.3f}..{hi:.3f}",
                 str(int(rep.projection_hist_counts[b]))]
            )
        writer.writerow(
            ["min_obstacle_distance", 0, "", _fmt(rep.min_obstacle_distance)]
        )
        writer.writerow(["solver_failures", 0, "", str(rep.solver_failures)])


def write_curves(curves: list[ForceDistanceCurve], path) -> None:
    """Per-control-point force/distance samples: cp,t,dmin,repulse_mag."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cp", "t", "dmin", "repulse_mag"])
        for curve in curves:
            for k in range(len(curve.t)):
                writer.writerow(
                    [curve.cp_index, _fmt(curve.t[k]),
                     _fmt(curve.d_min[k]), _fmt(curve.magnitude[k])]
                )
