"""Smoothing, differentiation, jerk buckets, and trace aggregation."""

import csv
import math

import numpy as np
import pytest

from oacbench.metrics import (
    ForceDistanceCurve,
    MetricsReport,
    SignalSeries,
    central_gradient,
    force_distance_curves,
    jerk_profile,
    joint_velocity_series,
    report,
    savgol,
    write_curves,
    write_metrics,
)
from oacbench.scenario_sim import (
    Scenario,
    SimConfig,
    TargetReference,
    TraceTable,
    read_trace,
    run,
    write_trace,
)


def series(values, dt=0.01):
    values = np.asarray(values, dtype=float)
    t = np.arange(values.shape[0]) * dt
    return SignalSeries(t=t, values=values)


# ------------------------------------------------------------ signal series


def test_signal_series_validation():
    with pytest.raises(ValueError, match="uniform"):
        SignalSeries(t=[0.0, 0.1, 0.3], values=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="increasing"):
        SignalSeries(t=[0.2, 0.1, 0.0], values=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        SignalSeries(t=[0.0, 0.1], values=[1.0, 2.0, 3.0])
    s = series([1.0, 2.0, 3.0])
    assert s.values.shape == (3, 1)
    assert s.n_channels == 1
    assert s.dt == pytest.approx(0.01)


# ------------------------------------------------------------------- savgol


def test_savgol_reproduces_quadratic_everywhere():
    t = np.arange(101) * 0.1
    values = 3.0 * t**2 - t + 2.0
    out = savgol(SignalSeries(t=t, values=values), window=11, polyorder=2)
    np.testing.assert_allclose(out.values[:, 0], values, atol=1e-10)


def test_savgol_keeps_constants():
    out = savgol(series(np.full(40, 7.5)), window=9, polyorder=3)
    np.testing.assert_allclose(out.values[:, 0], 7.5, atol=1e-12)


def test_savgol_impulse_kernel_coefficients():
    values = np.zeros(11)
    values[5] = 1.0
    out = savgol(series(values), window=5, polyorder=2)
    assert out.values[5, 0] == pytest.approx(17.0 / 35.0, abs=1e-12)
    assert out.values[4, 0] == pytest.approx(12.0 / 35.0, abs=1e-12)
    assert out.values[3, 0] == pytest.approx(-3.0 / 35.0, abs=1e-12)


def test_savgol_is_linear(rng):
    x = rng.normal(size=60)
    y = rng.normal(size=60)
    a, b = 2.5, -1.25
    combined = savgol(series(a * x + b * y), window=7, polyorder=2)
    parts = a * savgol(series(x), 7, 2).values + b * savgol(series(y), 7, 2).values
    np.testing.assert_allclose(combined.values, parts, atol=1e-10)


def test_savgol_parameter_validation():
    s = series(np.zeros(10))
    with pytest.raises(ValueError):
        savgol(s, window=4, polyorder=2)
    with pytest.raises(ValueError):
        savgol(s, window=5, polyorder=5)
    with pytest.raises(ValueError):
        savgol(s, window=11, polyorder=2)


# --------------------------------------------------------- central gradient


def test_gradient_exact_for_quadratic():
    t = np.arange(50) * 0.1
    out = central_gradient(SignalSeries(t=t, values=t**2))
    np.testing.assert_allclose(out.values[:, 0], 2.0 * t, atol=1e-12)


def test_gradient_constant_is_zero():
    out = central_gradient(series(np.full(20, 3.3)))
    np.testing.assert_array_equal(out.values, np.zeros((20, 1)))


def test_gradient_cubic_truncation_term():
    dt = 0.1
    t = np.arange(30) * dt
    out = central_gradient(SignalSeries(t=t, values=t**3))
    interior = out.values[1:-1, 0]
    np.testing.assert_allclose(interior, 3.0 * t[1:-1] ** 2 + dt**2, atol=1e-12)


def test_gradient_needs_three_samples():
    with pytest.raises(ValueError):
        central_gradient(series(np.zeros(2)))


def test_gradient_of_smoothed_polynomial_matches_derivative():
    dt = 0.01
    t = np.arange(200) * dt
    values = 0.5 * t**3 - 2.0 * t
    smoothed = savgol(SignalSeries(t=t, values=values), window=21, polyorder=3)
    out = central_gradient(smoothed)
    # Smoothing reproduces the cubic exactly; differencing then carries
    # its usual truncation term, half dt squared for this leading term.
    expected = 1.5 * t[1:-1] ** 2 - 2.0 + 0.5 * dt**2
    np.testing.assert_allclose(out.values[1:-1, 0], expected, atol=1e-10)


# ------------------------------------------------------------- jerk profile


def test_jerk_of_quadratic_velocity_is_constant():
    t = np.arange(1001) * 0.01
    profile = jerk_profile(SignalSeries(t=t, values=3.0 * t**2))
    np.testing.assert_allclose(profile.jerk.values[:, 0], 6.0, atol=1e-6)
    assert profile.max_per_bucket.shape == (10, 1)
    np.testing.assert_allclose(profile.max_per_bucket, 6.0, atol=1e-6)
    np.testing.assert_array_equal(profile.bucket_starts, np.arange(10))


def test_jerk_of_constant_velocity_is_zero():
    t = np.arange(301) * 0.01
    profile = jerk_profile(SignalSeries(t=t, values=np.full(301, 0.7)))
    np.testing.assert_allclose(profile.jerk.values, 0.0, atol=1e-9)


def test_jerk_step_dominates_its_bucket():
    t = np.arange(501) * 0.01
    values = np.where(t < 2.5, 0.0, 1.0)
    profile = jerk_profile(SignalSeries(t=t, values=values))
    peaks = profile.max_per_bucket[:, 0]
    assert np.argmax(peaks) == 2
    others = np.delete(peaks, 2)
    assert peaks[2] > 10.0 * others.max()


def test_short_series_gets_single_bucket():
    t = np.arange(51) * 0.01
    profile = jerk_profile(SignalSeries(t=t, values=t), sg_window=11)
    assert profile.max_per_bucket.shape == (1, 1)


# ----------------------------------------------------------- trace plumbing


@pytest.fixture(scope="module")
def hold_table(tmp_path_factory):
    planar_scenario = Scenario(
        name="hold",
        ee_reference=TargetReference(point=(1.2, 1.1, 0.0)),
        scripts=(),
        duration=0.5,
        chain_name="planar2",
    )
    trace = run(planar_scenario, SimConfig())
    path = tmp_path_factory.mktemp("metrics") / "hold.csv"
    write_trace(trace, path)
    return read_trace(path)


def test_velocity_series_extraction(hold_table):
    qd = joint_velocity_series(hold_table)
    assert qd.values.shape == (51, 2)
    assert qd.dt == pytest.approx(0.01, abs=1e-12)


def test_force_distance_extraction(hold_table):
    curves = force_distance_curves(hold_table)
    assert len(curves) == 1
    np.testing.assert_array_equal(curves[0].magnitude, np.zeros(51))
    assert np.all(np.isinf(curves[0].d_min))


def test_force_distance_requires_cp_columns():
    table = TraceTable(
        header=["t", "solver_status"],
        columns={"t": np.arange(3.0)},
        statuses=["optimal"] * 3,
    )
    with pytest.raises(ValueError, match="control point"):
        force_distance_curves(table)


def test_report_clean_run(hold_table):
    rep = report(hold_table)
    assert rep.solver_failures == 0
    assert math.isinf(rep.min_obstacle_distance)
    assert rep.manipulability_min.shape == (1,)
    # A two-joint arm spans no 3-D volume, so the scalar is exactly zero.
    assert rep.manipulability_min[0] == 0.0
    assert rep.manipulability_mean[0] == 0.0
    assert rep.jerk_max_per_bucket.shape == (1, 2)
    assert rep.projection_hist_counts.sum() == 51
    # No avoidance velocity anywhere means zero projection onto anything.
    assert rep.projection_hist_counts[0] == 51


def test_report_counts_failures(hold_table):
    doctored = TraceTable(
        header=hold_table.header,
        columns=hold_table.columns,
        statuses=["infeasible"] * 3 + hold_table.statuses[3:],
    )
    assert report(doctored).solver_failures == 3


def test_metrics_csv_round_trip(hold_table, tmp_path):
    rep = report(hold_table)
    metrics_path = tmp_path / "metrics.csv"
    curves_path = tmp_path / "curves.csv"
    write_metrics(rep, metrics_path)
    write_curves(rep.curves, curves_path)

    with open(metrics_path) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["metric", "index", "channel", "value"]
    names = {row[0] for row in rows[1:]}
    assert names == {
        "max_jerk_per_s", "manipulability_min", "manipulability_mean",
        "projection_hist", "min_obstacle_distance", "solver_failures",
    }
    failure_row = [row for row in rows if row[0] == "solver_failures"]
    assert failure_row == [["solver_failures", "0", "", "0"]]
    distance_row = [row for row in rows if row[0] == "min_obstacle_distance"]
    assert distance_row[0][3] == "inf"

    with open(curves_path) as handle:
        curve_rows = list(csv.reader(handle))
    assert curve_rows[0] == ["cp", "t", "dmin", "repulse_mag"]
    assert len(curve_rows) == 1 + 51
    assert curve_rows[1][0] == "0"
    assert float(curve_rows[1][1]) == 0.0
