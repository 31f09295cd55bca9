"""Acceptance gate: one test per shipping criterion, tolerances pinned.

Each test prints a single pass/fail line under ``pytest -v``.  The heavy
simulation products (all eight scenario/controller runs at default
parameters) are produced once per module and shared; each run also keeps
the per-tick controller commands so constraint satisfaction can be audited
against exactly what the solver was asked to respect.
"""

import json
import time
from dataclasses import replace
from typing import NamedTuple

import numpy as np
import pytest

from conftest import random_configuration
from oracles import (
    finite_difference_jacobian,
    projected_gradient_reference,
    qp_constraint_stack,
)

from oacbench.controllers import (
    CONTROLLERS,
    ControllerParams,
    approach_velocity,
    repulse_magnitude,
    velocity_scale_factor,
)
from oacbench.kinchain import (
    ControlPoint,
    ee_jacobian,
    forward_kinematics,
    locate_control_point,
    manipulability_ellipsoid,
    point_jacobian,
    projection_metric,
)
from oacbench.metrics import SignalSeries, jerk_profile
from oacbench.qpsolve import STATUS_OPTIMAL, make_qp, solve
from oacbench.scenario_sim import (
    SimConfig,
    make_drdo,
    make_srdo,
    run,
    scenario_by_name,
    scenario_to_dict,
    write_trace,
)

SCENARIO_NAMES = ("srdo", "drdo")
CONTROLLER_NAMES = ("baseline", "flacco", "ding", "escobedo")


class RunProduct(NamedTuple):
    trace: object
    wall: float
    path: object
    commands: list


def _capturing(real, sink):
    def step(*args, **kwargs):
        command = real(*args, **kwargs)
        sink.append(command)
        return command

    return step


@pytest.fixture(scope="module")
def benchmark_runs(tmp_path_factory):
    """All eight runs at default parameters, traced to disk."""
    root = tmp_path_factory.mktemp("acceptance_runs")
    products = {}
    for scenario_name in SCENARIO_NAMES:
        for controller in CONTROLLER_NAMES:
            sink = []
            real = CONTROLLERS[controller]
            CONTROLLERS[controller] = _capturing(real, sink)
            start = time.perf_counter()
            try:
                trace = run(
                    scenario_by_name(scenario_name),
                    SimConfig(controller=controller),
                )
            finally:
                CONTROLLERS[controller] = real
            wall = time.perf_counter() - start
            assert "aborted" not in trace.meta
            path = root / f"{scenario_name}_{controller}.csv"
            write_trace(trace, path)
            products[(scenario_name, controller)] = RunProduct(
                trace, wall, path, sink
            )
    return products


def test_criterion_01_point_jacobians_match_finite_differences(panda, planar):
    rng = np.random.default_rng(101)
    chains = (panda, planar)
    start = time.perf_counter()
    for k in range(1000):
        chain = chains[k % 2]
        q = random_configuration(rng, chain)
        link = int(rng.integers(0, chain.n))
        local = rng.uniform(-0.2, 0.2, size=3)
        fk = forward_kinematics(chain, q)
        cp = locate_control_point(chain, ControlPoint("static", link, local), fk)
        jac = point_jacobian(chain, q, cp, fk)
        ref = finite_difference_jacobian(
            chain, q, ControlPoint("static", link, local)
        )
        assert np.max(np.abs(jac - ref)) <= 1e-6
    assert time.perf_counter() - start < 10.0


def test_criterion_02_qp_solver_matches_projected_gradient():
    rng = np.random.default_rng(202)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(0, 7))
        B = rng.normal(size=(n, n))
        H = B @ B.T + (0.1 + rng.random()) * np.eye(n)
        f = rng.normal(size=n)
        x_feas = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        b = A @ x_feas + rng.random(m) + 0.01
        b_l = x_feas - (0.1 + rng.random(n))
        b_u = x_feas + (0.1 + rng.random(n))
        qp = make_qp(H, f, A, b, b_l, b_u)

        sol = solve(qp)
        assert sol.status == STATUS_OPTIMAL
        G, h = qp_constraint_stack(qp)
        _, _, obj_ref = projected_gradient_reference(
            qp.H + 1e-9 * np.eye(qp.n), qp.f, G, h
        )
        objective = float(0.5 * sol.x @ qp.H @ sol.x + qp.f @ sol.x)
        assert abs(objective - obj_ref) <= 1e-6
        assert sol.primal_residual <= 1e-6
        assert sol.dual_residual <= 1e-6


def test_criterion_03_repulse_magnitude_midpoint_and_decay():
    params = ControllerParams()
    half = repulse_magnitude(params.repulse_radius / 2.0, params)
    assert abs(half - params.repulse_speed / 2.0) <= 1e-12
    grid = np.linspace(0.0, 1.2, 1000)
    values = [repulse_magnitude(d, params) for d in grid]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_criterion_04_approach_velocity_anchors():
    params = ControllerParams()
    # Inside the critical band the admissible speed is the retreating
    # branch minus the peak speed; adding the peak back isolates it.
    near = approach_velocity(params.critical_distance / 2.0, params)
    assert abs((near + params.repulse_speed)
               - params.repulse_speed / 2.0) <= 1e-12
    mid = (params.notice_distance + params.critical_distance) / 2.0
    assert abs(approach_velocity(mid, params)
               - params.repulse_speed / 2.0) <= 1e-12


def test_criterion_05_velocity_scale_factor_anchors():
    params = ControllerParams()
    assert velocity_scale_factor(params.slowdown_distance, params) == 1.0
    assert velocity_scale_factor(0.0, params) == 0.0
    grid = np.linspace(0.0, 0.6, 1000)
    values = [velocity_scale_factor(d, params) for d in grid]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_criterion_06_obstacle_free_runs_collapse_to_baseline():
    scenario = replace(make_srdo(), scripts=())
    qd = {}
    statuses = {}
    for controller in CONTROLLER_NAMES:
        params = ControllerParams()
        if controller == "escobedo":
            params = replace(params, posture_weight=0.0)
        trace = run(scenario, SimConfig(controller=controller, params=params))
        assert "aborted" not in trace.meta
        qd[controller] = np.array([r.qd for r in trace.records])
        statuses[controller] = [r.solver_status for r in trace.records]
    for controller in ("flacco", "ding", "escobedo"):
        assert statuses[controller] == statuses["baseline"]
        assert np.array_equal(qd[controller], qd["baseline"])


def test_criterion_07_inequality_rows_hold_on_every_optimal_tick(
    benchmark_runs,
):
    for scenario_name in SCENARIO_NAMES:
        for controller in ("ding", "escobedo"):
            commands = benchmark_runs[(scenario_name, controller)].commands
            assert any(command.n_rows > 0 for command in commands)
            worst = 0.0
            for command in commands:
                if command.solver_status == STATUS_OPTIMAL:
                    worst = max(worst, command.row_violation())
            assert worst <= 1e-6


def test_criterion_08_avoidance_beats_baseline_at_defaults(benchmark_runs):
    for product in benchmark_runs.values():
        assert product.wall < 30.0
    for scenario_name in SCENARIO_NAMES:
        def lowest(controller):
            records = benchmark_runs[(scenario_name, controller)].trace.records
            return min(r.min_body_dist for r in records)

        floor = lowest("baseline")
        for controller in ("flacco", "ding", "escobedo"):
            clearance = lowest(controller)
            assert clearance > 0.0
            assert clearance > floor


def test_criterion_09_jerk_pipeline_on_synthetic_velocities():
    t = np.arange(0, 1001) * 0.01
    quadratic = jerk_profile(SignalSeries(t=t, values=(3.0 * t * t)[:, None]))
    assert np.max(np.abs(quadratic.max_per_bucket - 6.0)) <= 1e-3
    flat = jerk_profile(SignalSeries(t=t, values=np.full((1001, 2), 1.7)))
    assert np.max(flat.max_per_bucket) <= 1e-9


def test_criterion_10_projection_metric_scale_invariance_and_anchors(panda):
    rng = np.random.default_rng(1010)
    for _ in range(50):
        ell = manipulability_ellipsoid(
            ee_jacobian(panda, random_configuration(rng, panda))
        )
        v = rng.normal(size=3)
        base = projection_metric(v, ell)
        for alpha in (1e-3, 1.0, 1e3):
            assert abs(projection_metric(alpha * v, ell) - base) <= 1e-12
    axis = manipulability_ellipsoid(np.diag([2.0, 1.0, 0.5]))
    assert projection_metric(np.array([0.0, 0.0, 2.5]), axis) == 1.0
    assert projection_metric(np.array([3.0, -4.0, 0.0]), axis) == 0.0


def test_criterion_11_scenario_fidelity_frozen_fixtures():
    srdo = json.dumps(scenario_to_dict(make_srdo()), sort_keys=True)
    drdo = json.dumps(scenario_to_dict(make_drdo()), sort_keys=True)
    assert srdo == (
        '{"chain": "panda7", "duration": 10.0, "name": "srdo", "obstacles":'
        ' [{"id": "obs0", "speed": 0.15, "vanish_time": null, "waypoints":'
        ' [[0.0, 0.0, -0.5, 0.6], [4.0, 0.0, 0.1, 0.6]]}], "reference":'
        ' {"target": [0.4, 0.0, 0.45]}}'
    )
    assert drdo == (
        '{"chain": "panda7", "duration": 10.0, "name": "drdo", "obstacles":'
        ' [{"id": "obs0", "speed": 0.15, "vanish_time": null, "waypoints":'
        ' [[0.0, 0.45, -0.5, 0.45], [4.0, 0.45, 0.1, 0.45]]}], "reference":'
        ' {"circle": {"angular_speed": 1.2, "center": [0.5, 0.0, 0.25],'
        ' "phase": 3.141592653589793, "plane": "xy", "radius": 0.25}}}'
    )


def test_criterion_12_reruns_are_byte_identical(benchmark_runs, tmp_path):
    for scenario_name, controller in (
        ("srdo", "escobedo"),
        ("srdo", "ding"),
        ("drdo", "flacco"),
    ):
        trace = run(
            scenario_by_name(scenario_name), SimConfig(controller=controller)
        )
        repeat = tmp_path / f"{scenario_name}_{controller}.csv"
        write_trace(trace, repeat)
        original = benchmark_runs[(scenario_name, controller)].path
        assert repeat.read_bytes() == original.read_bytes()
