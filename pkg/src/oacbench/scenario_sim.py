"""Benchmark scenarios, the control loop, and trace recording.

Two stock scenarios exercise every controller regime: holding a static
end-effector goal while an obstacle sweeps past, and tracking a Cartesian
circle while an obstacle cuts through the workspace.  The loop is a fixed
step kinematic simulation: velocity commands integrate by explicit Euler,
positions clamp to joint limits, and every tick lands in a trace record.

Trace files are plain CSV, one row per tick.  The column layout is part of
the package contract (documented in the README) so downstream analysis and
plotting can consume traces without importing this module.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .controllers import CONTROLLERS, ControllerParams, controller_step
from .kinchain import (
    JointState,
    KinematicChain,
    builtin_chain,
    forward_kinematics,
    manipulability_ellipsoid,
    point_jacobian,
    projection_metric,
    projection_raw,
)
from .worldmodel import (
    Obstacle,
    ObstacleScript,
    closest_point_on_chain,
    decay_obstacle,
    script_from_endpoints,
    scripted_obstacle,
    start_decay,
)

# --- end-effector references ---------------------------------------------------

_PLANE_AXES = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}


@dataclass(frozen=True)
class TargetReference:
    """Constant Cartesian goal for the end effector."""

    point: np.ndarray

    def __post_init__(self):
        point = np.asarray(self.point, dtype=float)
        if point.shape != (3,) or not np.all(np.isfinite(point)):
            raise ValueError("target point must be a finite 3-vector")
        object.__setattr__(self, "point", point)

    def position(self, t: float) -> np.ndarray:
        return self.point

    def velocity(self, t: float) -> np.ndarray:
        return np.zeros(3)


@dataclass(frozen=True)
class CircleReference:
    """Circular Cartesian path, counter-clockwise in the chosen plane."""

    center: np.ndarray
    radius: float
    angular_speed: float
    plane: str = "xy"
    phase: float = math.pi

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        if center.shape != (3,) or not np.all(np.isfinite(center)):
            raise ValueError("circle center must be a finite 3-vector")
        object.__setattr__(self, "center", center)
        if not self.radius > 0.0:
            raise ValueError("circle radius must be positive")
        if self.plane not in _PLANE_AXES:
            known = ", ".join(sorted(_PLANE_AXES))
            raise ValueError(f"unknown circle plane {self.plane!r}; known: {known}")

    def position(self, t: float) -> np.ndarray:
        i, j = _PLANE_AXES[self.plane]
        angle = self.phase + self.angular_speed * t
        out = self.center.copy()
        out[i] += self.radius * math.cos(angle)
        out[j] += self.radius * math.sin(angle)
        return out

    def velocity(self, t: float) -> np.ndarray:
        i, j = _PLANE_AXES[self.plane]
        angle = self.phase + self.angular_speed * t
        out = np.zeros(3)
        out[i] = -self.radius * self.angular_speed * math.sin(angle)
        out[j] = self.radius * self.angular_speed * math.cos(angle)
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    ee_reference: TargetReference | CircleReference
    scripts: tuple[ObstacleScript, ...] = ()
    duration: float = 10.0
    chain_name: str = "panda7"

    def __post_init__(self):
        if not self.duration > 0.0:
            raise ValueError("scenario duration must be positive")
        object.__setattr__(self, "scripts", tuple(self.scripts))


def make_srdo() -> Scenario:
    """Static end-effector goal with an obstacle sweeping past the arm."""
    return Scenario(
        name="srdo",
        ee_reference=TargetReference(point=(0.4, 0.0, 0.45)),
        scripts=(
            script_from_endpoints(
                "obs0", (0.0, -0.5, 0.6), (0.0, 0.1, 0.6), speed=0.15
            ),
        ),
    )


def make_drdo() -> Scenario:
    """Circle-tracking end effector with an obstacle crossing the path."""
    return Scenario(
        name="drdo",
        ee_reference=CircleReference(
            center=(0.5, 0.0, 0.25), radius=0.25, angular_speed=1.2
        ),
        scripts=(
            script_from_endpoints(
                "obs0", (0.45, -0.5, 0.45), (0.45, 0.1, 0.45), speed=0.15
            ),
        ),
    )


SCENARIOS = {"srdo": make_srdo, "drdo": make_drdo}


def scenario_by_name(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        known = ", ".join(sorted(SCENARIOS))
        raise ValueError(f"unknown scenario {name!r}; known: {known}") from None


# --- scenario files --------------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain-data form of a scenario, round-trippable bit for bit."""
    ref = scenario.ee_reference
    if isinstance(ref, TargetReference):
        reference = {"target": [float(v) for v in ref.point]}
    else:
        reference = {
            "circle": {
                "center": [float(v) for v in ref.center],
                "radius": float(ref.radius),
                "angular_speed": float(ref.angular_speed),
                "plane": ref.plane,
                "phase": float(ref.phase),
            }
        }
    obstacles = []
    for script in scenario.scripts:
        obstacles.append(
            {
                "id": script.id,
                "waypoints": [
                    [float(t)] + [float(v) for v in p]
                    for t, p in script.waypoints
                ],
                "speed": float(script.speed),
                "vanish_time": script.vanish_time,
            }
        )
    return {
        "name": scenario.name,
        "chain": scenario.chain_name,
        "duration": float(scenario.duration),
        "reference": reference,
        "obstacles": obstacles,
    }


def _script_from_dict(index: int, data: dict) -> ObstacleScript:
    known = {"id", "waypoints", "speed", "vanish_time"}
    extra = set(data) - known
    if extra:
        raise ValueError(
            f"obstacle {index}: unknown keys {sorted(extra)};"
            f" known: {sorted(known)}"
        )
    try:
        raw_wps = data["waypoints"]
        speed = float(data["speed"])
    except KeyError as missing:
        raise ValueError(
            f"obstacle {index}: missing required key {missing}"
        ) from None
    if not raw_wps:
        raise ValueError(f"obstacle {index}: waypoints must be non-empty")

    widths = {len(row) for row in raw_wps}
    if widths == {4}:
        # Explicit (t, x, y, z) rows.
        waypoints = tuple((row[0], np.asarray(row[1:], dtype=float))
                          for row in raw_wps)
    elif widths == {3}:
        # Bare (x, y, z) rows: times follow from path length and speed.
        if speed <= 0.0:
            raise ValueError(
                f"obstacle {index}: speed must be positive to derive"
                " waypoint times"
            )
        points = [np.asarray(row, dtype=float) for row in raw_wps]
        t = 0.0
        waypoints = [(t, points[0])]
        for prev, here in zip(points[:-1], points[1:]):
            t += float(np.linalg.norm(here - prev)) / speed
            waypoints.append((t, here))
        waypoints = tuple(waypoints)
    else:
        raise ValueError(
            f"obstacle {index}: waypoint rows must all be (t, x, y, z)"
            " or all (x, y, z)"
        )

    vanish = data.get("vanish_time")
    return ObstacleScript(
        id=str(data.get("id", f"obs{index}")),
        waypoints=waypoints,
        speed=speed,
        vanish_time=None if vanish is None else float(vanish),
    )


def scenario_from_dict(data: dict) -> Scenario:
    """Inverse of scenario_to_dict, with validation that names bad keys."""
    if not isinstance(data, dict):
        raise ValueError("scenario definition must be a mapping")
    known = {"name", "chain", "duration", "reference", "obstacles"}
    extra = set(data) - known
    if extra:
        raise ValueError(
            f"unknown scenario keys {sorted(extra)}; known: {sorted(known)}"
        )
    if "reference" not in data:
        raise ValueError("scenario definition needs a reference section")
    ref = data["reference"]
    if not isinstance(ref, dict) or len(ref) != 1:
        raise ValueError("reference must hold exactly one of: target, circle")
    kind, body = next(iter(ref.items()))
    if kind == "target":
        reference = TargetReference(point=body)
    elif kind == "circle":
        reference = CircleReference(**body)
    else:
        raise ValueError(f"unknown reference kind {kind!r};"
                         " known: circle, target")
    scripts = tuple(
        _script_from_dict(i, entry)
        for i, entry in enumerate(data.get("obstacles") or ())
    )
    return Scenario(
        name=str(data.get("name", "custom")),
        ee_reference=reference,
        scripts=scripts,
        duration=float(data.get("duration", 10.0)),
        chain_name=str(data.get("chain", "panda7")),
    )


def load_scenario(path) -> Scenario:
    """Read a scenario definition from a YAML file."""
    with open(path) as handle:
        data = yaml.safe_load(handle)
    return scenario_from_dict(data)


# --- task velocity --------------------------------------------------------------


def clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    """Scale ``v`` down to ``limit`` length; pass it through untouched below."""
    norm = float(np.linalg.norm(v))
    if norm <= limit:
        return v
    return v * (limit / norm)


def task_velocity(
    scenario: Scenario,
    t: float,
    ee_pos: np.ndarray,
    k_p: float,
    nominal_speed: float,
) -> np.ndarray:
    """Proportional pull towards the reference plus its feedforward rate."""
    reference = scenario.ee_reference
    raw = k_p * (reference.position(t) - np.asarray(ee_pos, dtype=float))
    raw = raw + reference.velocity(t)
    return clamp_norm(raw, nominal_speed)


# --- simulation -----------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    controller: str = "baseline"
    dt: float = 0.01
    k_p: float = 2.0
    params: ControllerParams = field(default_factory=ControllerParams)
    decay_rate: float = 0.4

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.05:
            raise ValueError("dt must lie in (0, 0.05] seconds")
        if self.k_p < 0.0:
            raise ValueError("k_p must be nonnegative")
        if self.decay_rate < 0.0:
            raise ValueError("decay_rate must be nonnegative")
        if self.controller not in CONTROLLERS:
            known = ", ".join(sorted(CONTROLLERS))
            raise ValueError(
                f"unknown controller {self.controller!r}; known: {known}"
            )


@dataclass(frozen=True)
class ControlPointSample:
    """Per-control-point quantities recorded each tick."""

    label: str
    position: np.ndarray
    d_min: float
    repulse_mag: float
    w: float
    lambda_min: float
    proj_raw: float
    proj_norm: float


@dataclass(frozen=True)
class TraceRecord:
    t: float
    q: np.ndarray
    qd: np.ndarray
    ee: np.ndarray
    xd: np.ndarray
    solver_status: str
    n_active_rows: int
    control_points: tuple[ControlPointSample, ...]
    obstacles: tuple[np.ndarray | None, ...]
    min_body_dist: float


@dataclass
class Trace:
    meta: dict
    n_joints: int
    cp_labels: tuple[str, ...]
    obstacle_ids: tuple[str, ...]
    records: list[TraceRecord]


class _ObstacleFeed:
    """Resolves scripted readings per tick, including vanish-and-decay.

    Once a script's vanish time passes, the last reading recedes from its
    anchor point on the body at the decay rate until it leaves the
    surveillance radius, after which the obstacle is gone for good.
    """

    def __init__(self, scripts, decay_rate: float, drop_distance: float):
        self.scripts = scripts
        self.decay_rate = decay_rate
        self.drop_distance = drop_distance
        self.decaying: dict[str, Obstacle | None] = {}

    def resolve(self, chain, q, t, dt) -> list[Obstacle | None]:
        readings: list[Obstacle | None] = []
        for script in self.scripts:
            if script.vanish_time is None or t < script.vanish_time:
                readings.append(scripted_obstacle(script, t))
                continue
            if script.id not in self.decaying:
                last = scripted_obstacle(script, script.vanish_time)
                cp, distance = closest_point_on_chain(chain, q, last.position)
                self.decaying[script.id] = start_decay(
                    script.id, cp.world_point, last.position, distance
                )
            current = self.decaying[script.id]
            if current is not None:
                current = decay_obstacle(
                    current, dt, self.decay_rate, self.drop_distance
                )
                self.decaying[script.id] = current
            readings.append(current)
        return readings


def run(
    scenario: Scenario,
    config: SimConfig,
    chain: KinematicChain | None = None,
) -> Trace:
    """Simulate one controller through one scenario.

    Returns the full trace; if the controller raises mid-run the partial
    trace comes back with the error recorded under ``meta["aborted"]``.
    """
    if chain is None:
        chain = builtin_chain(scenario.chain_name)
    step = controller_step(config.controller)
    params = config.params

    n_steps = int(round(scenario.duration / config.dt))
    feed = _ObstacleFeed(
        scenario.scripts, config.decay_rate, params.surveillance_radius
    )

    meta = {
        "scenario": scenario.name,
        "controller": config.controller,
        "chain": scenario.chain_name,
        "dt": config.dt,
        "k_p": config.k_p,
        "duration": scenario.duration,
        "decay_rate": config.decay_rate,
        "params": asdict(params),
    }
    trace = Trace(
        meta=meta,
        n_joints=chain.n,
        cp_labels=(),
        obstacle_ids=tuple(s.id for s in scenario.scripts),
        records=[],
    )

    q = np.asarray(chain.home, dtype=float).copy()
    qd = np.zeros(chain.n)
    labels: list[str] = []

    for k in range(n_steps + 1):
        t = k * config.dt
        readings = feed.resolve(chain, q, t, config.dt)
        obstacles = [obs for obs in readings if obs is not None]

        fk = forward_kinematics(chain, q)
        xd = task_velocity(scenario, t, fk.ee_position, config.k_p, params.nominal_speed)
        try:
            command = step(chain, JointState(q=q, qd=qd), xd, obstacles, params)
        except Exception as error:  # noqa: BLE001 - abort contract
            meta["aborted"] = f"tick {k} (t={t:.6g}): {error}"
            break

        samples = []
        for report in command.cp_reports:
            jac = point_jacobian(chain, q, report.control_point, fk=fk)
            ell = manipulability_ellipsoid(jac)
            samples.append(
                ControlPointSample(
                    label=report.label,
                    position=report.control_point.world_point,
                    d_min=report.d_min,
                    repulse_mag=float(np.linalg.norm(report.restriction)),
                    w=ell.w,
                    lambda_min=float(ell.eigenvalues[2]),
                    proj_raw=projection_raw(report.restriction, ell),
                    proj_norm=projection_metric(report.restriction, ell),
                )
            )
            if report.label not in labels:
                labels.append(report.label)

        if obstacles:
            min_body = min(
                closest_point_on_chain(chain, q, obs.position, fk=fk)[1]
                for obs in obstacles
            )
        else:
            min_body = math.inf

        trace.records.append(
            TraceRecord(
                t=t,
                q=q.copy(),
                qd=command.qd.copy(),
                ee=fk.ee_position.copy(),
                xd=np.asarray(command.task_velocity, dtype=float).copy(),
                solver_status=command.solver_status,
                n_active_rows=command.n_rows,
                control_points=tuple(samples),
                obstacles=tuple(
                    None if obs is None else obs.position.copy()
                    for obs in readings
                ),
                min_body_dist=min_body,
            )
        )

        if k < n_steps:
            q = np.clip(q + config.dt * command.qd, chain.q_lower, chain.q_upper)
            qd = command.qd

    trace.cp_labels = tuple(labels)
    return trace


# --- trace serialization --------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def trace_header(n_joints: int, cp_labels, obstacle_ids) -> list[str]:
    header = ["t"]
    header += [f"q{i}" for i in range(n_joints)]
    header += [f"qd{i}" for i in range(n_joints)]
    header += ["ee_x", "ee_y", "ee_z", "xd_x", "xd_y", "xd_z"]
    header += ["solver_status", "n_active_rows"]
    for i in range(len(cp_labels)):
        header += [
            f"cp{i}_x", f"cp{i}_y", f"cp{i}_z",
            f"cp{i}_dmin", f"cp{i}_repulse_mag",
            f"cp{i}_w", f"cp{i}_lmin",
            f"cp{i}_proj_raw", f"cp{i}_proj_norm",
        ]
    for j in range(len(obstacle_ids)):
        header += [f"obs{j}_x", f"obs{j}_y", f"obs{j}_z"]
    header.append("min_body_dist")
    return header


def write_trace(trace: Trace, path) -> None:
    """Serialize a trace as CSV with full float precision."""
    nan_block = [_fmt(math.nan)] * 9
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            trace_header(trace.n_joints, trace.cp_labels, trace.obstacle_ids)
        )
        for record in trace.records:
            by_label = {s.label: s for s in record.control_points}
            row = [_fmt(record.t)]
            row += [_fmt(v) for v in record.q]
            row += [_fmt(v) for v in record.qd]
            row += [_fmt(v) for v in record.ee]
            row += [_fmt(v) for v in record.xd]
            row += [record.solver_status, str(record.n_active_rows)]
            for label in trace.cp_labels:
                sample = by_label.get(label)
                if sample is None:
                    row += nan_block
                else:
                    row += [
                        _fmt(sample.position[0]),
                        _fmt(sample.position[1]),
                        _fmt(sample.position[2]),
                        _fmt(sample.d_min),
                        _fmt(sample.repulse_mag),
                        _fmt(sample.w),
                        _fmt(sample.lambda_min),
                        _fmt(sample.proj_raw),
                        _fmt(sample.proj_norm),
                    ]
            for position in record.obstacles:
                if position is None:
                    row += [_fmt(math.nan)] * 3
                else:
                    row += [_fmt(v) for v in position]
            row.append(_fmt(record.min_body_dist))
            writer.writerow(row)


@dataclass
class TraceTable:
    """Column view of a trace CSV, floats parsed, statuses kept as text."""

    header: list[str]
    columns: dict[str, np.ndarray]
    statuses: list[str]

    def __len__(self) -> int:
        return len(self.statuses)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(
                f"trace has no column {name!r}; header: {', '.join(self.header)}"
            ) from None

    @property
    def n_joints(self) -> int:
        return sum(1 for name in self.header if name.startswith("q") and name[1:].isdigit())

    @property
    def n_control_points(self) -> int:
        return sum(1 for name in self.header if name.endswith("_dmin"))

    @property
    def n_obstacles(self) -> int:
        return sum(1 for name in self.header if name.startswith("obs") and name.endswith("_x"))


def read_trace(path) -> TraceTable:
    """Parse a trace CSV; malformed records are reported by row number."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("not a trace file: empty") from None
        rows = list(reader)
    if "solver_status" not in header:
        raise ValueError("not a trace file: missing solver_status column")
    status_idx = header.index("solver_status")

    statuses = []
    numeric = []
    for k, row in enumerate(rows):
        # Data row 1 sits on file line 2, after the header.
        if len(row) != len(header):
            raise ValueError(
                f"malformed trace record at row {k + 1} (file line {k + 2}):"
                f" expected {len(header)} fields, got {len(row)}"
            )
        try:
            numeric.append(
                [float(v) for i, v in enumerate(row) if i != status_idx]
            )
        except ValueError:
            raise ValueError(
                f"malformed trace record at row {k + 1} (file line {k + 2}):"
                " non-numeric field"
            ) from None
        statuses.append(row[status_idx])

    data = np.array(numeric) if numeric else np.zeros((0, len(header) - 1))
    columns = {}
    offset = 0
    for idx, name in enumerate(header):
        if idx == status_idx:
            offset = 1
            continue
        columns[name] = data[:, idx - offset]
    return TraceTable(header=header, columns=columns, statuses=statuses)
