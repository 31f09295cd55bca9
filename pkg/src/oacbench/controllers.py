"""Velocity-level obstacle avoidance controllers.

Four controllers share one template: track a Cartesian reference with the
end effector while staying inside joint position and velocity limits, each
adding its own avoidance mechanism on top.

``baseline``   tracking plus singularity damping, obstacles ignored.
``flacco``     repulsive end-effector velocity plus per-joint velocity
               restrictions shaped by body control points.
``ding``       per-obstacle approach-velocity rows plus a weighted
               distance-gradient row.
``escobedo``   approach-velocity rows at body and end effector, reference
               scaling by proximity, and a mid-range posture ridge.

Every step function returns a :class:`ControlCommand`; the simulation loop
only consumes that interface, so controllers stay interchangeable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinchain import (
    ControlPoint,
    FKResult,
    JointState,
    KinematicChain,
    ee_control_point,
    ee_jacobian,
    forward_kinematics,
    locate_control_point,
    manipulability_scalar,
    point_jacobian,
)
from .qpsolve import STATUS_OPTIMAL, QPSolution, build_qp, solve, velocity_bounds
from .worldmodel import (
    DistanceQuery,
    Obstacle,
    SurveillanceRegion,
    closest_point_on_chain,
    query_surveillance,
)

DEFAULT_REPULSE_SPEED = 0.3
# Wide enough that the repulsive field still acts across the gap the stock
# scenarios leave between the goal pose and the obstacle track; a tighter
# radius leaves the end effector unprotected there.
DEFAULT_REPULSE_RADIUS = 0.6
DEFAULT_SHAPE_FACTOR = 6.0
DEFAULT_CRITICAL_DISTANCE = 0.1
DEFAULT_REPULSE_DISTANCE = 0.2
DEFAULT_NOTICE_DISTANCE = 0.3
DEFAULT_SLOWDOWN_DISTANCE = 0.4
DEFAULT_POSTURE_WEIGHT = 0.1
DEFAULT_DAMPING_CEILING = 0.1
DEFAULT_DAMPING_THRESHOLD = 0.05
DEFAULT_NOMINAL_SPEED = 0.3
# Must cover the goal-to-obstacle gap in the stock scenarios (about 0.43 m)
# or obstacles are never queried from the held pose.
DEFAULT_SURVEILLANCE_RADIUS = 0.5
DEFAULT_MID_FRACTION = 0.5


@dataclass(frozen=True)
class ControllerParams:
    """Tuning shared by all controllers.

    Controllers read only the fields they use; unrelated fields never
    change their output, which keeps cross-controller comparisons honest.
    """

    repulse_speed: float = DEFAULT_REPULSE_SPEED
    repulse_radius: float = DEFAULT_REPULSE_RADIUS
    shape_factor: float = DEFAULT_SHAPE_FACTOR
    critical_distance: float = DEFAULT_CRITICAL_DISTANCE
    repulse_distance: float = DEFAULT_REPULSE_DISTANCE
    notice_distance: float = DEFAULT_NOTICE_DISTANCE
    slowdown_distance: float = DEFAULT_SLOWDOWN_DISTANCE
    posture_weight: float = DEFAULT_POSTURE_WEIGHT
    damping_ceiling: float = DEFAULT_DAMPING_CEILING
    damping_threshold: float = DEFAULT_DAMPING_THRESHOLD
    nominal_speed: float = DEFAULT_NOMINAL_SPEED
    surveillance_radius: float = DEFAULT_SURVEILLANCE_RADIUS
    mid_fraction: float = DEFAULT_MID_FRACTION
    repulsion_sign: float = -1.0
    static_control_links: tuple[int, ...] | None = None

    def __post_init__(self):
        positive = (
            "repulse_speed",
            "repulse_radius",
            "shape_factor",
            "critical_distance",
            "repulse_distance",
            "notice_distance",
            "slowdown_distance",
            "nominal_speed",
            "surveillance_radius",
            "damping_threshold",
        )
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("posture_weight", "damping_ceiling"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if not (
            self.critical_distance
            <= self.repulse_distance
            <= self.notice_distance
            <= self.slowdown_distance
        ):
            raise ValueError(
                "expected critical_distance <= repulse_distance"
                " <= notice_distance <= slowdown_distance"
            )
        if not 0.0 < self.mid_fraction <= 1.0:
            raise ValueError("mid_fraction must lie in (0, 1]")
        if self.repulsion_sign not in (-1.0, 1.0):
            raise ValueError("repulsion_sign must be -1.0 or +1.0")

    @property
    def surveillance(self) -> SurveillanceRegion:
        return SurveillanceRegion(radius=self.surveillance_radius)


@dataclass(frozen=True)
class ControlPointReport:
    """Per-control-point diagnostics attached to a command.

    ``restriction`` is the avoidance velocity the controller associated
    with the point: the repulsive vector for ``flacco``, the admissible
    approach velocity along the obstacle direction for the row-based
    controllers, zeros where the controller imposed nothing.
    """

    label: str
    control_point: ControlPoint
    d_min: float
    restriction: np.ndarray


@dataclass(frozen=True)
class ControlCommand:
    qd: np.ndarray
    solver_status: str
    iterations: int
    task_velocity: np.ndarray
    bounds: tuple[np.ndarray, np.ndarray]
    rows: tuple[tuple[np.ndarray, float], ...]
    cp_reports: tuple[ControlPointReport, ...]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def row_violation(self) -> float:
        """Largest inequality-row violation at the commanded velocity."""
        worst = 0.0
        for a, ub in self.rows:
            worst = max(worst, float(a @ self.qd) - ub)
        return worst


def singularity_damping(w: float, params: ControllerParams) -> float:
    """Ridge weight that fades in as manipulability w drops.

    Zero above the threshold so well-conditioned motion is untouched;
    quadratic ramp up to the ceiling as w approaches zero.
    """
    if w >= params.damping_threshold:
        return 0.0
    return params.damping_ceiling * (1.0 - w / params.damping_threshold) ** 2


def repulse_magnitude(distance: float, params: ControllerParams) -> float:
    """Repulsive speed as a function of obstacle distance.

    Logistic falloff: equals half of ``repulse_speed`` at half the
    repulse radius and decays towards zero beyond the radius.
    """
    if distance < 0.0:
        raise ValueError("distance must be nonnegative")
    z = (distance * (2.0 / params.repulse_radius) - 1.0) * params.shape_factor
    return params.repulse_speed / (1.0 + math.exp(z))


def flacco_repulsive(
    queries: list[DistanceQuery], params: ControllerParams
) -> np.ndarray:
    """Aggregate repulsive velocity at one control point.

    Magnitude comes from the nearest obstacle; direction is the unit sum
    of per-obstacle directions, each weighted by its own falloff, so the
    whole cluster steers the push while the closest obstacle sizes it.
    """
    if not queries:
        return np.zeros(3)
    direction = np.zeros(3)
    nearest = math.inf
    for query in queries:
        nearest = min(nearest, query.d_norm)
        direction = direction + repulse_magnitude(query.d_norm, params) * query.d_hat
    scale = float(np.linalg.norm(direction))
    if scale == 0.0:
        return np.zeros(3)
    magnitude = repulse_magnitude(nearest, params)
    return params.repulsion_sign * magnitude * (direction / scale)


def restriction_fraction(
    queries: list[DistanceQuery], params: ControllerParams
) -> float:
    """Fraction of per-joint speed to withhold for a body control point."""
    if not queries:
        return 0.0
    nearest = min(query.d_norm for query in queries)
    return repulse_magnitude(nearest, params) / params.repulse_speed


def restricted_velocity_cap(
    fraction: float, joint_cap: float
) -> float:
    """Per-joint speed cap after withholding ``fraction`` of the budget."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    return joint_cap * (1.0 - fraction)


def flacco_joint_bounds(
    chain: KinematicChain,
    q: np.ndarray,
    control_points: list[ControlPoint],
    obstacles: list[Obstacle],
    params: ControllerParams,
    b_l: np.ndarray,
    b_u: np.ndarray,
    fk: FKResult | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Tighten velocity bounds using body control point proximity.

    For each control point near an obstacle, joints that move the point
    towards the nearest obstacle get their bound on that side pulled in;
    the most restrictive cap across control points wins per joint and
    side.
    """
    if fk is None:
        fk = forward_kinematics(chain, q)
    joint_caps = np.minimum(chain.qd_upper, -chain.qd_lower)
    lo = b_l.copy()
    hi = b_u.copy()
    for cp in control_points:
        queries = query_surveillance(cp, obstacles, params.surveillance)
        if not queries:
            continue
        fraction = restriction_fraction(queries, params)
        jac = point_jacobian(chain, q, cp, fk=fk)
        # Queries arrive sorted by distance; influence follows the
        # nearest obstacle's direction scaled by the risk fraction.
        influence = (jac.T @ queries[0].d_hat) * fraction
        for i in range(chain.n):
            cap = restricted_velocity_cap(fraction, joint_caps[i])
            if influence[i] >= 0.0:
                hi[i] = min(hi[i], cap)
            else:
                lo[i] = max(lo[i], -cap)
    return lo, hi


def approach_velocity(
    distance: float, params: ControllerParams
) -> float | None:
    """Admissible velocity towards an obstacle at the given distance.

    Three regimes: inside the repulse distance the cap is negative
    (retreat), between repulse and notice distance it is a small positive
    allowance, beyond the notice distance there is no restriction and
    ``None`` is returned.
    """
    if distance < 0.0:
        raise ValueError("distance must be nonnegative")
    v_max = params.repulse_speed
    alpha = params.shape_factor
    if distance < min(params.notice_distance, params.repulse_distance):
        z = alpha * (2.0 * distance / params.critical_distance - 1.0)
        return v_max / (1.0 + math.exp(z)) - v_max
    if params.repulse_distance <= distance < params.notice_distance:
        span = params.notice_distance - params.critical_distance
        z = alpha * (2.0 * (distance - params.critical_distance) / span - 1.0)
        return v_max / (1.0 + math.exp(z))
    return None


def velocity_scale_factor(
    lowest_distance: float, params: ControllerParams
) -> float:
    """Reference-velocity scale from the lowest obstacle distance."""
    if lowest_distance < 0.0:
        raise ValueError("distance must be nonnegative")
    return min(lowest_distance / params.slowdown_distance, 1.0)


def distance_gradient(
    chain: KinematicChain,
    q: np.ndarray,
    cp: ControlPoint,
    d_hat: np.ndarray,
    fk: FKResult | None = None,
) -> np.ndarray:
    """Joint-space gradient of the control point's obstacle distance.

    Moving the point towards the obstacle shrinks the distance, hence the
    negated projection of the point Jacobian onto the direction.
    """
    jac = point_jacobian(chain, q, cp, fk=fk)
    return -(jac.T @ np.asarray(d_hat, dtype=float))


def mid_joint_velocity(
    chain: KinematicChain, q: np.ndarray, params: ControllerParams
) -> np.ndarray:
    """Velocity target pulling joints towards the middle of their range."""
    mid = 0.5 * (chain.q_lower + chain.q_upper)
    span = chain.q_upper - chain.q_lower
    return params.mid_fraction * (mid - q) / span


def static_control_points(
    chain: KinematicChain, params: ControllerParams
) -> list[ControlPoint]:
    """Body control points at link origins for the velocity restriction."""
    if params.static_control_links is not None:
        links = params.static_control_links
    else:
        links = tuple(range(max(0, chain.n - 5), chain.n))
    points = []
    for link in links:
        if not 0 <= link < chain.n:
            raise ValueError(f"static control link {link} out of range")
        points.append(
            ControlPoint(
                kind="static", link_index=link, local_point=np.zeros(3)
            )
        )
    return points


def _locate_all(
    chain: KinematicChain, points: list[ControlPoint], fk: FKResult
) -> list[ControlPoint]:
    return [locate_control_point(chain, cp, fk) for cp in points]


def _nearest_distance(
    cp: ControlPoint, obstacles: list[Obstacle]
) -> float:
    if not obstacles:
        return math.inf
    return min(
        float(np.linalg.norm(obs.position - cp.world_point))
        for obs in obstacles
    )


def _solve_tracking(
    chain: KinematicChain,
    jac: np.ndarray,
    xd: np.ndarray,
    mu: float,
    rows: tuple[tuple[np.ndarray, float], ...],
    b_l: np.ndarray,
    b_u: np.ndarray,
    extra_ridge: tuple[tuple[float, np.ndarray], ...] = (),
) -> QPSolution:
    ridge = ((mu, np.zeros(chain.n)),) + extra_ridge
    qp = build_qp(
        chain.n,
        tracking=((jac, xd),),
        ridge=ridge,
        rows=rows,
        b_l=b_l,
        b_u=b_u,
    )
    return solve(qp)


def _command(
    chain: KinematicChain,
    solution: QPSolution,
    task_velocity: np.ndarray,
    bounds: tuple[np.ndarray, np.ndarray],
    rows: tuple[tuple[np.ndarray, float], ...],
    cp_reports: tuple[ControlPointReport, ...],
) -> ControlCommand:
    # Commanding a stale velocity after a failed solve would push the arm
    # through whichever constraint just became inconsistent; stop instead.
    if solution.status == STATUS_OPTIMAL:
        qd = solution.x
    else:
        qd = np.zeros(chain.n)
    return ControlCommand(
        qd=qd,
        solver_status=solution.status,
        iterations=solution.iterations,
        task_velocity=task_velocity,
        bounds=bounds,
        rows=rows,
        cp_reports=cp_reports,
    )


def baseline_step(
    chain: KinematicChain,
    state: JointState,
    xd: np.ndarray,
    obstacles: list[Obstacle],
    params: ControllerParams,
) -> ControlCommand:
    """Track the reference, ignore obstacles entirely."""
    xd = np.asarray(xd, dtype=float)
    fk = forward_kinematics(chain, state.q)
    jac = ee_jacobian(chain, state.q, fk=fk)
    mu = singularity_damping(manipulability_scalar(jac), params)
    b_l, b_u = velocity_bounds(
        state.q, chain.q_lower, chain.q_upper, chain.qd_lower, chain.qd_upper
    )
    solution = _solve_tracking(chain, jac, xd, mu, (), b_l, b_u)
    ee = ee_control_point(chain, fk)
    reports = (
        ControlPointReport(
            label="ee",
            control_point=ee,
            d_min=_nearest_distance(ee, obstacles),
            restriction=np.zeros(3),
        ),
    )
    return _command(chain, solution, xd, (b_l, b_u), (), reports)


def flacco_step(
    chain: KinematicChain,
    state: JointState,
    xd: np.ndarray,
    obstacles: list[Obstacle],
    params: ControllerParams,
) -> ControlCommand:
    """Repulsive end-effector velocity plus body velocity restrictions."""
    xd = np.asarray(xd, dtype=float)
    fk = forward_kinematics(chain, state.q)
    jac = ee_jacobian(chain, state.q, fk=fk)
    mu = singularity_damping(manipulability_scalar(jac), params)
    b_l, b_u = velocity_bounds(
        state.q, chain.q_lower, chain.q_upper, chain.qd_lower, chain.qd_upper
    )

    ee = ee_control_point(chain, fk)
    ee_queries = query_surveillance(ee, obstacles, params.surveillance)
    repulsive = flacco_repulsive(ee_queries, params)
    task = xd
    if np.any(repulsive != 0.0):
        task = xd + repulsive

    body = _locate_all(chain, static_control_points(chain, params), fk)
    lo, hi = flacco_joint_bounds(
        chain, state.q, body, obstacles, params, b_l, b_u, fk=fk
    )
    solution = _solve_tracking(chain, jac, task, mu, (), lo, hi)

    reports = []
    for cp in body:
        queries = query_surveillance(cp, obstacles, params.surveillance)
        reports.append(
            ControlPointReport(
                label=f"body_l{cp.link_index}",
                control_point=cp,
                d_min=_nearest_distance(cp, obstacles),
                restriction=flacco_repulsive(queries, params),
            )
        )
    reports.append(
        ControlPointReport(
            label="ee",
            control_point=ee,
            d_min=_nearest_distance(ee, obstacles),
            restriction=repulsive,
        )
    )
    return _command(chain, solution, task, (lo, hi), (), tuple(reports))


def _approach_rows(
    chain: KinematicChain,
    q: np.ndarray,
    cp: ControlPoint,
    queries: list[DistanceQuery],
    params: ControllerParams,
    fk: FKResult,
) -> tuple[list[tuple[np.ndarray, float]], np.ndarray]:
    """Approach-velocity rows for one control point.

    Returns the rows plus the restriction vector for reporting: the
    admissible approach velocity along the nearest obstacle direction.
    """
    rows = []
    restriction = np.zeros(3)
    jac = None
    for rank, query in enumerate(queries):
        cap = approach_velocity(query.d_norm, params)
        if cap is None:
            continue
        norm = float(np.linalg.norm(query.d_hat))
        if norm == 0.0:
            # Contact leaves no usable direction; nothing to constrain.
            continue
        if jac is None:
            jac = point_jacobian(chain, q, cp, fk=fk)
        rows.append((query.d_hat @ jac, cap))
        if rank == 0:
            restriction = cap * query.d_hat
    return rows, restriction


def ding_step(
    chain: KinematicChain,
    state: JointState,
    xd: np.ndarray,
    obstacles: list[Obstacle],
    params: ControllerParams,
) -> ControlCommand:
    """Approach-velocity rows plus a weighted distance-gradient row."""
    xd = np.asarray(xd, dtype=float)
    fk = forward_kinematics(chain, state.q)
    jac = ee_jacobian(chain, state.q, fk=fk)
    mu = singularity_damping(manipulability_scalar(jac), params)
    b_l, b_u = velocity_bounds(
        state.q, chain.q_lower, chain.q_upper, chain.qd_lower, chain.qd_upper
    )

    rows: list[tuple[np.ndarray, float]] = []
    reports = []
    for obs in obstacles:
        cp, _ = closest_point_on_chain(chain, state.q, obs.position, fk=fk)
        queries = query_surveillance(cp, obstacles, params.surveillance)
        cp_rows, restriction = _approach_rows(
            chain, state.q, cp, queries, params, fk
        )
        rows.extend(cp_rows)
        gradient = np.zeros(chain.n)
        for query in queries:
            weight = repulse_magnitude(query.d_norm, params)
            gradient = gradient + weight * distance_gradient(
                chain, state.q, cp, query.d_hat, fk=fk
            )
        if np.any(gradient != 0.0):
            # Keep the weighted distance from shrinking.
            rows.append((-gradient, 0.0))
        reports.append(
            ControlPointReport(
                label=f"near_{obs.id}",
                control_point=cp,
                d_min=_nearest_distance(cp, obstacles),
                restriction=restriction,
            )
        )

    solution = _solve_tracking(chain, jac, xd, mu, tuple(rows), b_l, b_u)
    ee = ee_control_point(chain, fk)
    reports.append(
        ControlPointReport(
            label="ee",
            control_point=ee,
            d_min=_nearest_distance(ee, obstacles),
            restriction=np.zeros(3),
        )
    )
    return _command(
        chain, solution, xd, (b_l, b_u), tuple(rows), tuple(reports)
    )


def escobedo_step(
    chain: KinematicChain,
    state: JointState,
    xd: np.ndarray,
    obstacles: list[Obstacle],
    params: ControllerParams,
) -> ControlCommand:
    """Approach-velocity rows, proximity slowdown, and a posture ridge."""
    xd = np.asarray(xd, dtype=float)
    fk = forward_kinematics(chain, state.q)
    jac = ee_jacobian(chain, state.q, fk=fk)
    mu = singularity_damping(manipulability_scalar(jac), params)
    b_l, b_u = velocity_bounds(
        state.q, chain.q_lower, chain.q_upper, chain.qd_lower, chain.qd_upper
    )

    rows: list[tuple[np.ndarray, float]] = []
    reports = []
    lowest = math.inf
    for obs in obstacles:
        cp, dist = closest_point_on_chain(chain, state.q, obs.position, fk=fk)
        lowest = min(lowest, dist)
        queries = query_surveillance(cp, obstacles, params.surveillance)
        cp_rows, restriction = _approach_rows(
            chain, state.q, cp, queries, params, fk
        )
        rows.extend(cp_rows)
        reports.append(
            ControlPointReport(
                label=f"near_{obs.id}",
                control_point=cp,
                d_min=_nearest_distance(cp, obstacles),
                restriction=restriction,
            )
        )

    ee = ee_control_point(chain, fk)
    ee_queries = query_surveillance(ee, obstacles, params.surveillance)
    ee_rows, ee_restriction = _approach_rows(
        chain, state.q, ee, ee_queries, params, fk
    )
    rows.extend(ee_rows)

    task = xd
    if lowest < params.slowdown_distance:
        task = xd * velocity_scale_factor(lowest, params)

    posture = ((params.posture_weight, mid_joint_velocity(chain, state.q, params)),)
    solution = _solve_tracking(
        chain, jac, task, mu, tuple(rows), b_l, b_u, extra_ridge=posture
    )
    reports.append(
        ControlPointReport(
            label="ee",
            control_point=ee,
            d_min=_nearest_distance(ee, obstacles),
            restriction=ee_restriction,
        )
    )
    return _command(
        chain, solution, task, (b_l, b_u), tuple(rows), tuple(reports)
    )


CONTROLLERS = {
    "baseline": baseline_step,
    "flacco": flacco_step,
    "ding": ding_step,
    "escobedo": escobedo_step,
}


def controller_step(name: str):
    """Look up a controller step function by its registry name."""
    try:
        return CONTROLLERS[name]
    except KeyError:
        known = ", ".join(sorted(CONTROLLERS))
        raise ValueError(f"unknown controller {name!r}; known: {known}") from None
