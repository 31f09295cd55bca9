"""Moving point obstacles and distance queries against the chain.

Obstacles are scripted points moving piecewise-linearly through waypoints at
a constant speed.  A script may declare a vanish time after which the sensor
no longer sees the obstacle; the simulation then replaces it with a virtual
obstacle that recedes from its last closest body point at a fixed decay rate
until it leaves the maximum reaction distance and is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kinchain import (
    ControlPoint,
    FKResult,
    KinematicChain,
    forward_kinematics,
)


def _vec3(x, name="vector"):
    v = np.asarray(x, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be a finite 3-vector")
    return v


@dataclass(frozen=True)
class DecayState:
    """Bookkeeping for an obstacle that left the sensor's scope."""

    anchor: np.ndarray      # last closest point on the body, world frame
    direction: np.ndarray   # unit vector from anchor toward the last reading
    distance: float         # current virtual distance from the anchor


@dataclass(frozen=True)
class Obstacle:
    id: str
    position: np.ndarray
    velocity: np.ndarray
    decay: DecayState | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))


@dataclass(frozen=True)
class ObstacleScript:
    """Waypoint schedule for one obstacle.

    Waypoint times must be strictly increasing; between waypoints the
    position is interpolated linearly, so the velocity on a segment is the
    segment direction times ``speed`` when the times were generated from it.
    Before the first waypoint and after the last the obstacle holds position
    with zero velocity.
    """

    id: str
    waypoints: tuple[tuple[float, np.ndarray], ...]
    speed: float
    vanish_time: float | None = None

    def __post_init__(self):
        if len(self.waypoints) == 0:
            raise ValueError("script needs at least one waypoint")
        wps = []
        prev_t = -np.inf
        for t, p in self.waypoints:
            t = float(t)
            if t <= prev_t:
                raise ValueError("waypoint times must be strictly increasing")
            prev_t = t
            wps.append((t, _vec3(p, "waypoint")))
        object.__setattr__(self, "waypoints", tuple(wps))
        if self.speed < 0.0:
            raise ValueError("speed must be non-negative")


def script_from_endpoints(obstacle_id: str, start, end, speed: float,
                          start_time: float = 0.0,
                          vanish_time: float | None = None) -> ObstacleScript:
    """Two-waypoint script whose arrival time follows from the speed."""
    start = _vec3(start, "start")
    end = _vec3(end, "end")
    if speed <= 0.0:
        raise ValueError("speed must be positive")
    travel = float(np.linalg.norm(end - start)) / speed
    return ObstacleScript(
        id=obstacle_id,
        waypoints=((start_time, start), (start_time + travel, end)),
        speed=speed,
        vanish_time=vanish_time,
    )


def scripted_obstacle(script: ObstacleScript, t: float) -> Obstacle:
    """Obstacle state at time ``t`` ignoring any vanish flag."""
    wps = script.waypoints
    if t <= wps[0][0]:
        return Obstacle(script.id, wps[0][1], np.zeros(3))
    if t >= wps[-1][0]:
        return Obstacle(script.id, wps[-1][1], np.zeros(3))
    for (t0, p0), (t1, p1) in zip(wps[:-1], wps[1:]):
        if t0 <= t < t1:
            s = (t - t0) / (t1 - t0)
            vel = (p1 - p0) / (t1 - t0)
            return Obstacle(script.id, p0 + s * (p1 - p0), vel)
    raise AssertionError("unreachable: waypoint scan failed")


def decay_obstacle(obstacle: Obstacle, dt: float, decay_rate: float,
                   d_max: float) -> Obstacle | None:
    """Advance a vanished obstacle's virtual retreat; None once dropped.

    The virtual reading recedes from the anchored body point along the stored
    direction at ``decay_rate`` until it is at least ``d_max`` away.
    """
    if obstacle.decay is None:
        raise ValueError("decay_obstacle needs an obstacle with decay state")
    state = obstacle.decay
    distance = state.distance + decay_rate * dt
    if distance >= d_max:
        return None
    position = state.anchor + distance * state.direction
    velocity = decay_rate * state.direction
    return Obstacle(obstacle.id, position, velocity,
                    decay=replace(state, distance=distance))


def start_decay(obstacle_id: str, anchor, last_position, distance: float) -> Obstacle:
    """Initial virtual obstacle for a reading that just vanished."""
    anchor = _vec3(anchor, "anchor")
    last = _vec3(last_position, "last_position")
    offset = last - anchor
    norm = float(np.linalg.norm(offset))
    direction = offset / norm if norm > 0.0 else np.array([0.0, 0.0, 1.0])
    state = DecayState(anchor=anchor, direction=direction, distance=float(distance))
    return Obstacle(obstacle_id, last.copy(), np.zeros(3), decay=state)


# --- distance queries ---------------------------------------------------------

def closest_point_on_segment(a, b, p) -> tuple[np.ndarray, float]:
    """Closest point to ``p`` on segment [a, b] and its parameter in [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a.copy(), 0.0
    s = float((p - a) @ ab) / denom
    s = min(1.0, max(0.0, s))
    return a + s * ab, s


def closest_point_on_chain(chain: KinematicChain, q, obstacle_position,
                           fk: FKResult | None = None) -> tuple[ControlPoint, float]:
    """Closest body point to a world position, over all link segments.

    Returns a dynamic control point (with world location filled in) and the
    distance.  Ties go to the lowest link index.
    """
    if fk is None:
        fk = forward_kinematics(chain, q)
    p = _vec3(obstacle_position, "obstacle_position")
    best = None
    best_d = np.inf
    for i, seg in enumerate(chain.link_segments):
        frame = fk.link_frames[i]
        a = frame[:3, :3] @ seg[0] + frame[:3, 3]
        b = frame[:3, :3] @ seg[1] + frame[:3, 3]
        point, s = closest_point_on_segment(a, b, p)
        d = float(np.linalg.norm(p - point))
        if d < best_d:
            local = seg[0] + s * (seg[1] - seg[0])
            best = ControlPoint("dynamic", i, local, world_point=point)
            best_d = d
    return best, best_d


@dataclass(frozen=True)
class SurveillanceRegion:
    """Spherical sensing region around a control point."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("surveillance radius must be positive")


@dataclass(frozen=True)
class DistanceQuery:
    """Distance from one located control point to one obstacle."""

    control_point: ControlPoint
    obstacle_id: str
    d_vec: np.ndarray    # from the control point to the obstacle
    d_norm: float
    d_hat: np.ndarray    # unit d_vec, zero at contact


def query_surveillance(cp: ControlPoint, obstacles,
                       region: SurveillanceRegion) -> list[DistanceQuery]:
    """Obstacles within the region of a control point, nearest first.

    Ties in distance are broken by obstacle id so the ordering is total.
    """
    if cp.world_point is None:
        raise ValueError("control point must be located in the world first")
    queries = []
    for obs in obstacles:
        d_vec = obs.position - cp.world_point
        d_norm = float(np.linalg.norm(d_vec))
        if d_norm > region.radius:
            continue
        d_hat = d_vec / d_norm if d_norm > 0.0 else np.zeros(3)
        queries.append(DistanceQuery(cp, obs.id, d_vec, d_norm, d_hat))
    queries.sort(key=lambda query: (query.d_norm, query.obstacle_id))
    return queries
