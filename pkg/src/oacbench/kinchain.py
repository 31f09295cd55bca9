"""Serial-chain kinematics: chain description, FK, point Jacobians and
manipulability analysis.

A chain is a sequence of revolute joints.  Joint ``i`` is mounted on the
frame of joint ``i - 1`` through a fixed origin transform (translation +
roll/pitch/yaw rotation) and rotates about a fixed axis expressed in its own
frame.  Link ``i`` is rigidly attached to the frame of joint ``i`` after the
joint rotation; its collision geometry is a single line segment given in
that frame.  The end effector is a fixed offset from the last link frame.

All positions are metres, all angles radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
import yaml


def _as_vec(x, n, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: mounting transform, axis and limits."""

    axis: np.ndarray
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray
    q_limits: tuple[float, float]
    qd_limits: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "axis", _as_vec(self.axis, 3, "axis"))
        object.__setattr__(self, "origin_xyz", _as_vec(self.origin_xyz, 3, "origin_xyz"))
        object.__setattr__(self, "origin_rpy", _as_vec(self.origin_rpy, 3, "origin_rpy"))
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-12:
            raise ValueError("joint axis must be a unit vector")
        ql, qu = self.q_limits
        if not ql < qu:
            raise ValueError("q_limits must satisfy lower < upper")
        vl, vu = self.qd_limits
        if not (vl < 0.0 < vu):
            raise ValueError("qd_limits must straddle zero")


@dataclass(frozen=True)
class KinematicChain:
    """A serial chain of revolute joints with per-link segment geometry."""

    name: str
    joints: tuple[JointSpec, ...]
    link_segments: tuple[np.ndarray, ...]   # one (2, 3) array per link, link frame
    ee_offset_xyz: np.ndarray
    ee_offset_rpy: np.ndarray
    home: np.ndarray

    def __post_init__(self):
        if len(self.joints) == 0:
            raise ValueError("chain needs at least one joint")
        if len(self.link_segments) != len(self.joints):
            raise ValueError("need exactly one link segment per joint")
        segs = []
        for i, seg in enumerate(self.link_segments):
            s = np.asarray(seg, dtype=float)
            if s.shape != (2, 3) or not np.all(np.isfinite(s)):
                raise ValueError(f"link segment {i} must be a finite (2, 3) array")
            segs.append(s)
        object.__setattr__(self, "link_segments", tuple(segs))
        object.__setattr__(self, "ee_offset_xyz", _as_vec(self.ee_offset_xyz, 3, "ee_offset_xyz"))
        object.__setattr__(self, "ee_offset_rpy", _as_vec(self.ee_offset_rpy, 3, "ee_offset_rpy"))
        object.__setattr__(self, "home", _as_vec(self.home, len(self.joints), "home"))

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def q_lower(self) -> np.ndarray:
        return np.array([j.q_limits[0] for j in self.joints])

    @property
    def q_upper(self) -> np.ndarray:
        return np.array([j.q_limits[1] for j in self.joints])

    @property
    def qd_lower(self) -> np.ndarray:
        return np.array([j.qd_limits[0] for j in self.joints])

    @property
    def qd_upper(self) -> np.ndarray:
        return np.array([j.qd_limits[1] for j in self.joints])

    def check_q(self, q) -> np.ndarray:
        return _as_vec(q, self.n, "q")


@dataclass(frozen=True)
class JointState:
    """Joint positions and velocities at one control tick."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        if q.shape != qd.shape or q.ndim != 1:
            raise ValueError("q and qd must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("joint state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)


@dataclass(frozen=True)
class ControlPoint:
    """A point rigidly attached to one link, optionally located in the world.

    ``kind`` is "static" for configured body points, "dynamic" for points
    found by a closest-point query, and "ee" for the end effector.
    """

    kind: str
    link_index: int
    local_point: np.ndarray
    world_point: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "local_point", _as_vec(self.local_point, 3, "local_point"))
        if self.world_point is not None:
            object.__setattr__(self, "world_point", _as_vec(self.world_point, 3, "world_point"))


def rpy_matrix(rpy) -> np.ndarray:
    """Rotation matrix for fixed-axis roll/pitch/yaw angles (Rz @ Ry @ Rx)."""
    r, p, y = float(rpy[0]), float(rpy[1]), float(rpy[2])
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rotation about a unit axis by ``angle`` (Rodrigues form)."""
    x, y, z = float(axis[0]), float(axis[1]), float(axis[2])
    c, s = math.cos(angle), math.sin(angle)
    one_c = 1.0 - c
    return np.array([
        [c + x * x * one_c, x * y * one_c - z * s, x * z * one_c + y * s],
        [y * x * one_c + z * s, c + y * y * one_c, y * z * one_c - x * s],
        [z * x * one_c - y * s, z * y * one_c + x * s, c + z * z * one_c],
    ])


def _homogeneous(rot: np.ndarray, pos: np.ndarray) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = rot
    T[:3, 3] = pos
    return T


@dataclass(frozen=True)
class FKResult:
    """World transforms of every link frame plus the end-effector pose."""

    link_frames: np.ndarray    # (n, 4, 4), frame of link i after joint i rotation
    ee_pose: np.ndarray        # (4, 4)

    @property
    def ee_position(self) -> np.ndarray:
        return self.ee_pose[:3, 3]

    def joint_origin(self, i: int) -> np.ndarray:
        return self.link_frames[i][:3, 3]

    def joint_axis_world(self, chain: KinematicChain, i: int) -> np.ndarray:
        return self.link_frames[i][:3, :3] @ chain.joints[i].axis


def forward_kinematics(chain: KinematicChain, q) -> FKResult:
    """World pose of every link frame and the end effector at configuration q."""
    q = chain.check_q(q)
    frames = np.empty((chain.n, 4, 4))
    T = np.eye(4)
    for i, joint in enumerate(chain.joints):
        T = T @ _homogeneous(rpy_matrix(joint.origin_rpy), joint.origin_xyz)
        T = T @ _homogeneous(axis_angle_matrix(joint.axis, q[i]), np.zeros(3))
        frames[i] = T
    ee = T @ _homogeneous(rpy_matrix(chain.ee_offset_rpy), chain.ee_offset_xyz)
    return FKResult(link_frames=frames, ee_pose=ee)


def ee_control_point(chain: KinematicChain, fk: FKResult | None = None,
                     q=None) -> ControlPoint:
    """The end effector as a control point on the last link."""
    if fk is None:
        fk = forward_kinematics(chain, q)
    return ControlPoint(
        kind="ee",
        link_index=chain.n - 1,
        local_point=chain.ee_offset_xyz,
        world_point=fk.ee_position.copy(),
    )


def locate_control_point(chain: KinematicChain, cp: ControlPoint,
                         fk: FKResult) -> ControlPoint:
    """Return ``cp`` with its world position filled in from ``fk``."""
    if not 0 <= cp.link_index < chain.n:
        raise ValueError(f"control point link index {cp.link_index} out of range")
    frame = fk.link_frames[cp.link_index]
    world = frame[:3, :3] @ cp.local_point + frame[:3, 3]
    return replace(cp, world_point=world)


def point_jacobian(chain: KinematicChain, q, cp: ControlPoint,
                   fk: FKResult | None = None) -> np.ndarray:
    """Translational Jacobian (3 x n) of a point attached to one link.

    Columns for joints distal to the control point's link are zero.
    """
    if fk is None:
        fk = forward_kinematics(chain, q)
    located = cp if cp.world_point is not None else locate_control_point(chain, cp, fk)
    p = located.world_point
    J = np.zeros((3, chain.n))
    for i in range(cp.link_index + 1):
        z = fk.joint_axis_world(chain, i)
        o = fk.joint_origin(i)
        J[:, i] = np.cross(z, p - o)
    return J


def ee_jacobian(chain: KinematicChain, q, fk: FKResult | None = None) -> np.ndarray:
    """Translational Jacobian of the end effector."""
    if fk is None:
        fk = forward_kinematics(chain, q)
    return point_jacobian(chain, q, ee_control_point(chain, fk), fk)


def manipulability_scalar(J) -> float:
    """Manipulability of a wide Jacobian: sqrt(det(J J^T)).

    Equals the product of the singular values of J when J is m x n with
    n >= m, and 0 for a tall J (fewer joints than task dimensions).  The
    determinant is clipped at zero before the root so round-off cannot
    produce NaN.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2:
        raise ValueError("J must be a matrix")
    gram = J @ J.T
    return math.sqrt(max(float(np.linalg.det(gram)), 0.0))


def jacobi_eigh3(S) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvector columns).  Iterates until
    every off-diagonal entry is at or below 1e-12 relative to the matrix
    scale.  Deterministic: fixed sweep order, no pivot search.
    """
    A = np.array(S, dtype=float)
    if A.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if np.max(np.abs(A - A.T)) > 1e-9 * max(1.0, np.max(np.abs(A))):
        raise ValueError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(3)
    scale = max(1.0, float(np.max(np.abs(A))))
    tol = 1e-12 * scale
    for _ in range(64):
        off = max(abs(A[0, 1]), abs(A[0, 2]), abs(A[1, 2]))
        if off <= tol:
            break
        for p, r in ((0, 1), (0, 2), (1, 2)):
            apr = A[p, r]
            if abs(apr) <= tol / 8.0:
                continue
            # classic Jacobi rotation zeroing A[p, r]
            theta = (A[r, r] - A[p, p]) / (2.0 * apr)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            R = np.eye(3)
            R[p, p] = c
            R[r, r] = c
            R[p, r] = s
            R[r, p] = -s
            A = R.T @ A @ R
            A = 0.5 * (A + A.T)
            V = V @ R
    lam = np.diag(A).copy()
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    V = V[:, order]
    # sign convention: make the largest-magnitude component of each vector positive
    for k in range(3):
        j = int(np.argmax(np.abs(V[:, k])))
        if V[j, k] < 0.0:
            V[:, k] = -V[:, k]
    return lam, V


@dataclass(frozen=True)
class ManipulabilityEllipsoid:
    """Velocity ellipsoid of a 3 x n point Jacobian.

    Eigenvalues are sorted descending and clipped at zero; eigenvectors are
    the matching orthonormal columns.  ``degenerate`` marks rank-deficient
    Jacobians (smallest eigenvalue indistinguishable from zero).
    """

    eigenvalues: np.ndarray     # (3,), descending, >= 0
    eigenvectors: np.ndarray    # (3, 3), columns match eigenvalues
    degenerate: bool

    @property
    def v_min(self) -> np.ndarray:
        """Unit direction of least mobility."""
        return self.eigenvectors[:, 2]

    @property
    def w(self) -> float:
        """Manipulability scalar: sqrt of the eigenvalue product."""
        return math.sqrt(float(np.prod(self.eigenvalues)))


def manipulability_ellipsoid(J) -> ManipulabilityEllipsoid:
    """Eigen-analysis of J J^T for a 3 x n Jacobian.

    Chains with fewer than three joints simply yield a degenerate
    ellipsoid; the flag reports it.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != 3 or J.shape[1] < 1:
        raise ValueError("J must be 3 x n with n >= 1")
    lam, V = jacobi_eigh3(J @ J.T)
    lam = np.clip(lam, 0.0, None)
    degenerate = bool(lam[2] <= 1e-12 * max(lam[0], 1e-300))
    return ManipulabilityEllipsoid(eigenvalues=lam, eigenvectors=V, degenerate=degenerate)


def projection_metric(V, ell: ManipulabilityEllipsoid) -> float:
    """Fraction of a Cartesian vector lying along the least-mobile direction.

    Normalised to [0, 1]: |V . v_min| / ||V||, and 0 for a zero vector.
    """
    V = _as_vec(V, 3, "V")
    norm = float(np.linalg.norm(V))
    if norm == 0.0:
        return 0.0
    return abs(float(V @ ell.v_min)) / norm


def projection_raw(V, ell: ManipulabilityEllipsoid) -> float:
    """Signed projection of V onto the least-mobile direction (unnormalised)."""
    V = _as_vec(V, 3, "V")
    v = ell.v_min
    return float(V @ v) / float(v @ v)


# ---------------------------------------------------------------------------
# chain description file I/O

def chain_to_dict(chain: KinematicChain) -> dict:
    return {
        "name": chain.name,
        "joints": [
            {
                "axis": [float(x) for x in j.axis],
                "origin_xyz": [float(x) for x in j.origin_xyz],
                "origin_rpy": [float(x) for x in j.origin_rpy],
                "q_limits": [float(j.q_limits[0]), float(j.q_limits[1])],
                "qd_limits": [float(j.qd_limits[0]), float(j.qd_limits[1])],
            }
            for j in chain.joints
        ],
        "links": [
            {"segment": [float(x) for x in seg.reshape(6)]}
            for seg in chain.link_segments
        ],
        "ee_offset": {
            "origin_xyz": [float(x) for x in chain.ee_offset_xyz],
            "origin_rpy": [float(x) for x in chain.ee_offset_rpy],
        },
        "home": [float(x) for x in chain.home],
    }


def chain_from_dict(data: dict) -> KinematicChain:
    try:
        joints = tuple(
            JointSpec(
                axis=j["axis"],
                origin_xyz=j["origin_xyz"],
                origin_rpy=j["origin_rpy"],
                q_limits=(float(j["q_limits"][0]), float(j["q_limits"][1])),
                qd_limits=(float(j["qd_limits"][0]), float(j["qd_limits"][1])),
            )
            for j in data["joints"]
        )
        segments = tuple(
            np.asarray(link["segment"], dtype=float).reshape(2, 3)
            for link in data["links"]
        )
        ee = data["ee_offset"]
        return KinematicChain(
            name=str(data["name"]),
            joints=joints,
            link_segments=segments,
            ee_offset_xyz=ee["origin_xyz"],
            ee_offset_rpy=ee["origin_rpy"],
            home=data["home"],
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"malformed chain description: {exc}") from exc


def save_chain(chain: KinematicChain, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(chain_to_dict(chain), fh, sort_keys=False)


def load_chain(path) -> KinematicChain:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError("malformed chain description: expected a mapping")
    return chain_from_dict(data)


def builtin_chain(name: str) -> KinematicChain:
    """Load one of the chain descriptions shipped with the package."""
    pkg_files = resources.files("oacbench").joinpath("data")
    path = pkg_files.joinpath(f"{name}.yaml")
    if not path.is_file():
        available = sorted(p.name[:-5] for p in pkg_files.iterdir()
                           if p.name.endswith(".yaml"))
        raise ValueError(f"unknown chain '{name}'; shipped chains: {', '.join(available)}")
    data = yaml.safe_load(path.read_text())
    return chain_from_dict(data)
