"""Serial-arm model, rigid-body kinematics, and the base-coupled task-space dynamics.

The arm is a chain of revolute joints.  Joint i sits at ``origin`` in its
parent link frame and rotates about ``axis`` (also parent-frame coordinates);
link i extends from joint i, carries its mass at ``com`` with a rotary
``inertia`` about the COM, and hands the chain to joint i+1 at the next
origin.  The whole chain is rooted at a mount transform expressed in the
vehicle body frame {b}; the vehicle pose places {b} in the inertial frame {i}.

Task-space quantities follow the coupled kinematic chain

    xdot = etadot + Jhat qdot + d,      Jhat = blockdiag(R, R) J,
    d    = [omega_base x P_ee;  0],

so vehicle motion enters the end-effector dynamics purely through kinematics.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .geometry import assert_rotation, euler_zyx_from_rotation, hat, rotation_log

GRAVITY_DEFAULT = np.array([0.0, 0.0, -9.81])


class ModelError(ValueError):
    """Raised for invalid robot model parameters."""


# ---------------------------------------------------------------------------
# model description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Link:
    """One revolute joint plus the rigid link it drives.

    origin: joint position in the parent frame [m]
    axis:   unit rotation axis, parent-frame coordinates
    mass:   link mass [kg]
    com:    center of mass in the link frame [m]
    inertia: 3x3 rotary inertia about the COM, link frame [kg m^2]
    """

    origin: np.ndarray
    axis: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    joint_type: str = "revolute"

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        if self.joint_type != "revolute":
            raise ModelError(f"unsupported joint type {self.joint_type!r}")
        if self.mass <= 0.0:
            raise ModelError("link mass must be > 0")
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ModelError("joint axis must be unit norm")
        I = self.inertia
        if I.shape != (3, 3) or np.linalg.norm(I - I.T) > 1e-12:
            raise ModelError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(I) <= 0.0):
            raise ModelError("inertia must be positive definite")

    @property
    def length(self):
        """Geometric extent of the link (distance to the next joint origin)."""
        return float(np.linalg.norm(self.origin))


class RobotModel:
    """Immutable description of an n-DOF revolute serial arm on a mount.

    Beyond the per-link geometry/inertia this carries per-joint friction
    (viscous [N m s/rad] and Coulomb [N m] levels) and the world gravity
    vector.  Instances are read-only and safe to share across concurrent
    scenario evaluations.
    """

    def __init__(
        self,
        links,
        ee_offset,
        mount_rotation=None,
        mount_position=None,
        gravity=GRAVITY_DEFAULT,
        viscous_friction=None,
        coulomb_friction=None,
        rotor_inertia=None,
    ):
        links = tuple(links)
        if len(links) < 1:
            raise ModelError("need at least one link")
        self.links = links
        self.n = len(links)
        self.ee_offset = np.asarray(ee_offset, dtype=float)
        self.mount_rotation = (
            np.eye(3) if mount_rotation is None else assert_rotation(mount_rotation, what="mount rotation")
        )
        self.mount_position = (
            np.zeros(3) if mount_position is None else np.asarray(mount_position, dtype=float)
        )
        self.gravity = np.asarray(gravity, dtype=float)
        self.viscous_friction = self._friction_array(viscous_friction, "viscous")
        self.coulomb_friction = self._friction_array(coulomb_friction, "coulomb")
        # reflected drive-train inertia, adds to the diagonal of the joint
        # inertia matrix (configuration independent)
        if rotor_inertia is None:
            self.rotor_inertia = np.zeros(self.n)
        else:
            self.rotor_inertia = np.asarray(rotor_inertia, dtype=float)
            if self.rotor_inertia.shape != (self.n,) or np.any(self.rotor_inertia < 0.0):
                raise ModelError("rotor inertia must be >= 0, one entry per joint")
        # packed arrays for the compiled kernels
        self._origins = np.ascontiguousarray([l.origin for l in links])
        self._axes = np.ascontiguousarray([l.axis for l in links])
        self._coms = np.ascontiguousarray([l.com for l in links])
        self._masses = np.ascontiguousarray([l.mass for l in links])
        self._inertias = np.ascontiguousarray([l.inertia for l in links])
        for arr in (self._origins, self._axes, self._coms, self._masses, self.gravity):
            if not np.all(np.isfinite(arr)):
                raise ModelError("model parameters must be finite")

    def _friction_array(self, value, name):
        if value is None:
            return np.zeros(self.n)
        arr = np.asarray(value, dtype=float)
        if arr.shape != (self.n,):
            raise ModelError(f"{name} friction must have one entry per joint")
        if np.any(arr < 0.0):
            raise ModelError(f"{name} friction must be >= 0")
        return arr

    def replace_friction(self, viscous=None, coulomb=None):
        """New model sharing geometry but with different joint friction."""
        return RobotModel(
            self.links,
            self.ee_offset,
            self.mount_rotation,
            self.mount_position,
            self.gravity,
            self.viscous_friction if viscous is None else viscous,
            self.coulomb_friction if coulomb is None else coulomb,
            self.rotor_inertia,
        )

    @property
    def kernel_args(self):
        return (self._origins, self._axes, self.mount_rotation, self.mount_position)

    # -- JSON round trip ----------------------------------------------------

    def to_dict(self):
        return {
            "links": [
                {
                    "origin": l.origin.tolist(),
                    "axis": l.axis.tolist(),
                    "mass": l.mass,
                    "com": l.com.tolist(),
                    "inertia": l.inertia.tolist(),
                    "joint_type": l.joint_type,
                }
                for l in self.links
            ],
            "ee_offset": self.ee_offset.tolist(),
            "mount_transform": {
                "rotation": self.mount_rotation.tolist(),
                "position": self.mount_position.tolist(),
            },
            "gravity": self.gravity.tolist(),
            "friction": {
                "viscous": self.viscous_friction.tolist(),
                "coulomb": self.coulomb_friction.tolist(),
            },
            "rotor_inertia": self.rotor_inertia.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            links = [
                Link(
                    origin=d["origin"],
                    axis=d["axis"],
                    mass=d["mass"],
                    com=d["com"],
                    inertia=d["inertia"],
                    joint_type=d.get("joint_type", "revolute"),
                )
                for d in data["links"]
            ]
            mount = data.get("mount_transform", {})
            friction = data.get("friction", {})
            return cls(
                links,
                ee_offset=data["ee_offset"],
                mount_rotation=mount.get("rotation"),
                mount_position=mount.get("position"),
                gravity=data.get("gravity", GRAVITY_DEFAULT),
                viscous_friction=friction.get("viscous"),
                coulomb_friction=friction.get("coulomb"),
                rotor_inertia=data.get("rotor_inertia"),
            )
        except KeyError as exc:
            raise ModelError(f"robot model is missing field {exc}") from exc

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, source):
        if isinstance(source, (str, bytes)) and str(source).lstrip().startswith("{"):
            return cls.from_dict(json.loads(source))
        with open(source) as fh:
            return cls.from_dict(json.load(fh))


def _rod_inertia(mass, length, radius=0.03):
    """Solid-rod inertia about its COM, axis along local x."""
    ixx = 0.5 * mass * radius**2
    iyy = mass * (3 * radius**2 + length**2) / 12.0
    return np.diag([max(ixx, 1e-6), max(iyy, 1e-6), max(iyy, 1e-6)])


def planar_arm(lengths, masses=None, gravity=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0)):
    """Planar chain in the x-y plane: every joint about the same axis.

    Handy for closed-form oracle tests; gravity defaults to zero so the plane
    choice does not matter.
    """
    lengths = list(lengths)
    if masses is None:
        masses = [1.0] * len(lengths)
    links = []
    prev = np.zeros(3)
    for L, m in zip(lengths, masses):
        links.append(
            Link(
                origin=prev,
                axis=np.asarray(axis, dtype=float),
                mass=m,
                com=np.array([L / 2.0, 0.0, 0.0]),
                inertia=_rod_inertia(m, L),
            )
        )
        prev = np.array([L, 0.0, 0.0])
    return RobotModel(links, ee_offset=prev, gravity=gravity)


def pendulum(mass=1.0, length=1.0, gravity=(0.0, 0.0, -9.81), point_mass=True):
    """Single link rotating about -y so positive q lifts the tip toward +z."""
    # point mass: vanishing rotary inertia (kept tiny but positive definite)
    inertia = np.eye(3) * 1e-9 if point_mass else _rod_inertia(mass, length)
    return RobotModel(
        [
            Link(
                origin=np.zeros(3),
                axis=np.array([0.0, -1.0, 0.0]),
                mass=mass,
                com=np.array([length, 0.0, 0.0]),
                inertia=inertia,
            )
        ],
        ee_offset=np.array([length, 0.0, 0.0]),
        gravity=gravity,
    )


def default_arm(total_mass=2.2, mount_position=(0.0, 0.25, 0.35)):
    """Desk-scale 6-DOF arm: shoulder-elbow-wrist layout with rod inertias.

    Link lengths echo a popular collaborative arm; masses are scaled down so
    the torque envelope of a small field manipulator is adequate.  The mount
    sits toward the working side of the vehicle so the wall-task workspace
    stays well conditioned.
    """
    lengths = [0.1625, 0.425, 0.392, 0.127, 0.100, 0.100]
    mass_frac = np.array([0.24, 0.30, 0.22, 0.10, 0.08, 0.06])
    masses = mass_frac * total_mass
    axes = [
        (0.0, 0.0, 1.0),  # base pan
        (0.0, 1.0, 0.0),  # shoulder
        (0.0, 1.0, 0.0),  # elbow
        (0.0, 1.0, 0.0),  # wrist 1
        (0.0, 0.0, 1.0),  # wrist 2
        (0.0, 1.0, 0.0),  # wrist 3
    ]
    dirs = [
        (0.0, 0.0, 1.0),  # vertical shoulder riser
        (1.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
    ]
    links = []
    prev = np.zeros(3)
    for L, m, ax, dr in zip(lengths, masses, axes, dirs):
        d = np.asarray(dr)
        links.append(
            Link(
                origin=prev,
                axis=np.asarray(ax, dtype=float),
                mass=m,
                com=L / 2.0 * d,
                inertia=_rod_inertia(m, L, radius=0.04),
            )
        )
        prev = L * d
    return RobotModel(
        links,
        ee_offset=prev,
        mount_position=np.asarray(mount_position, dtype=float),
        viscous_friction=np.full(6, 0.02),
        coulomb_friction=np.zeros(6),
        rotor_inertia=np.array([0.08, 0.08, 0.06, 0.04, 0.04, 0.04]),
    )


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise ValueError("joint state must be finite")


@dataclass
class BaseState:
    """Vehicle pose and twist in the inertial frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = assert_rotation(self.rotation, what="base rotation")
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=float)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float)

    @classmethod
    def identity(cls):
        return cls()

    @property
    def euler_zyx(self):
        return euler_zyx_from_rotation(self.rotation)

    @property
    def pose_vector(self):
        """6-vector [position, roll-pitch-yaw] for logging."""
        return np.concatenate([self.position, self.euler_zyx])

    @property
    def velocity(self):
        """6-vector [linear, angular] twist."""
        return np.concatenate([self.linear_velocity, self.angular_velocity])


@dataclass
class Pose:
    position: np.ndarray
    rotation: np.ndarray

    @property
    def euler_zyx(self):
        return euler_zyx_from_rotation(self.rotation)

    @property
    def vector(self):
        return np.concatenate([self.position, self.euler_zyx])


@dataclass
class Wrench:
    """Force/torque pair with an explicit frame tag."""

    force: np.ndarray
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frame: str = "inertial"

    FRAMES = ("inertial", "body", "end-effector")

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)
        if self.frame not in self.FRAMES:
            raise ValueError(f"unknown wrench frame {self.frame!r}")
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise ValueError("wrench must be finite")

    @classmethod
    def from_vector(cls, vec, frame="inertial"):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:3], vec[3:], frame)

    @classmethod
    def zero(cls, frame="inertial"):
        return cls(np.zeros(3), np.zeros(3), frame)

    @property
    def vector(self):
        return np.concatenate([self.force, self.torque])

    def rotated(self, R, frame):
        """Same physical wrench with components re-expressed through R."""
        return Wrench(R @ self.force, R @ self.torque, frame)

    def require_frame(self, frame):
        if self.frame != frame:
            raise ValueError(f"expected wrench in {frame!r} frame, got {self.frame!r}")
        return self


@dataclass
class TaskState:
    """End-effector state plus the coupled task-space model matrices."""

    pose: Pose
    velocity: np.ndarray  # 6: [linear, angular], inertial frame
    J_hat: np.ndarray  # 6 x n
    M0: np.ndarray  # 6 x 6
    C0: np.ndarray  # 6 x 6
    G0: np.ndarray  # 6
    d: np.ndarray  # 6, base-rotation sweep term (rotational part zero)
    near_singular: bool = False


# ---------------------------------------------------------------------------
# kinematics operations
# ---------------------------------------------------------------------------


def forward_kinematics(model, joints, base=None):
    """End-effector pose in the inertial frame (exact base composition)."""
    z, pj, Rj, p_b, R_b = K.chain_frames(
        joints.q, *model.kernel_args, model.ee_offset
    )
    if base is None:
        return Pose(p_b, R_b)
    return Pose(base.position + base.rotation @ p_b, base.rotation @ R_b)


def jacobian(model, joints):
    """Geometric Jacobian in the vehicle body frame {b} (6 x n)."""
    return K.jacobian(joints.q, *model.kernel_args, model.ee_offset)


def augmented_jacobian(J, base):
    """Rotate the body-frame Jacobian into the inertial frame."""
    R = base.rotation
    Jh = np.empty_like(J)
    Jh[:3] = R @ J[:3]
    Jh[3:] = R @ J[3:]
    return Jh


def coupling_velocity_term(base, joints, model):
    """Velocity the base rotation sweeps into the end effector: [w x P; 0]."""
    pose_b = K.chain_frames(joints.q, *model.kernel_args, model.ee_offset)[3]
    P = base.rotation @ pose_b  # end effector relative to base, inertial frame
    d = np.zeros(6)
    d[:3] = np.cross(base.angular_velocity, P)
    return d


def jacobian_time_derivative(model, joints, base=None):
    """d/dt of the (augmented) Jacobian, analytic chain rule."""
    Jd_body = K.jacobian_dot(joints.q, joints.qd, *model.kernel_args, model.ee_offset)
    if base is None:
        return Jd_body
    J = K.jacobian(joints.q, *model.kernel_args, model.ee_offset)
    R = base.rotation
    Rdot = hat(base.angular_velocity) @ R
    Jd = np.empty_like(J)
    Jd[:3] = Rdot @ J[:3] + R @ Jd_body[:3]
    Jd[3:] = Rdot @ J[3:] + R @ Jd_body[3:]
    return Jd


def task_velocity(model, joints, base):
    """Inertial end-effector twist via the coupled chain rule."""
    J = jacobian(model, joints)
    Jh = augmented_jacobian(J, base)
    d = coupling_velocity_term(base, joints, model)
    return base.velocity + Jh @ joints.qd + d


# ---------------------------------------------------------------------------
# dynamics operations
# ---------------------------------------------------------------------------


def joint_space_matrices(model, joints, gravity=None):
    """(M_q, C_q, G_q) with C_q from Christoffel symbols of M_q.

    ``gravity`` overrides the world gravity vector (pass the body-frame
    gravity when the vehicle is tilted).
    """
    g = model.gravity if gravity is None else np.asarray(gravity, dtype=float)
    args = model.kernel_args
    M = K.mass_matrix(
        joints.q, *args, model._coms, model._masses, model._inertias, model.rotor_inertia
    )
    dM = K.mass_matrix_partials(
        joints.q, *args, model._coms, model._masses, model._inertias
    )
    C = K.christoffel_matrix(dM, joints.qd)
    G = K.gravity_vector(joints.q, *args, model._coms, model._masses, g)
    return M, C, G


def mass_matrix_time_derivative(model, joints):
    """Analytic Mdot = sum_k dM/dq_k qd_k (used by property checks)."""
    dM = K.mass_matrix_partials(
        joints.q, *model.kernel_args, model._coms, model._masses, model._inertias
    )
    return np.einsum("kab,k->ab", dM, joints.qd)


def damped_pseudoinverse(J, damping=0.01):
    """J^T (J J^T + damping^2 I)^-1; Moore-Penrose at damping=0, full rank."""
    if damping < 0.0:
        raise ValueError("damping must be >= 0")
    JJt = J @ J.T
    reg = JJt + (damping**2) * np.eye(J.shape[0])
    if damping == 0.0:
        return np.linalg.pinv(J)
    return J.T @ np.linalg.solve(reg, np.eye(J.shape[0]))


SINGULARITY_THRESHOLD = 1e-3


def task_space_matrices(M_q, C_q, G_q, J_hat, J_hat_dot, damping=0.01):
    """Project joint-space dynamics to the end effector.

    Returns (M0, C0, G0, near_singular): the task-space inertia, the
    Coriolis matrix including the Jacobian-rate correction, the gravity
    wrench, and a non-fatal flag raised when the smallest singular value of
    J_hat drops below 1e-3.
    """
    Jp = damped_pseudoinverse(J_hat, damping)
    M0 = Jp.T @ M_q @ Jp
    C0 = Jp.T @ C_q @ Jp - M0 @ (J_hat_dot @ Jp)
    G0 = Jp.T @ G_q
    smin = np.linalg.svd(J_hat, compute_uv=False)[-1]
    return M0, C0, G0, bool(smin < SINGULARITY_THRESHOLD)


def coupling_wrench(M0, C0, base_velocity, base_acceleration, d, d_dot):
    """Wrench the vehicle motion injects into the task-space dynamics.

    mu_c = M0 (etaddot + ddot) + C0 (etadot + d); all arguments are
    6-vectors in the inertial frame.  The plant side knows the true base
    acceleration; controllers never call this (they use filtered velocity).
    """
    return Wrench.from_vector(
        M0 @ (base_acceleration + d_dot) + C0 @ (base_velocity + d), "inertial"
    )


def task_state(model, joints, base, damping=0.01, gravity=None):
    """Full coupled task-space state bundle used by controllers and logs."""
    pose = forward_kinematics(model, joints, base)
    J = jacobian(model, joints)
    Jh = augmented_jacobian(J, base)
    d = coupling_velocity_term(base, joints, model)
    xdot = base.velocity + Jh @ joints.qd + d
    g = gravity if gravity is not None else base.rotation.T @ model.gravity
    M_q, C_q, G_q = joint_space_matrices(model, joints, gravity=g)
    Jhd = jacobian_time_derivative(model, joints, base)
    M0, C0, G0, near_sing = task_space_matrices(M_q, C_q, G_q, Jh, Jhd, damping)
    return TaskState(pose, xdot, Jh, M0, C0, G0, d, near_sing)


def orientation_error(R_actual, R_desired):
    """Rotation-log orientation error, world frame, consistent with x - x_d."""
    return rotation_log(R_actual @ R_desired.T)
