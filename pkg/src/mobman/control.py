"""Task-space motion/force controllers and the runtime stability monitor.

Four controller variants share one code path and differ only in what they
estimate and which kinematic picture they trust:

  C1  feedback estimator + base-coupling feedforward, coupled kinematics
  C2  feedback estimator only, coupled kinematics
  C3  feedback estimator only, fixed-base model: the vehicle pose still
      locates the end effector (odometry), but the velocity-level coupling
      terms are absent from the model, so vehicle motion appears purely as
      disturbance
  C4  impedance law with feedback linearization, no estimator

All variants render the target impedance

    M0 (xddot - xddot_d) + C_d edot + K_d e = K_fd e_f

at the end effector and map the commanded wrench to joint torques through the
transposed Jacobian, with elementwise torque clamping.  The estimator path
consumes velocities only - accelerations are reconstructed implicitly by the
exact discrete-time composite operators from :mod:`mobman.filters`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import filters as F
from . import robot as rb

KINDS = ("C1", "C2", "C3", "C4")

TORQUE_LIMIT_DEFAULT = np.array([6.0, 6.0, 3.0, 2.0, 2.0, 2.0])
OMEGA_C_DEFAULT = np.array([6.0, 6.0, 6.0, 3.0, 3.0, 3.0])
K_D_DEFAULT = np.array([200.0, 200.0, 200.0, 20.0, 20.0, 20.0])
C_D_DEFAULT = np.array([2.0, 2.0, 2.0, 1.0, 1.0, 1.0])
K_FD_DEFAULT = np.array([0.0, 5.0, 0.0, 0.0, 0.0, 0.0])


class ControlError(ValueError):
    """Raised for invalid controller configuration."""


@dataclass(frozen=True)
class ImpedanceParams:
    """Diagonal impedance gains; the inertia matrix is the live task inertia.

    k_d: stiffness [N/m | N m/rad], c_d: damping [N s/m], k_fd: dimensionless
    force gain active only on force-controlled axes.
    """

    k_d: np.ndarray = field(default_factory=lambda: K_D_DEFAULT.copy())
    c_d: np.ndarray = field(default_factory=lambda: C_D_DEFAULT.copy())
    k_fd: np.ndarray = field(default_factory=lambda: K_FD_DEFAULT.copy())

    def __post_init__(self):
        for name in ("k_d", "c_d", "k_fd"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (6,):
                raise ControlError(f"{name} must have 6 diagonal entries")
            if np.any(arr < 0.0):
                raise ControlError(f"{name} must be >= 0 (diagonal PSD)")

    def validated_for_modes(self, ever_motion, ever_force):
        """Check gain/mode consistency for the axes a scenario actually uses."""
        ever_motion = np.asarray(ever_motion, dtype=bool)
        ever_force = np.asarray(ever_force, dtype=bool)
        if np.any((self.k_d <= 0.0) & ever_motion):
            raise ControlError("k_d must be strictly positive on motion axes")
        if np.any((self.k_fd != 0.0) & ~ever_force):
            raise ControlError("k_fd must be zero on axes never force-controlled")
        return self


def experiment_impedance():
    """Gain set used with the hardware-style torque envelope."""
    return ImpedanceParams(
        k_d=np.array([25.0, 25.0, 25.0, 2.5, 2.5, 2.5]),
        c_d=np.array([10.0, 10.0, 10.0, 1.0, 1.0, 1.0]),
        k_fd=np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
    )


@dataclass
class ControlTarget:
    """Desired end-effector trajectory sample plus the per-axis mode split."""

    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(6))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(6))
    force: np.ndarray = field(default_factory=lambda: np.zeros(6))
    force_axes: np.ndarray = field(default_factory=lambda: np.zeros(6, dtype=bool))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.acceleration = np.asarray(self.acceleration, dtype=float)
        self.force = np.asarray(self.force, dtype=float)
        self.force_axes = np.asarray(self.force_axes, dtype=bool)
        if not np.all(np.isfinite(self.force[self.force_axes])):
            raise ControlError("desired force must be finite on force axes")
        # motion axes must carry no force setpoint
        self.force = np.where(self.force_axes, self.force, 0.0)


@dataclass
class Measurement:
    """What the controller is allowed to see: positions and velocities only."""

    q: np.ndarray
    qd: np.ndarray
    base: rb.BaseState
    ee_force: rb.Wrench  # end-effector frame


def impedance_error(pose, velocity, target, f_e):
    """(e, edot, e_f): motion error, its rate, and the masked force error.

    Orientation error is the rotation log of R R_d^T expressed in the common
    frame, consistent with e = x - x_d for small angles.  e_f is zeroed on
    motion axes so force feedback never perturbs them.
    """
    e = np.concatenate(
        [pose.position - target.position, rb.orientation_error(pose.rotation, target.rotation)]
    )
    edot = np.asarray(velocity, dtype=float) - target.velocity
    e_f = (np.asarray(f_e, dtype=float) - target.force) * target.force_axes
    return e, edot, e_f


@dataclass
class StepResult:
    tau: np.ndarray
    f_command: np.ndarray
    f_feedforward: np.ndarray
    f_feedback: np.ndarray
    f_force_term: np.ndarray
    e: np.ndarray
    edot: np.ndarray
    e_f: np.ndarray
    task: rb.TaskState
    mu_hat: np.ndarray
    saturated: bool
    failed: bool


class Controller:
    """Single-owner control loop instance for one scenario run."""

    def __init__(
        self,
        kind,
        model,
        impedance=None,
        omega_c=OMEGA_C_DEFAULT,
        feedforward_tf=None,
        torque_limit=None,
        pinv_damping=0.01,
        period=0.008,
    ):
        if kind not in KINDS:
            raise ControlError(f"unknown controller kind {kind!r}")
        self.kind = kind
        self.model = model
        self.impedance = impedance if impedance is not None else ImpedanceParams()
        self.period = float(period)
        self.pinv_damping = float(pinv_damping)
        limit = TORQUE_LIMIT_DEFAULT if torque_limit is None else np.asarray(torque_limit, dtype=float)
        if limit.shape != (model.n,):
            raise ControlError("torque limit must have one entry per joint")
        if np.any(limit <= 0.0):
            raise ControlError("torque limits must be > 0")
        self.torque_limit = limit
        self.uses_estimator = kind in ("C1", "C2", "C3")
        self.uses_coupling_feedforward = kind == "C1"
        self.velocity_coupling_aware = kind in ("C1", "C2", "C4")
        self.ops = (
            F.UdeOperators(np.asarray(omega_c, dtype=float), self.period)
            if self.uses_estimator
            else None
        )
        if self.uses_coupling_feedforward:
            tf = feedforward_tf if feedforward_tf is not None else F.feedforward_lowpass()
            self.ff_bank = F.uniform_bank(tf, self.period)
            self.ff_bank_s = F.uniform_bank(tf.times_s(), self.period)
        else:
            self.ff_bank = None
            self.ff_bank_s = None

    def reset(self):
        if self.ops is not None:
            self.ops.reset()
        if self.ff_bank is not None:
            self.ff_bank.reset()
            self.ff_bank_s.reset()

    # -- pieces of the control law -------------------------------------

    def _believed_state(self, meas):
        """Task-space picture under this controller's kinematic assumptions.

        The fixed-base variant composes the vehicle pose (it is localized)
        but carries no vehicle twist in its model, so its velocity picture is
        the arm-only chain rule.
        """
        if self.velocity_coupling_aware:
            base = meas.base
        else:
            base = rb.BaseState(
                position=meas.base.position, rotation=meas.base.rotation
            )
        joints = rb.JointState(meas.q, meas.qd)
        ts = rb.task_state(self.model, joints, base, damping=self.pinv_damping)
        # one physical wrench, re-expressed through the believed EE rotation
        f_e = meas.ee_force.require_frame("end-effector")
        f_e_world = np.concatenate(
            [ts.pose.rotation @ f_e.force, ts.pose.rotation @ f_e.torque]
        )
        return base, ts, f_e_world

    def feedforward(self, ts, base, target, f_e_world):
        """Model-based feedforward: linearization plus coupling prediction.

        The coupling path filters M0(etadot + d) through the derivative form
        of the feedforward filter and C0(etadot + d) through the filter
        itself, so only vehicle velocity is consumed.
        """
        f_c = ts.C0 @ target.velocity + ts.G0 - f_e_world
        if self.uses_coupling_feedforward:
            sig = base.velocity + ts.d
            f_c = f_c - self.ff_bank_s.step(ts.M0 @ sig) - self.ff_bank.step(ts.C0 @ sig)
        return f_c

    def feedback(self, ts, target, e, edot, e_f):
        """Impedance residual, passed through the estimator operators.

        For the estimator variants the residual runs through 1/(1-G) (unity
        feedthrough + integrator) while the absolute velocity term runs
        through s G/(1-G) (a pure gain), which together realize the filtered
        acceleration estimate without measuring acceleration.
        """
        imp = self.impedance
        k_fd_eff = imp.k_fd * target.force_axes
        force_term = k_fd_eff * e_f
        residual = ts.M0 @ target.acceleration - imp.c_d * edot - imp.k_d * e + force_term
        if not self.uses_estimator:
            return residual, force_term, np.zeros(6)
        f_u = self.ops.apply_integral(residual) - self.ops.apply_proportional(
            ts.M0 @ ts.velocity
        )
        mu_hat = residual - f_u  # the estimator's lumped-uncertainty estimate
        return f_u, force_term, mu_hat

    def step(self, meas, target):
        """One control period: measurements + targets -> clamped joint torque."""
        base, ts, f_e_world = self._believed_state(meas)
        e, edot, e_f = impedance_error(ts.pose, ts.velocity, target, f_e_world)
        f_c = self.feedforward(ts, base, target, f_e_world)
        f_u, force_term, mu_hat = self.feedback(ts, target, e, edot, e_f)
        f = f_c + f_u
        tau_raw = ts.J_hat.T @ f
        if not np.all(np.isfinite(tau_raw)):
            return StepResult(
                np.zeros(self.model.n),
                f,
                f_c,
                f_u,
                force_term,
                e,
                edot,
                e_f,
                ts,
                mu_hat,
                False,
                True,
            )
        tau = np.clip(tau_raw, -self.torque_limit, self.torque_limit)
        saturated = bool(np.any(np.abs(tau_raw) > self.torque_limit))
        if saturated and self.ops is not None:
            # anti-windup: freeze the estimator integrator while clamped
            self.ops.rollback()
        return StepResult(
            tau, f, f_c, f_u, force_term, e, edot, e_f, ts, mu_hat, saturated, False
        )


class JointHoldController:
    """Gravity-compensated joint-space regulation (coupling-validation runs)."""

    def __init__(self, model, q_ref, kp=100.0, kd=20.0, torque_limit=None):
        self.model = model
        self.q_ref = np.asarray(q_ref, dtype=float)
        if self.q_ref.shape != (model.n,):
            raise ControlError("q_ref must have one entry per joint")
        self.kp = np.full(model.n, kp, dtype=float) if np.isscalar(kp) else np.asarray(kp)
        self.kd = np.full(model.n, kd, dtype=float) if np.isscalar(kd) else np.asarray(kd)
        self.torque_limit = (
            None if torque_limit is None else np.asarray(torque_limit, dtype=float)
        )

    def reset(self):
        pass

    def step(self, meas, target=None):
        joints = rb.JointState(meas.q, meas.qd)
        _, _, G_q = rb.joint_space_matrices(self.model, joints)
        tau = G_q - self.kp * (meas.q - self.q_ref) - self.kd * meas.qd
        saturated = False
        if self.torque_limit is not None:
            clipped = np.clip(tau, -self.torque_limit, self.torque_limit)
            saturated = bool(np.any(clipped != tau))
            tau = clipped
        return tau, saturated


# ---------------------------------------------------------------------------
# stability diagnostics
# ---------------------------------------------------------------------------


@dataclass
class StabilityDiagnostics:
    V: float
    budget: float
    margin: float
    delta_u: np.ndarray
    c_d_margin: np.ndarray
    positive: bool
    nonconformant: bool


class StabilityMonitor:
    """Tracks the storage function against its dissipation budget.

    V = 1/2 edot^T M0 edot + 1/2 e^T K_d e must stay below
    V(0) + integral(edot^T K_fd e_f); the margin is budget - V.  A margin
    below -1e-3 J for more than five consecutive control steps marks the run
    NONCONFORMANT.  delta_u is a running bound on the lumped uncertainty seen
    by the estimator, reported against the damping gains as a diagnostic.
    """

    MARGIN_FLOOR = -1e-3
    VIOLATION_LIMIT = 5

    def __init__(self, impedance, period):
        self.impedance = impedance
        self.period = float(period)
        self.budget = None
        self._prev_power = 0.0
        self._violations = 0
        self.nonconformant = False
        self.delta_u = np.zeros(6)

    def update(self, result):
        imp = self.impedance
        e, edot = result.e, result.edot
        V = 0.5 * edot @ (result.task.M0 @ edot) + 0.5 * e @ (imp.k_d * e)
        power = edot @ result.f_force_term
        if self.budget is None:
            self.budget = V
        else:
            self.budget += 0.5 * self.period * (power + self._prev_power)
        self._prev_power = power
        margin = self.budget - V
        if margin < self.MARGIN_FLOOR:
            self._violations += 1
            if self._violations > self.VIOLATION_LIMIT:
                self.nonconformant = True
        else:
            self._violations = 0
        denom = edot @ edot + 1e-9
        bound = abs(edot @ result.mu_hat) / denom
        self.delta_u = np.maximum(self.delta_u, bound)
        c_d_margin = imp.c_d - self.delta_u
        return StabilityDiagnostics(
            V=float(V),
            budget=float(self.budget),
            margin=float(margin),
            delta_u=self.delta_u.copy(),
            c_d_margin=c_d_margin,
            positive=bool(np.all(c_d_margin > 0.0)),
            nonconformant=self.nonconformant,
        )
