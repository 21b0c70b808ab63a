"""Fixed-step closed-loop simulation: plant + controller + world.

The plant integrates the manipulator's joint-space dynamics with
semi-implicit Euler at the physics rate; torque commands update at the
control rate and are held between ticks (zero-order hold).  Vehicle motion is
prescribed kinematically, so it enters the plant through the chain
composition and the world-frame contact only.

A run produces a :class:`RunRecord` with control-rate time series for every
signal the benchmark and diagnostics need, a CSV/JSON serialization, and a
deterministic byte-for-byte identity for identical (config, seed).
"""

import io
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import robot as rb
from .config import ConfigError, ScenarioConfig
from .control import ControlTarget, JointHoldController, Measurement, StabilityMonitor
from .geometry import euler_zyx_from_rotation
from .world import Sensors, contact_wrench

RECORD_SCHEMA_VERSION = 1

STATUS_OK = "OK"
STATUS_FAILED = "FAILED"
STATUS_NONCONFORMANT = "NONCONFORMANT"


@dataclass(frozen=True)
class SimClock:
    """Dual-rate clock; the control period must tile the physics period."""

    physics_dt: float = 0.001
    control_dt: float = 0.008
    duration: float = 30.0

    def __post_init__(self):
        if self.physics_dt <= 0.0 or self.control_dt <= 0.0:
            raise ValueError("clock periods must be > 0")
        ratio = self.control_dt / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control_dt must be an integer multiple of physics_dt")

    @property
    def substeps(self):
        return int(round(self.control_dt / self.physics_dt))

    @property
    def ticks(self):
        return int(round(self.duration / self.control_dt))


# ---------------------------------------------------------------------------
# target scheduling
# ---------------------------------------------------------------------------


def _smooth01(t, t0, t1):
    """C1 blend 0 -> 1 over [t0, t1]; returns (value, rate, accel)."""
    if t1 <= t0:
        on = 1.0 if t >= t1 else 0.0
        return on, 0.0, 0.0
    u = (t - t0) / (t1 - t0)
    if u <= 0.0:
        return 0.0, 0.0, 0.0
    if u >= 1.0:
        return 1.0, 0.0, 0.0
    T = t1 - t0
    return 3 * u**2 - 2 * u**3, (6 * u - 6 * u**2) / T, (6 - 12 * u) / T**2


class TargetSchedule:
    """World-frame desired trajectory generator for one scenario.

    The forward-following component tracks the planned vehicle cruise; the
    wall approach, force schedule, and vertical sweep are overlaid on top of
    the start pose.
    """

    def __init__(self, task, wall, start_pose, duration):
        self.task = task
        self.start = start_pose
        self.duration = duration
        self.wall_y = wall.position if wall is not None else None
        self.is_wall = task.kind == "wall" and wall is not None
        end = duration if task.release is None else task.release
        self.force_window = (task.contact_start, end) if self.is_wall else None

    def force_level(self, t):
        """Scheduled pressing force magnitude [N] with linear ramps."""
        level, rate = 0.0, 0.0
        if not self.is_wall:
            return 0.0, 0.0
        lo, hi = self.force_window
        if not (lo <= t < hi):
            return 0.0, 0.0
        prev = 0.0
        for t_i, f_i in self.task.force_schedule:
            if t < t_i:
                break
            ramp = max(self.task.force_ramp, 1e-9)
            if t < t_i + ramp:
                u = (t - t_i) / ramp
                level = prev + (f_i - prev) * u
                rate = (f_i - prev) / ramp
            else:
                level = f_i
                rate = 0.0
            prev = f_i
        return level, rate

    def in_force_mode(self, t):
        if self.force_window is None:
            return False
        lo, hi = self.force_window
        return lo <= t < hi

    def world(self, t):
        task = self.task
        pos = self.start.position.copy()
        vel = np.zeros(6)
        acc = np.zeros(6)
        if task.follow_forward_speed:
            pos[0] += task.follow_forward_speed * t
            vel[0] = task.follow_forward_speed
        if self.is_wall:
            # approach blend from the start offset to the wall face
            blend, rate, a2 = _smooth01(t, task.approach_start, task.approach_end)
            gap = self.wall_y - self.start.position[1]
            pos[1] = self.start.position[1] + gap * blend
            vel[1] = gap * rate
            acc[1] = gap * a2
            zs = task.z_sine
            amp, om, t0 = zs.get("amplitude", 0.0), zs.get("omega", 0.0), zs.get("start", 0.0)
            if amp and t >= t0:
                arg = om * (t - t0)
                pos[2] += amp * np.sin(arg)
                vel[2] += amp * om * np.cos(arg)
                acc[2] += -amp * om * om * np.sin(arg)
        force = np.zeros(6)
        force_axes = np.zeros(6, dtype=bool)
        if self.in_force_mode(t):
            force_axes[1] = True
            level, _ = self.force_level(t)
            # pressing +y into the wall; the wall reacts along -y
            force[1] = -level
        return ControlTarget(
            position=pos,
            rotation=self.start.rotation.copy(),
            velocity=vel,
            acceleration=acc,
            force=force,
            force_axes=force_axes,
        )


# ---------------------------------------------------------------------------
# run record
# ---------------------------------------------------------------------------


class RunRecord:
    """Control-rate time series plus run metadata.

    ``data`` maps column-group names to arrays of shape (ticks,) or
    (ticks, k).  The CSV layout is fixed (given the joint count) and
    versioned via the summary document.
    """

    def __init__(self, config, n_joints):
        self.config = config
        self.n_joints = n_joints
        self.data = {}
        self.status = STATUS_OK
        self.first_failure_tick = None
        self.nonconformant = False
        self.seed = config.seed

    _GROUPS = [
        ("t", 1),
        ("q", None),
        ("qd", None),
        ("tau", None),
        ("x", 6),
        ("xd", 6),
        ("xdot", 6),
        ("eta", 6),
        ("etadot", 6),
        ("fe", 6),
        ("fed", 6),
        ("f", 6),
        ("fc", 6),
        ("fu", 6),
        ("fkfd", 6),
        ("e", 6),
        ("mu_c", 6),
        ("mu_meas", 6),
        ("V", 1),
        ("budget", 1),
        ("margin", 1),
        ("saturated", 1),
        ("near_singular", 1),
        ("force_mode_y", 1),
    ]

    def allocate(self, ticks):
        for name, width in self._GROUPS:
            w = self.n_joints if width is None else width
            self.data[name] = np.zeros(ticks) if w == 1 else np.zeros((ticks, w))

    def truncate(self, ticks):
        for name in self.data:
            self.data[name] = self.data[name][:ticks]

    @property
    def ticks(self):
        return self.data["t"].shape[0]

    def columns(self):
        cols = []
        for name, width in self._GROUPS:
            w = self.n_joints if width is None else width
            if w == 1:
                cols.append(name)
            else:
                cols.extend(f"{name}{i + 1}" for i in range(w))
        return cols

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(",".join(self.columns()) + "\n")
        mats = []
        for name, width in self._GROUPS:
            arr = self.data[name]
            mats.append(arr[:, None] if arr.ndim == 1 else arr)
        full = np.hstack(mats)
        for row in full:
            buf.write(",".join(repr(v) for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self, metrics=None):
        return {
            "record_schema_version": RECORD_SCHEMA_VERSION,
            "status": self.status,
            "nonconformant": self.nonconformant,
            "first_failure_tick": self.first_failure_tick,
            "seed": self.seed,
            "ticks": self.ticks,
            "metrics": metrics if metrics is not None else {},
            "config": self.config.to_dict(),
        }

    def save_summary(self, path, metrics=None):
        with open(path, "w") as fh:
            json.dump(self.summary(metrics), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# plant-side helpers
# ---------------------------------------------------------------------------


def integrate_step(model, q, qd, tau, dt, base_state=None, base_accel=None, wall=None, f_dist=None):
    """Single semi-implicit Euler step of the manipulator plant.

    Convenience wrapper over the compiled multi-substep kernel for tests and
    scripts; ``run_scenario`` drives the kernel in blocks instead.
    """
    base_state = base_state if base_state is not None else rb.BaseState.identity()
    q = np.asarray(q, dtype=float).copy()
    qd = np.asarray(qd, dtype=float).copy()
    base_R = np.repeat(base_state.rotation[None], 2, axis=0)
    base_p = np.repeat(base_state.position[None], 2, axis=0)
    base_v = np.repeat(base_state.linear_velocity[None], 2, axis=0)
    base_w = np.repeat(base_state.angular_velocity[None], 2, axis=0)
    fd = np.zeros((1, 6)) if f_dist is None else np.asarray(f_dist, dtype=float).reshape(1, 6)
    wall_on = wall is not None
    q, qd, ok = K.plant_substeps(
        q,
        qd,
        np.asarray(tau, dtype=float),
        1,
        dt,
        base_R,
        base_p,
        base_v,
        base_w,
        *model.kernel_args,
        model.ee_offset,
        model._coms,
        model._masses,
        model._inertias,
        model.rotor_inertia,
        model.viscous_friction,
        model.coulomb_friction,
        model.gravity,
        wall_on,
        wall.position if wall_on else 0.0,
        wall.stiffness if wall_on else 0.0,
        wall.damping if wall_on else 0.0,
        wall.tangential_friction if wall_on else 0.0,
        fd,
    )
    return q, qd, ok


def _disturbance_series(dist, times):
    """Exogenous end-effector wrench channel sampled at the physics rate."""
    N = times.shape[0]
    out = np.zeros((N, 6))
    kind = dist.get("kind", "none")
    if kind == "none":
        return out
    axis = int(dist.get("axis", 1))
    mag = float(dist.get("magnitude", 0.0))
    start = float(dist.get("start", 0.0))
    if kind == "pulse":
        dur = float(dist.get("duration", 0.5))
        mask = (times >= start) & (times < start + dur)
        out[mask, axis] = mag
    elif kind == "sinusoid":
        om = float(dist.get("omega", 1.0))
        mask = times >= start
        out[mask, axis] = mag * np.sin(om * (times[mask] - start))
    else:
        raise ConfigError("disturbance.kind", f"unknown kind {kind!r}")
    return out


def _perturbed_start(model, q0, magnitude, rng):
    """Move the start pose by a random offset of at most `magnitude` meters."""
    if magnitude <= 0.0:
        return q0
    delta = rng.uniform(-magnitude, magnitude, 3)
    J = rb.jacobian(model, rb.JointState(q0, np.zeros_like(q0)))
    Jp = rb.damped_pseudoinverse(J, 0.05)
    return q0 + Jp @ np.concatenate([delta, np.zeros(3)])


_TRUTH_DAMPING = 1e-9


def run_scenario(config):
    """Execute one scenario and return its RunRecord.

    Deterministic: identical (config, seed) produce byte-identical records.
    """
    if not isinstance(config, ScenarioConfig):
        raise ConfigError("<root>", "expected a ScenarioConfig")
    model = config.robot_model()
    clock = SimClock(config.physics_dt, config.control_dt, config.duration)
    wall = config.wall_model()
    trajectory = config.base_trajectory()
    rng = np.random.default_rng(config.seed)

    task = config.task
    if task.start_q is not None:
        q0 = np.asarray(task.start_q, dtype=float)
    elif task.kind == "joint-hold" and task.joint_hold is not None:
        q0 = _fit_joint_vector(task.joint_hold.get("q_ref", [0.0]), model.n)
    else:
        q0 = np.zeros(model.n)
    if q0.shape != (model.n,):
        raise ConfigError("task.start_q", "wrong joint count")
    q0 = _perturbed_start(model, q0, config.initial_perturbation, rng)

    sensors = Sensors(config.sensor_suite(), rng)
    start_pose = rb.forward_kinematics(model, rb.JointState(q0, np.zeros(model.n)))
    schedule = TargetSchedule(task, wall, start_pose, config.duration)

    if task.kind == "joint-hold":
        jh = task.joint_hold or {}
        controller = JointHoldController(
            model,
            _fit_joint_vector(jh.get("q_ref", list(q0)), model.n),
            kp=jh.get("kp", 400.0),
            kd=jh.get("kd", 40.0),
        )
        monitor = None
    else:
        controller = config.build_controller(model)
        monitor = StabilityMonitor(controller.impedance, config.control_dt)

    ticks = clock.ticks
    n_sub = clock.substeps
    n_phys = ticks * n_sub + 1
    phys_times = np.arange(n_phys) * config.physics_dt
    base_arrays = trajectory.sample(phys_times)
    f_dist = _disturbance_series(config.disturbance, phys_times[:-1])

    record = RunRecord(config, model.n)
    record.allocate(ticks)
    data = record.data

    q = q0.copy()
    qd = np.zeros(model.n)
    interface_on = config.sensor_suite().interface_enabled

    for k in range(ticks):
        t = k * config.control_dt
        idx = k * n_sub
        base = rb.BaseState(
            position=base_arrays["p"][idx],
            rotation=base_arrays["R"][idx],
            linear_velocity=base_arrays["v"][idx],
            angular_velocity=base_arrays["w"][idx],
        )
        joints = rb.JointState(q, qd)

        # plant truth in the inertial frame
        truth = rb.task_state(model, joints, base, damping=_TRUTH_DAMPING)
        v_ee = truth.velocity[:3]
        if wall is not None:
            fe_true = contact_wrench(wall, truth.pose.position, v_ee)
        else:
            fe_true = rb.Wrench.zero()
        fe_vec = fe_true.vector

        # measurements (one physical F/T sensor, expressed in the EE frame)
        R_ee = truth.pose.rotation
        fe_ee_true = np.concatenate([R_ee.T @ fe_vec[:3], R_ee.T @ fe_vec[3:]])
        fe_ee_meas = sensors.measure_ee_force(fe_ee_true, t)
        q_meas, qd_meas = sensors.measure_joints(q, qd)
        meas = Measurement(
            q=q_meas,
            qd=qd_meas,
            base=base,
            ee_force=rb.Wrench.from_vector(fe_ee_meas, "end-effector"),
        )

        target_world = schedule.world(t)
        # vehicle coupling truth
        accel6 = np.concatenate([base_arrays["a_lin"][idx], base_arrays["a_ang"][idx]])
        P = truth.pose.position - base.position
        d = truth.d
        P_dot = truth.velocity[:3] - base.linear_velocity
        d_dot = np.concatenate(
            [
                np.cross(base_arrays["a_ang"][idx], P)
                + np.cross(base.angular_velocity, P_dot),
                np.zeros(3),
            ]
        )
        mu_c = rb.coupling_wrench(
            truth.M0, truth.C0, base.velocity, accel6, d, d_dot
        ).vector

        if task.kind == "joint-hold":
            tau, saturated = controller.step(meas)
            failed = not np.all(np.isfinite(tau))
            f_cmd = np.zeros(6)
            fc_log = np.zeros(6)
            fu_log = np.zeros(6)
            fkfd = np.zeros(6)
            e_log = np.zeros(6)
            V = budget = margin = 0.0
            near_sing = truth.near_singular
        else:
            result = controller.step(meas, target_world)
            tau = result.tau
            failed = result.failed
            saturated = result.saturated
            f_cmd = result.f_command
            fc_log = result.f_feedforward
            fu_log = result.f_feedback
            fkfd = result.f_force_term
            e_log = result.e
            diag = monitor.update(result)
            V, budget, margin = diag.V, diag.budget, diag.margin
            near_sing = result.task.near_singular

        # log the tick
        data["t"][k] = t
        data["q"][k] = q
        data["qd"][k] = qd
        data["tau"][k] = tau
        data["x"][k] = np.concatenate(
            [truth.pose.position, euler_zyx_from_rotation(truth.pose.rotation)]
        )
        data["xd"][k] = np.concatenate(
            [target_world.position, euler_zyx_from_rotation(target_world.rotation)]
        )
        data["xdot"][k] = truth.velocity
        data["eta"][k] = base.pose_vector
        data["etadot"][k] = base.velocity
        data["fe"][k] = fe_vec
        data["fed"][k] = target_world.force
        data["f"][k] = f_cmd
        data["fc"][k] = fc_log
        data["fu"][k] = fu_log
        data["fkfd"][k] = fkfd
        data["e"][k] = e_log
        data["mu_c"][k] = mu_c
        data["V"][k] = V
        data["budget"][k] = budget
        data["margin"][k] = margin
        data["saturated"][k] = float(saturated)
        data["near_singular"][k] = float(near_sing)
        data["force_mode_y"][k] = float(schedule.in_force_mode(t))

        if failed:
            record.status = STATUS_FAILED
            record.first_failure_tick = k
            record.truncate(k + 1)
            break

        # advance the plant to the next tick
        sl = slice(idx, idx + n_sub + 1)
        q, qd, ok = K.plant_substeps(
            q.copy(),
            qd.copy(),
            tau,
            n_sub,
            config.physics_dt,
            base_arrays["R"][sl],
            base_arrays["p"][sl],
            base_arrays["v"][sl],
            base_arrays["w"][sl],
            *model.kernel_args,
            model.ee_offset,
            model._coms,
            model._masses,
            model._inertias,
            model.rotor_inertia,
            model.viscous_friction,
            model.coulomb_friction,
            model.gravity,
            wall is not None,
            wall.position if wall is not None else 0.0,
            wall.stiffness if wall is not None else 0.0,
            wall.damping if wall is not None else 0.0,
            wall.tangential_friction if wall is not None else 0.0,
            f_dist[idx : idx + n_sub],
        )
        if not ok:
            record.status = STATUS_FAILED
            record.first_failure_tick = k
            record.truncate(k + 1)
            break

    _fill_interface_series(record, config, sensors, interface_on)
    if monitor is not None and monitor.nonconformant and record.status == STATUS_OK:
        record.status = STATUS_NONCONFORMANT
        record.nonconformant = True
    return record


def _fit_joint_vector(values, n):
    """Adapt a reference joint vector to the model's joint count."""
    arr = np.asarray(values, dtype=float)
    if arr.shape[0] >= n:
        return arr[:n]
    return np.concatenate([arr, np.zeros(n - arr.shape[0])])


def _fill_interface_series(record, config, sensors, enabled):
    """Interface-sensor wrench: task-space dynamics residual of the plant.

    Reconstructs the coupling + unmodeled wrench as
    M0 xddot + C0 xdot + G0 - f_applied - f_e with the acceleration obtained
    by central differences of the logged task velocity, i.e. independently of
    the base-acceleration formula used for the prediction channel.
    """
    ticks = record.ticks
    if ticks < 3 or not enabled:
        return
    data = record.data
    dt = config.control_dt
    model = config.robot_model()
    xdot = data["xdot"]
    xddot = np.zeros_like(xdot)
    xddot[1:-1] = (xdot[2:] - xdot[:-2]) / (2.0 * dt)
    xddot[0] = xddot[1]
    xddot[-1] = xddot[-2]
    for k in range(ticks):
        joints = rb.JointState(data["q"][k], data["qd"][k])
        base = _base_from_row(data, k)
        truth = rb.task_state(model, joints, base, damping=_TRUTH_DAMPING)
        f_applied = rb.damped_pseudoinverse(truth.J_hat, _TRUTH_DAMPING).T @ data["tau"][k]
        resid = (
            truth.M0 @ xddot[k]
            + truth.C0 @ xdot[k]
            + truth.G0
            - f_applied
            - data["fe"][k]
        )
        data["mu_meas"][k] = sensors.measure_interface(resid, data["t"][k])


def _base_from_row(data, k):
    from .geometry import rotation_from_euler_zyx

    return rb.BaseState(
        position=data["eta"][k, :3],
        rotation=rotation_from_euler_zyx(data["eta"][k, 3:]),
        linear_velocity=data["etadot"][k, :3],
        angular_velocity=data["etadot"][k, 3:],
    )


def coupling_validation_run(config):
    """Run the joint-regulation protocol and pair prediction vs measurement.

    Returns (record, result) where result carries the aligned series and the
    per-axis RMSE/MAE discrepancy summary.
    """
    if config.task.kind != "joint-hold":
        raise ConfigError("task.kind", "coupling validation needs a joint-hold task")
    if not config.sensor_suite().interface_enabled:
        raise ConfigError("sensors.interface_enabled", "interface sensor must be on")
    record = run_scenario(config)
    window = config.metrics.get("window", [None, None]) or [None, None]
    t = record.data["t"]
    lo = window[0] if window and window[0] is not None else t[0]
    hi = window[1] if window and len(window) > 1 and window[1] is not None else t[-1] + 1.0
    mask = (t >= lo) & (t <= hi)
    pred = record.data["mu_c"][mask]
    meas = record.data["mu_meas"][mask]
    err = meas - pred
    rmse = np.sqrt(np.mean(err**2, axis=0))
    mae = np.mean(np.abs(err), axis=0)
    peak = np.max(np.abs(pred), axis=0)
    return record, {
        "time": t[mask],
        "predicted": pred,
        "measured": meas,
        "rmse": rmse,
        "mae": mae,
        "peak_predicted": peak,
        "rmse_over_peak": rmse / np.where(peak > 1e-12, peak, np.inf),
    }
