"""Declarative scenario configuration: JSON schema, validation, presets.

A scenario document fully determines a run: robot, controller and gains,
filters, base trajectory, wall, task schedule, sensors, rates, duration, and
the metrics window.  ``ScenarioConfig.from_dict`` validates field-by-field
and raises :class:`ConfigError` carrying the dotted path of the offending
field so CLI users get actionable diagnostics.

Schema (version 1), all keys optional unless noted:

    {
      "schema_version": 1,
      "name": str,
      "seed": int,
      "duration": float (s),
      "physics_dt": float (s, default 0.001),
      "control_dt": float (s, default 0.008),
      "robot": {"preset": "arm6"} | {<robot model document>},
      "robot_friction": {"viscous": [n], "coulomb": [n]},
      "controller": {
        "kind": "C1" | "C2" | "C3" | "C4",
        "impedance": {"k_d": [6], "c_d": [6], "k_fd": [6]},
        "omega_c": [6],
        "feedforward_filter": {"type": "lowpass", "omega_n": 20.0, "zeta": 0.7071}
                              | {"type": "bandpass-paper"}
                              | {"type": "custom", "num": [...], "den": [...]},
        "torque_limit": [n],
        "pinv_damping": float
      },
      "base": {"kind": "hold" | "constant-velocity" | "sinusoid" |
               "sinusoidal-lateral" | "composite", ...},
      "wall": {"enabled": bool, "position": float, "stiffness": float,
               "damping": float, "tangential_friction": float},
      "task": {
        "kind": "wall" | "hold" | "joint-hold",
        "start_q": [n],
        "approach_start": float, "approach_end": float,
        "contact_start": float, "release": float | null,
        "force_schedule": [[t, newtons], ...], "force_ramp": float,
        "z_sine": {"amplitude": float, "omega": float, "start": float},
        "follow_forward_speed": float,
        "joint_hold": {"q_ref": [n], "kp": float, "kd": float}
      },
      "sensors": {"ft_noise_sigma": float, "ft_bias": float, "ft_rate": float,
                  "encoder_quantization": float,
                  "interface_noise_sigma": float, "interface_enabled": bool},
      "disturbance": {"kind": "none" | "pulse" | "sinusoid", "axis": int,
                      "magnitude": float, "start": float, "duration": float,
                      "omega": float},
      "initial_perturbation": float (m),
      "metrics": {"channel": str, "window": [t0, t1]}
    }
"""

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from . import control as ct
from . import world as wd
from .robot import RobotModel, default_arm

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration problem; carries the dotted field path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


def _get(data, path, key, expected, default=None, required=False):
    here = f"{path}.{key}" if path else key
    if key not in data:
        if required:
            raise ConfigError(here, "missing required field")
        return default
    val = data[key]
    if expected is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(here, f"expected a number, got {type(val).__name__}")
        return float(val)
    if expected is int:
        if not isinstance(val, int) or isinstance(val, bool):
            raise ConfigError(here, f"expected an integer, got {type(val).__name__}")
        return val
    if expected is bool:
        if not isinstance(val, bool):
            raise ConfigError(here, f"expected a boolean, got {type(val).__name__}")
        return val
    if expected is str:
        if not isinstance(val, str):
            raise ConfigError(here, f"expected a string, got {type(val).__name__}")
        return val
    if expected is list:
        if not isinstance(val, (list, tuple)):
            raise ConfigError(here, f"expected a list, got {type(val).__name__}")
        return list(val)
    if expected is dict:
        if not isinstance(val, dict):
            raise ConfigError(here, f"expected an object, got {type(val).__name__}")
        return val
    raise AssertionError(expected)


@dataclass
class ControllerConfig:
    kind: str = "C1"
    impedance: ct.ImpedanceParams = field(default_factory=ct.ImpedanceParams)
    omega_c: np.ndarray = field(default_factory=lambda: ct.OMEGA_C_DEFAULT.copy())
    feedforward_filter: dict = field(default_factory=lambda: {"type": "lowpass"})
    torque_limit: np.ndarray = None
    pinv_damping: float = 0.01

    def feedforward_tf(self):
        import mobman.filters as F

        ff = self.feedforward_filter
        kind = ff.get("type", "lowpass")
        if kind == "lowpass":
            return F.feedforward_lowpass(
                ff.get("omega_n", 20.0), ff.get("zeta", 0.7071)
            )
        if kind == "bandpass-paper":
            return F.feedforward_bandpass()
        if kind == "custom":
            return F.TransferFunction(tuple(ff["num"]), tuple(ff["den"]))
        raise ConfigError("controller.feedforward_filter.type", f"unknown type {kind!r}")

    @classmethod
    def from_dict(cls, data, path="controller"):
        kind = _get(data, path, "kind", str, "C1")
        if kind not in ct.KINDS:
            raise ConfigError(
                f"{path}.kind", f"unknown controller {kind!r}; expected one of {ct.KINDS}"
            )
        imp_d = _get(data, path, "impedance", dict, {})
        try:
            imp = ct.ImpedanceParams(
                k_d=np.asarray(imp_d.get("k_d", ct.K_D_DEFAULT), dtype=float),
                c_d=np.asarray(imp_d.get("c_d", ct.C_D_DEFAULT), dtype=float),
                k_fd=np.asarray(imp_d.get("k_fd", ct.K_FD_DEFAULT), dtype=float),
            )
        except (ct.ControlError, ValueError) as exc:
            raise ConfigError(f"{path}.impedance", str(exc)) from exc
        omega_c = np.asarray(
            _get(data, path, "omega_c", list, list(ct.OMEGA_C_DEFAULT)), dtype=float
        )
        if omega_c.shape != (6,) or np.any(omega_c <= 0.0):
            raise ConfigError(f"{path}.omega_c", "need 6 positive cutoffs")
        tl = _get(data, path, "torque_limit", list, None)
        return cls(
            kind=kind,
            impedance=imp,
            omega_c=omega_c,
            feedforward_filter=_get(
                data, path, "feedforward_filter", dict, {"type": "lowpass"}
            ),
            torque_limit=None if tl is None else np.asarray(tl, dtype=float),
            pinv_damping=_get(data, path, "pinv_damping", float, 0.01),
        )

    def to_dict(self):
        out = {
            "kind": self.kind,
            "impedance": {
                "k_d": self.impedance.k_d.tolist(),
                "c_d": self.impedance.c_d.tolist(),
                "k_fd": self.impedance.k_fd.tolist(),
            },
            "omega_c": self.omega_c.tolist(),
            "feedforward_filter": dict(self.feedforward_filter),
            "pinv_damping": self.pinv_damping,
        }
        if self.torque_limit is not None:
            out["torque_limit"] = self.torque_limit.tolist()
        return out


@dataclass
class TaskConfig:
    kind: str = "wall"
    start_q: np.ndarray = None
    approach_start: float = 1.0
    approach_end: float = 4.0
    contact_start: float = 5.0
    release: float = None
    force_schedule: tuple = ((5.0, 5.0), (30.0, 10.0))
    force_ramp: float = 1.0
    z_sine: dict = field(
        default_factory=lambda: {"amplitude": 0.1, "omega": 0.125 * np.pi, "start": 20.0}
    )
    follow_forward_speed: float = 0.0
    joint_hold: dict = None

    @classmethod
    def from_dict(cls, data, path="task"):
        kind = _get(data, path, "kind", str, "wall")
        if kind not in ("wall", "hold", "joint-hold"):
            raise ConfigError(f"{path}.kind", f"unknown task kind {kind!r}")
        sched = _get(data, path, "force_schedule", list, [[5.0, 5.0], [30.0, 10.0]])
        for i, item in enumerate(sched):
            if len(item) != 2:
                raise ConfigError(f"{path}.force_schedule[{i}]", "expected [time, force]")
        sq = _get(data, path, "start_q", list, None)
        release = data.get("release", None)
        if release is not None and not isinstance(release, (int, float)):
            raise ConfigError(f"{path}.release", "expected a number or null")
        return cls(
            kind=kind,
            start_q=None if sq is None else np.asarray(sq, dtype=float),
            approach_start=_get(data, path, "approach_start", float, 1.0),
            approach_end=_get(data, path, "approach_end", float, 4.0),
            contact_start=_get(data, path, "contact_start", float, 5.0),
            release=None if release is None else float(release),
            force_schedule=tuple((float(t), float(f)) for t, f in sched),
            force_ramp=_get(data, path, "force_ramp", float, 1.0),
            z_sine=_get(
                data,
                path,
                "z_sine",
                dict,
                {"amplitude": 0.1, "omega": 0.125 * np.pi, "start": 20.0},
            ),
            follow_forward_speed=_get(data, path, "follow_forward_speed", float, 0.0),
            joint_hold=_get(data, path, "joint_hold", dict, None),
        )

    def to_dict(self):
        out = {
            "kind": self.kind,
            "approach_start": self.approach_start,
            "approach_end": self.approach_end,
            "contact_start": self.contact_start,
            "release": self.release,
            "force_schedule": [list(x) for x in self.force_schedule],
            "force_ramp": self.force_ramp,
            "z_sine": dict(self.z_sine),
            "follow_forward_speed": self.follow_forward_speed,
        }
        if self.start_q is not None:
            out["start_q"] = np.asarray(self.start_q).tolist()
        if self.joint_hold is not None:
            out["joint_hold"] = dict(self.joint_hold)
        return out


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    duration: float = 30.0
    physics_dt: float = 0.001
    control_dt: float = 0.008
    robot: dict = field(default_factory=lambda: {"preset": "arm6"})
    robot_friction: dict = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    base: dict = field(default_factory=lambda: {"kind": "hold"})
    wall: dict = field(default_factory=lambda: {"enabled": False})
    task: TaskConfig = field(default_factory=TaskConfig)
    sensors: dict = field(default_factory=dict)
    disturbance: dict = field(default_factory=lambda: {"kind": "none"})
    initial_perturbation: float = 0.0
    metrics: dict = field(default_factory=lambda: {"channel": "force_y", "window": None})

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ConfigError("duration", "must be > 0")
        if self.physics_dt <= 0.0 or self.control_dt <= 0.0:
            raise ConfigError("physics_dt", "rates must be > 0")
        ratio = self.control_dt / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError(
                "control_dt", "control period must be an integer multiple of physics_dt"
            )

    # -- builders ---------------------------------------------------------

    def robot_model(self):
        if "preset" in self.robot:
            preset = self.robot["preset"]
            if preset == "arm6":
                model = default_arm()
            else:
                raise ConfigError("robot.preset", f"unknown preset {preset!r}")
        else:
            try:
                model = RobotModel.from_dict(self.robot)
            except Exception as exc:
                raise ConfigError("robot", str(exc)) from exc
        fr = self.robot_friction
        if fr:
            model = model.replace_friction(
                viscous=np.asarray(fr["viscous"], dtype=float) if "viscous" in fr else None,
                coulomb=np.asarray(fr["coulomb"], dtype=float) if "coulomb" in fr else None,
            )
        return model

    def wall_model(self):
        w = self.wall
        if not w.get("enabled", False):
            return None
        try:
            return wd.WallModel(
                position=float(w.get("position", 0.8)),
                stiffness=float(w.get("stiffness", 2.0e3)),
                damping=float(w.get("damping", 50.0)),
                tangential_friction=float(w.get("tangential_friction", 0.2)),
            )
        except wd.WorldError as exc:
            raise ConfigError("wall", str(exc)) from exc

    def base_trajectory(self):
        try:
            return wd.BaseTrajectory.from_dict(self.base)
        except wd.WorldError as exc:
            raise ConfigError("base", str(exc)) from exc

    def sensor_suite(self):
        s = self.sensors
        return wd.SensorSuite(
            ee_force=wd.SensorChannel(
                noise_sigma=float(s.get("ft_noise_sigma", 0.0)),
                bias=float(s.get("ft_bias", 0.0)),
                rate=float(s.get("ft_rate", 0.0)),
            ),
            interface_force=wd.SensorChannel(
                noise_sigma=float(s.get("interface_noise_sigma", 0.0))
            ),
            encoder_quantization=float(s.get("encoder_quantization", 0.0)),
            interface_enabled=bool(s.get("interface_enabled", False)),
        )

    def build_controller(self, model):
        c = self.controller
        return ct.Controller(
            c.kind,
            model,
            impedance=c.impedance,
            omega_c=c.omega_c,
            feedforward_tf=c.feedforward_tf(),
            torque_limit=c.torque_limit,
            pinv_damping=c.pinv_damping,
            period=self.control_dt,
        )

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "scenario document must be a JSON object")
        version = _get(data, "", "schema_version", int, SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {version}")
        known = {
            "schema_version",
            "name",
            "seed",
            "duration",
            "physics_dt",
            "control_dt",
            "robot",
            "robot_friction",
            "controller",
            "base",
            "wall",
            "task",
            "sensors",
            "disturbance",
            "initial_perturbation",
            "metrics",
        }
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        return cls(
            name=_get(data, "", "name", str, "scenario"),
            seed=_get(data, "", "seed", int, 0),
            duration=_get(data, "", "duration", float, 30.0),
            physics_dt=_get(data, "", "physics_dt", float, 0.001),
            control_dt=_get(data, "", "control_dt", float, 0.008),
            robot=_get(data, "", "robot", dict, {"preset": "arm6"}),
            robot_friction=_get(data, "", "robot_friction", dict, None),
            controller=ControllerConfig.from_dict(_get(data, "", "controller", dict, {})),
            base=_get(data, "", "base", dict, {"kind": "hold"}),
            wall=_get(data, "", "wall", dict, {"enabled": False}),
            task=TaskConfig.from_dict(_get(data, "", "task", dict, {})),
            sensors=_get(data, "", "sensors", dict, {}),
            disturbance=_get(data, "", "disturbance", dict, {"kind": "none"}),
            initial_perturbation=_get(data, "", "initial_perturbation", float, 0.0),
            metrics=_get(data, "", "metrics", dict, {"channel": "force_y", "window": None}),
        )

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "seed": self.seed,
            "duration": self.duration,
            "physics_dt": self.physics_dt,
            "control_dt": self.control_dt,
            "robot": copy.deepcopy(self.robot),
            "robot_friction": copy.deepcopy(self.robot_friction),
            "controller": self.controller.to_dict(),
            "base": copy.deepcopy(self.base),
            "wall": copy.deepcopy(self.wall),
            "task": self.task.to_dict(),
            "sensors": copy.deepcopy(self.sensors),
            "disturbance": copy.deepcopy(self.disturbance),
            "initial_perturbation": self.initial_perturbation,
            "metrics": copy.deepcopy(self.metrics),
        }

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}")
        return cls.from_dict(data)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def replace(self, **kw):
        """Copy with top-level overrides (controller kind/seed come up a lot)."""
        new = copy.deepcopy(self)
        for key, val in kw.items():
            if not hasattr(new, key):
                raise ConfigError(key, "unknown field")
            setattr(new, key, val)
        return new

    def with_controller(self, kind):
        new = copy.deepcopy(self)
        new.controller.kind = kind
        return new


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

# natural elbow-up working pose of the desk arm; places the end effector at
# roughly (0.0, 0.72, 0.80) in the world with the vehicle at the origin
ARM6_START_Q = np.array([1.181, -1.4715, 1.8786, -0.7657, 2.0353, -0.0711])

COULOMB_DEFAULT = np.array([0.4, 0.4, 0.3, 0.15, 0.15, 0.1])
VISCOUS_DEFAULT = np.full(6, 0.05)


def _wall_task_base(name, seed=0):
    cfg = ScenarioConfig(
        name=name,
        seed=seed,
        duration=55.0,
        robot={"preset": "arm6"},
        robot_friction={
            "viscous": VISCOUS_DEFAULT.tolist(),
            "coulomb": COULOMB_DEFAULT.tolist(),
        },
        wall={
            "enabled": True,
            "position": 0.8,
            "stiffness": 2.0e3,
            "damping": 50.0,
            "tangential_friction": 0.2,
        },
        sensors={"ft_noise_sigma": 0.02},
        initial_perturbation=0.005,
        metrics={"channel": "force_y", "window": [10.0, 55.0]},
    )
    cfg.controller.torque_limit = np.array([60.0, 60.0, 30.0, 20.0, 20.0, 20.0])
    cfg.task = TaskConfig(
        kind="wall",
        start_q=ARM6_START_Q.copy(),
        approach_start=1.0,
        approach_end=4.0,
        contact_start=5.0,
        release=None,
        force_schedule=((5.0, 5.0), (30.0, 10.0)),
        force_ramp=1.0,
        z_sine={"amplitude": 0.1, "omega": 0.125 * np.pi, "start": 20.0},
        follow_forward_speed=0.2,
    )
    return cfg


def low_dynamic_wall(seed=0):
    """Forward cruise along the wall, two force levels, z sweep."""
    cfg = _wall_task_base("low-dynamic-wall", seed)
    cfg.base = {"kind": "constant-velocity", "velocity": [0.2, 0.0, 0.0]}
    return cfg


def high_dynamic_wall(seed=0, amplitude=0.05, omega=2.0):
    """Forward cruise plus an unplanned lateral sway toward/away from the wall."""
    cfg = _wall_task_base("high-dynamic-wall", seed)
    cfg.base = {
        "kind": "composite",
        "segments": [
            {"kind": "constant-velocity", "velocity": [0.2, 0.0, 0.0]},
            {
                "kind": "sinusoid",
                "axis": "y",
                "amplitude": amplitude,
                "omega": omega,
                "start": 8.0,
                "ramp": 2.0,
            },
        ],
    }
    return cfg


def sse_protocol(seed=0):
    """Full wall protocol with the switch back to pure motion control.

    The terminal window measures how well each controller returns to the
    setpoint under joint Coulomb friction.
    """
    cfg = _wall_task_base("sse-protocol", seed)
    cfg.duration = 75.0
    cfg.base = {"kind": "constant-velocity", "velocity": [0.2, 0.0, 0.0]}
    cfg.task.release = 55.0
    cfg.metrics = {"channel": "position_error", "window": [65.0, 75.0]}
    return cfg


def hold_scenario(seed=0):
    """Stationary base, no contact, target = start pose (regression anchor)."""
    cfg = ScenarioConfig(
        name="hold",
        seed=seed,
        duration=10.0,
        robot={"preset": "arm6"},
        base={"kind": "hold"},
        wall={"enabled": False},
        metrics={"channel": "position_error", "window": [5.0, 10.0]},
    )
    cfg.controller.torque_limit = np.array([60.0, 60.0, 30.0, 20.0, 20.0, 20.0])
    cfg.task = TaskConfig(kind="hold", start_q=ARM6_START_Q.copy())
    return cfg


def coupling_validation(seed=0, duration=30.0):
    """Joint-space regulation while the base runs the high-dynamic profile.

    Joint friction is disabled so the interface sensor isolates the vehicle
    coupling; the regulation pose is the standard six-joint posture used for
    this protocol, truncated or padded for other joint counts.
    """
    cfg = ScenarioConfig(
        name="coupling-validation",
        seed=seed,
        duration=duration,
        robot={"preset": "arm6"},
        robot_friction={"viscous": [0.0] * 6, "coulomb": [0.0] * 6},
        base={
            "kind": "composite",
            "segments": [
                {"kind": "constant-velocity", "velocity": [0.2, 0.0, 0.0]},
                {
                    "kind": "sinusoid",
                    "axis": "y",
                    "amplitude": 0.05,
                    "omega": 2.0,
                    "start": 2.0,
                    "ramp": 2.0,
                },
                {
                    "kind": "sinusoid",
                    "axis": "yaw",
                    "amplitude": 0.15,
                    "omega": 1.5,
                    "start": 2.0,
                    "ramp": 2.0,
                },
            ],
        },
        wall={"enabled": False},
        sensors={"interface_enabled": True},
        metrics={"channel": "coupling_residual", "window": [5.0, None]},
    )
    cfg.task = TaskConfig(
        kind="joint-hold",
        joint_hold={"q_ref": [1.0, 0.14, -1.45, 4.41, -1.35, 0.0], "kp": 400.0, "kd": 40.0},
    )
    return cfg


def experiment_style(seed=0):
    """Hardware-envelope configuration: force ramp, then the base moves."""
    cfg = ScenarioConfig(
        name="experiment-style",
        seed=seed,
        duration=40.0,
        robot={"preset": "arm6"},
        robot_friction={
            "viscous": VISCOUS_DEFAULT.tolist(),
            "coulomb": COULOMB_DEFAULT.tolist(),
        },
        base={"kind": "constant-velocity", "velocity": [0.16, 0.0, 0.0], "start": 13.0},
        wall={
            "enabled": True,
            "position": 0.8,
            "stiffness": 5.0e4,
            "damping": 100.0,
            "tangential_friction": 0.2,
        },
        metrics={"channel": "force_y", "window": [15.0, 40.0]},
    )
    cfg.controller = ControllerConfig(
        kind="C1",
        impedance=ct.experiment_impedance(),
        omega_c=np.full(6, 3.0),
        torque_limit=ct.TORQUE_LIMIT_DEFAULT.copy(),
    )
    cfg.task = TaskConfig(
        kind="wall",
        start_q=ARM6_START_Q.copy(),
        approach_start=1.0,
        approach_end=5.0,
        contact_start=6.0,
        release=None,
        force_schedule=((10.0, 5.0),),
        force_ramp=3.0,
        z_sine={"amplitude": 0.0, "omega": 0.125 * np.pi, "start": 20.0},
        follow_forward_speed=0.16,
    )
    return cfg


PRESETS = {
    "hold": hold_scenario,
    "low-dynamic-wall": low_dynamic_wall,
    "high-dynamic-wall": high_dynamic_wall,
    "sse-protocol": sse_protocol,
    "coupling-validation": coupling_validation,
    "experiment-style": experiment_style,
}


def preset(name, seed=0):
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return PRESETS[name](seed=seed)
