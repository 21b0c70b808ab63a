"""Environment models: wall contact, joint friction, base motion, sensors.

Base trajectories are analytic - position, velocity, and acceleration come
from closed-form expressions, never from differencing - so the plant side can
consume exact accelerations while controllers only ever see position and
velocity.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .geometry import rotation_about_axis
from .robot import BaseState, Wrench


class WorldError(ValueError):
    """Raised for invalid environment parameters."""


# ---------------------------------------------------------------------------
# wall contact
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WallModel:
    """Unilateral spring-damper plane at y = position, free side y < position."""

    position: float = 0.8
    stiffness: float = 2.0e3
    damping: float = 50.0
    tangential_friction: float = 0.2

    def __post_init__(self):
        if self.stiffness <= 0.0:
            raise WorldError("wall stiffness must be > 0")
        if self.damping < 0.0 or self.tangential_friction < 0.0:
            raise WorldError("wall damping and friction must be >= 0")


def rigid_wall(position=0.8):
    """Experiment-like stiff wall."""
    return WallModel(position=position, stiffness=5.0e4, damping=100.0)


def compliant_wall(position=0.8):
    """Simulation-like compliant wall."""
    return WallModel(position=position, stiffness=2.0e3, damping=50.0)


def contact_wrench(wall, position, velocity):
    """World-frame wrench the wall exerts on the end effector.

    Normal force k*pen + b*pen_rate is clamped so it never pulls; tangential
    Coulomb drag opposes the in-plane velocity with smoothing below 1 mm/s.
    """
    f = K.contact_force(
        np.asarray(position, dtype=float),
        np.asarray(velocity, dtype=float),
        wall.position,
        wall.stiffness,
        wall.damping,
        wall.tangential_friction,
    )
    return Wrench(f, np.zeros(3), "inertial")


def joint_friction(model, qd):
    """Smoothed viscous + Coulomb friction torque (opposes motion)."""
    return K.friction_torque(
        np.asarray(qd, dtype=float), model.viscous_friction, model.coulomb_friction
    )


# ---------------------------------------------------------------------------
# base trajectories
# ---------------------------------------------------------------------------

_AXES = {"x": 0, "y": 1, "z": 2, "yaw": 3}


def _smoothstep(t, t0, ramp):
    """C1 envelope rising 0 -> 1 over [t0, t0+ramp]; returns (e, de, dde)."""
    if ramp <= 0.0:
        on = 1.0 if t >= t0 else 0.0
        return on, 0.0, 0.0
    u = (t - t0) / ramp
    if u <= 0.0:
        return 0.0, 0.0, 0.0
    if u >= 1.0:
        return 1.0, 0.0, 0.0
    e = 3.0 * u**2 - 2.0 * u**3
    de = (6.0 * u - 6.0 * u**2) / ramp
    dde = (6.0 - 12.0 * u) / ramp**2
    return e, de, dde


@dataclass(frozen=True)
class HoldSegment:
    """No motion."""

    def channels(self, t):
        return np.zeros(4), np.zeros(4), np.zeros(4)


@dataclass(frozen=True)
class ConstantVelocitySegment:
    """Straight-line translation from a start time."""

    velocity: tuple = (0.2, 0.0, 0.0)
    start: float = 0.0

    def channels(self, t):
        p, v, a = np.zeros(4), np.zeros(4), np.zeros(4)
        if t >= self.start:
            vel = np.asarray(self.velocity, dtype=float)
            p[:3] = vel * (t - self.start)
            v[:3] = vel
        return p, v, a


@dataclass(frozen=True)
class SinusoidSegment:
    """A sin(Omega (t - start) + phase) on one channel, with a smooth ramp-in.

    axis is one of x, y (lateral), z, yaw; the envelope keeps the position
    profile C1 at the start.
    """

    axis: str = "y"
    amplitude: float = 0.1
    omega: float = 2.0
    phase: float = 0.0
    start: float = 0.0
    ramp: float = 2.0

    def __post_init__(self):
        if self.axis not in _AXES:
            raise WorldError(f"unknown trajectory axis {self.axis!r}")

    def channels(self, t):
        p, v, a = np.zeros(4), np.zeros(4), np.zeros(4)
        if t < self.start:
            return p, v, a
        i = _AXES[self.axis]
        w = self.omega
        arg = w * (t - self.start) + self.phase
        s, c = np.sin(arg), np.cos(arg)
        e, de, dde = _smoothstep(t, self.start, self.ramp)
        A = self.amplitude
        p[i] = A * e * s
        v[i] = A * (de * s + e * w * c)
        a[i] = A * (dde * s + 2.0 * de * w * c - e * w * w * s)
        return p, v, a


class BaseTrajectory:
    """Sum of analytic motion segments; rotation is yaw-only.

    ``state_at(t)`` returns the BaseState (pose + twist) for the controller
    side and the true 6-vector acceleration for the plant side.
    """

    def __init__(self, segments=()):
        self.segments = tuple(segments)

    @classmethod
    def hold(cls):
        return cls([HoldSegment()])

    @classmethod
    def forward(cls, speed=0.2, start=0.0):
        return cls([ConstantVelocitySegment((speed, 0.0, 0.0), start)])

    def channels(self, t):
        p, v, a = np.zeros(4), np.zeros(4), np.zeros(4)
        for seg in self.segments:
            ps, vs, accs = seg.channels(t)
            p += ps
            v += vs
            a += accs
        return p, v, a

    def state_at(self, t):
        if t < 0.0:
            raise WorldError("trajectory time must be >= 0")
        p, v, a = self.channels(t)
        yaw, yaw_rate, yaw_acc = p[3], v[3], a[3]
        R = rotation_about_axis([0.0, 0.0, 1.0], yaw)
        state = BaseState(
            position=p[:3],
            rotation=R,
            linear_velocity=v[:3],
            angular_velocity=np.array([0.0, 0.0, yaw_rate]),
        )
        accel = np.concatenate([a[:3], [0.0, 0.0, yaw_acc]])
        return state, accel

    def sample(self, times):
        """Vectorized sampling: arrays for the plant-side physics loop.

        Returns a dict of arrays R (N,3,3), p/v/w/acc_lin/acc_ang (N,3).
        """
        times = np.asarray(times, dtype=float)
        N = times.shape[0]
        out = {
            "R": np.empty((N, 3, 3)),
            "p": np.empty((N, 3)),
            "v": np.empty((N, 3)),
            "w": np.empty((N, 3)),
            "a_lin": np.empty((N, 3)),
            "a_ang": np.empty((N, 3)),
        }
        for i, t in enumerate(times):
            st, acc = self.state_at(t)
            out["R"][i] = st.rotation
            out["p"][i] = st.position
            out["v"][i] = st.linear_velocity
            out["w"][i] = st.angular_velocity
            out["a_lin"][i] = acc[:3]
            out["a_ang"][i] = acc[3:]
        return out

    @classmethod
    def from_dict(cls, data):
        kind = data.get("kind", "hold")
        if kind == "hold":
            return cls.hold()
        if kind == "constant-velocity":
            return cls(
                [
                    ConstantVelocitySegment(
                        tuple(data.get("velocity", (0.2, 0.0, 0.0))),
                        float(data.get("start", 0.0)),
                    )
                ]
            )
        if kind == "sinusoid" or kind == "sinusoidal-lateral":
            return cls([_sinusoid_from_dict(data)])
        if kind == "composite":
            segs = []
            for sub in data.get("segments", []):
                segs.extend(cls.from_dict(sub).segments)
            return cls(segs)
        raise WorldError(f"unknown trajectory kind {kind!r}")


def _sinusoid_from_dict(data):
    return SinusoidSegment(
        axis=data.get("axis", "y"),
        amplitude=float(data.get("amplitude", 0.1)),
        omega=float(data.get("omega", 2.0)),
        phase=float(data.get("phase", 0.0)),
        start=float(data.get("start", 0.0)),
        ramp=float(data.get("ramp", 2.0)),
    )


def high_dynamic_trajectory(forward_speed=0.2, amplitude=0.05, omega=2.0, start=8.0):
    """Forward cruise with a lateral sway ramped in after contact settles."""
    return BaseTrajectory(
        [
            ConstantVelocitySegment((forward_speed, 0.0, 0.0), 0.0),
            SinusoidSegment("y", amplitude, omega, 0.0, start, ramp=2.0),
        ]
    )


# ---------------------------------------------------------------------------
# sensors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensorChannel:
    """Additive Gaussian noise + bias with zero-order hold between samples."""

    noise_sigma: float = 0.0
    bias: float = 0.0
    rate: float = 0.0  # Hz; 0 means "sample every call"

    def __post_init__(self):
        if self.noise_sigma < 0.0 or self.rate < 0.0:
            raise WorldError("sensor noise and rate must be >= 0")


@dataclass(frozen=True)
class SensorSuite:
    """Noise/bias/rate description for the simulated instrumentation."""

    ee_force: SensorChannel = field(default_factory=SensorChannel)
    interface_force: SensorChannel = field(default_factory=SensorChannel)
    encoder_quantization: float = 0.0
    interface_enabled: bool = False

    @classmethod
    def ideal(cls):
        return cls()


class _HeldChannel:
    def __init__(self, channel, rng, width):
        self.channel = channel
        self.rng = rng
        self.width = width
        self.period = 1.0 / channel.rate if channel.rate > 0.0 else 0.0
        self.next_sample = 0.0
        self.held = np.zeros(width)

    def measure(self, truth, t):
        if self.period == 0.0 or t >= self.next_sample - 1e-12:
            noise = (
                self.rng.normal(0.0, self.channel.noise_sigma, self.width)
                if self.channel.noise_sigma > 0.0
                else np.zeros(self.width)
            )
            self.held = np.asarray(truth, dtype=float) + noise + self.channel.bias
            if self.period > 0.0:
                while self.next_sample <= t + 1e-12:
                    self.next_sample += self.period
        return self.held.copy()


class Sensors:
    """Stateful measurement source for one run; deterministic given the seed."""

    def __init__(self, suite, seed=0):
        self.suite = suite
        self.rng = np.random.default_rng(seed)
        self._ee = _HeldChannel(suite.ee_force, self.rng, 6)
        self._interface = _HeldChannel(suite.interface_force, self.rng, 6)

    def measure_ee_force(self, truth6, t):
        return self._ee.measure(truth6, t)

    def measure_interface(self, truth6, t):
        return self._interface.measure(truth6, t)

    def measure_joints(self, q, qd):
        step = self.suite.encoder_quantization
        if step > 0.0:
            q = np.round(np.asarray(q) / step) * step
        return np.asarray(q, dtype=float).copy(), np.asarray(qd, dtype=float).copy()
