"""Continuous-to-discrete filter machinery for the estimator loops.

The controllers convolve model signals with small continuous-time filters;
this module provides the transfer-function description, the Tustin (bilinear)
discretization to state space, filter banks that run one scalar section per
task axis, and the exact composite operators 1/(1-G) and s G/(1-G) for
first-order low-pass G used by the feedback estimator.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import cont2discrete, tf2ss


class FilterError(ValueError):
    """Raised for malformed transfer functions."""


@dataclass(frozen=True)
class TransferFunction:
    """Rational transfer function with coefficients in ASCENDING powers of s.

    num = [n0, n1, ...] means n0 + n1 s + n2 s^2 + ...; same for den.  The
    function must be proper (deg num <= deg den) with a nonzero leading
    denominator coefficient.
    """

    num: tuple
    den: tuple

    def __post_init__(self):
        num = tuple(float(c) for c in self.num)
        den = tuple(float(c) for c in self.den)
        while len(num) > 1 and num[-1] == 0.0:
            num = num[:-1]
        while len(den) > 1 and den[-1] == 0.0:
            den = den[:-1]
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        if len(self.num) > len(self.den):
            raise FilterError("transfer function must be proper (deg num <= deg den)")
        if self.den[-1] == 0.0:
            raise FilterError("denominator leading coefficient must be nonzero")

    @property
    def order(self):
        return len(self.den) - 1

    def __call__(self, s):
        """Evaluate at a complex frequency."""
        num = sum(c * s**k for k, c in enumerate(self.num))
        den = sum(c * s**k for k, c in enumerate(self.den))
        return num / den

    def times_s(self):
        """The transfer function s * G(s); must remain proper."""
        return TransferFunction((0.0,) + self.num, self.den)

    @property
    def dc_gain(self):
        return self(0.0)


def first_order_lowpass(omega_c):
    """G(s) = omega_c / (s + omega_c)."""
    if omega_c <= 0.0:
        raise FilterError("cutoff must be > 0")
    return TransferFunction((omega_c,), (omega_c, 1.0))


def feedforward_bandpass():
    """The coupling-estimator section 108 s / (s^2 + 8.485 s + 36).

    Peaks near 6 rad/s with zero DC gain, so constant base velocity produces
    no steady feedforward force.
    """
    return TransferFunction((0.0, 108.0), (36.0, 8.485, 1.0))


def feedforward_lowpass(omega_n=6.0, zeta=0.7071):
    """Unity-DC second-order low-pass used by the coupling feedforward.

    G(s) = omega_n^2 / (s^2 + 2 zeta omega_n s + omega_n^2): near-unity gain
    with small phase lag below omega_n, which is what a cancellation path
    needs over the vehicle-motion band.
    """
    return TransferFunction((omega_n**2,), (omega_n**2, 2.0 * zeta * omega_n, 1.0))


class FilterState:
    """Tustin-discretized single-input filter running one state per column.

    Holds the (A, B, C, D) realization in controller canonical form at sample
    period ``period`` and an internal state of shape (order, width) so one
    scalar section filters a ``width``-vector signal element-wise.
    """

    def __init__(self, tf, period, width=1):
        if period <= 0.0:
            raise FilterError("sample period must be > 0")
        self.tf = tf
        self.period = float(period)
        self.width = int(width)
        if tf.order == 0:
            # static gain, no dynamics
            self.A = np.zeros((0, 0))
            self.B = np.zeros((0, 1))
            self.C = np.zeros((1, 0))
            self.D = tf.num[0] / tf.den[0]
        else:
            # scipy wants descending coefficients
            num = np.array(tf.num[::-1], dtype=float)
            den = np.array(tf.den[::-1], dtype=float)
            A, B, C, D = tf2ss(num, den)
            Ad, Bd, Cd, Dd, _ = cont2discrete(
                (A, B, C, D), self.period, method="bilinear"
            )
            self.A = np.atleast_2d(Ad)
            self.B = np.atleast_2d(Bd).reshape(-1, 1)
            self.C = np.atleast_2d(Cd).reshape(1, -1)
            self.D = float(np.asarray(Dd).reshape(()))
        self.order = self.A.shape[0]
        self.state = np.zeros((self.order, self.width))

    def reset(self):
        self.state[:] = 0.0

    def copy(self):
        new = FilterState(self.tf, self.period, self.width)
        new.state = self.state.copy()
        return new

    def step(self, u):
        """Advance one sample; u is scalar (width=1) or a (width,) vector."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y = (self.C @ self.state).ravel() + self.D * u
        self.state = self.A @ self.state + self.B @ u[None, :]
        return y if self.width > 1 else float(y[0])

    @property
    def dc_gain(self):
        """Steady-state gain of the discrete realization."""
        if self.order == 0:
            return float(self.D)
        eye = np.eye(self.order)
        return float((self.C @ np.linalg.solve(eye - self.A, self.B) + self.D).ravel()[0])


def discretize(tf, period, width=1):
    """Bilinear (Tustin) discretization of a proper transfer function."""
    return FilterState(tf, period, width)


class FilterBank:
    """Independent scalar sections, one per task axis (possibly different)."""

    def __init__(self, tfs, period):
        self.sections = [FilterState(tf, period, width=1) for tf in tfs]
        self.period = period

    def __len__(self):
        return len(self.sections)

    def reset(self):
        for s in self.sections:
            s.reset()

    def step(self, u):
        u = np.asarray(u, dtype=float)
        return np.array([s.step(u[i]) for i, s in enumerate(self.sections)])


def uniform_bank(tf, period, axes=6):
    return FilterBank([tf] * axes, period)


class UdeOperators:
    """Exact composite operators of the feedback estimator for first-order G.

    With G(s) = w/(s+w) the two bracketed operators of the feedback law
    collapse to

        1/(1 - G)    = 1 + w/s        (unity feedthrough plus an integrator)
        s G/(1 - G)  = w              (a pure per-axis gain),

    which this class realizes directly: ``apply_integral`` runs the Tustin
    integrator with per-axis gain w on top of the feedthrough, and
    ``proportional_gain`` exposes the pure gain.  The integrator supports
    roll-back so actuator saturation can clamp wind-up.
    """

    def __init__(self, omega_c, period):
        omega_c = np.atleast_1d(np.asarray(omega_c, dtype=float))
        if np.any(omega_c <= 0.0):
            raise FilterError("cutoffs must be > 0")
        if period <= 0.0:
            raise FilterError("sample period must be > 0")
        self.omega_c = omega_c
        self.period = float(period)
        self.integral = np.zeros_like(omega_c)
        self._prev_input = np.zeros_like(omega_c)
        self._undo = None

    @classmethod
    def from_transfer_functions(cls, tfs, period):
        """Build from first-order low-pass sections; rejects other orders."""
        omegas = []
        for tf in tfs:
            if tf.order != 1:
                raise FilterError(
                    "composite simplification requires first-order low-pass "
                    "sections; use rational_composite for other orders"
                )
            # normalize den = (w, 1): num must be the matching (w,)
            scale = tf.den[-1]
            den = (tf.den[0] / scale, 1.0)
            num = tuple(c / scale for c in tf.num)
            if len(num) != 1 or abs(num[0] - den[0]) > 1e-12:
                raise FilterError("section must be of the form w/(s+w)")
            omegas.append(den[0])
        return cls(np.array(omegas), period)

    def reset(self):
        self.integral[:] = 0.0
        self._prev_input[:] = 0.0
        self._undo = None

    def copy(self):
        new = UdeOperators(self.omega_c.copy(), self.period)
        new.integral = self.integral.copy()
        new._prev_input = self._prev_input.copy()
        return new

    @property
    def proportional_gain(self):
        return self.omega_c

    def apply_integral(self, u):
        """One sample of (1 + w/s) u with a trapezoidal integrator."""
        u = np.asarray(u, dtype=float)
        self._undo = (self.integral.copy(), self._prev_input.copy())
        self.integral = self.integral + 0.5 * self.period * self.omega_c * (
            u + self._prev_input
        )
        self._prev_input = u.copy()
        return u + self.integral

    def rollback(self):
        """Undo the most recent integrator update (anti-windup clamp)."""
        if self._undo is not None:
            self.integral, self._prev_input = self._undo
            self._undo = None

    def apply_proportional(self, u):
        return self.omega_c * np.asarray(u, dtype=float)


def rational_composite(tf, period, width=1):
    """Generic realizations of 1/(1-G) and s G/(1-G) for proper G != 1.

    1/(1-G) = den/(den - num) and s G/(1-G) = s num/(den - num).  Returns
    (integral_like, proportional_like) FilterState objects; used as the
    cross-check oracle for the simplified first-order operators and as the
    fallback for other filter orders.
    """
    n = len(tf.den)
    num = np.zeros(n)
    num[: len(tf.num)] = tf.num
    den = np.array(tf.den, dtype=float)
    one_minus = den - num
    inv_tf = TransferFunction(tuple(den), tuple(one_minus))
    prop_tf = TransferFunction((0.0,) + tuple(num), tuple(one_minus))
    return FilterState(inv_tf, period, width), FilterState(prop_tf, period, width)


def paper_filter_banks(period, omega_c=(6.0, 6.0, 6.0, 3.0, 3.0, 3.0)):
    """The published estimator filter set as ready-to-run banks.

    Returns a dict with the coupling band-pass bank ``Gf1`` (108 s / (s^2 +
    8.485 s + 36) per axis), its derivative form ``sGf1`` realized as the
    proper biquad 108 s^2 / (s^2 + 8.485 s + 36), and the first-order
    feedback bank ``Gf2`` with per-axis cutoffs (default [6,6,6,3,3,3]).
    """
    gf1 = feedforward_bandpass()
    return {
        "Gf1": uniform_bank(gf1, period),
        "sGf1": uniform_bank(gf1.times_s(), period),
        "Gf2": FilterBank([first_order_lowpass(w) for w in omega_c], period),
    }
