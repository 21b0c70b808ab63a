"""Rotation and frame helpers shared by the kinematics, control, and world code.

All rotations are plain 3x3 numpy arrays.  Euler angles follow the Z-Y-X
(yaw-pitch-roll) convention and are used for I/O only; everything internal
works on rotation matrices.
"""

import numpy as np


def hat(v):
    """Skew-symmetric cross-product matrix of a 3-vector."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def rotation_about_axis(axis, angle):
    """Rodrigues rotation about a unit axis."""
    a = np.asarray(axis, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    K = hat(a)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rotation_log(R):
    """Axis-angle vector of a rotation matrix (inverse of the exponential map).

    Safe near the identity; near pi it falls back to the dominant-diagonal
    extraction so the axis stays well defined.
    """
    tr = np.trace(R)
    cos_angle = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    if angle < 1e-10:
        # first-order: log(R) ~ skew part
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle > np.pi - 1e-6:
        # near pi the skew part degenerates; use R = I + 2 aa^T - ... structure
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        axis = A[:, k] / max(axis[k], 1e-12)
        axis = axis / np.linalg.norm(axis)
        # fix the sign using the skew part
        w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(w, axis) < 0.0:
            axis = -axis
        return angle * axis
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle / (2.0 * np.sin(angle)) * w


def euler_zyx_from_rotation(R):
    """(roll, pitch, yaw) with R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    if abs(R[2, 0]) < 1.0 - 1e-10:
        roll = np.arctan2(R[2, 1], R[2, 2])
        yaw = np.arctan2(R[1, 0], R[0, 0])
    else:
        # gimbal lock: fold everything into roll
        roll = np.arctan2(-R[1, 2], R[1, 1])
        yaw = 0.0
    return np.array([roll, pitch, yaw])


def rotation_from_euler_zyx(angles):
    """Inverse of :func:`euler_zyx_from_rotation`."""
    roll, pitch, yaw = angles
    return (
        rotation_about_axis([0.0, 0.0, 1.0], yaw)
        @ rotation_about_axis([0.0, 1.0, 0.0], pitch)
        @ rotation_about_axis([1.0, 0.0, 0.0], roll)
    )


def assert_rotation(R, tol=1e-9, what="rotation"):
    """Validate orthonormality and det=+1; raises ValueError otherwise."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"{what} must be 3x3, got {R.shape}")
    err = np.linalg.norm(R.T @ R - np.eye(3))
    if err > tol:
        raise ValueError(f"{what} is not orthonormal (||R^T R - I|| = {err:.3e})")
    if np.linalg.det(R) < 0.0:
        raise ValueError(f"{what} has det < 0")
    return R
