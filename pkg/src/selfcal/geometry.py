"""Minimal SE(3) layer: poses as unit quaternion + translation.

Conventions used throughout the package:

- twists are 6-vectors ordered ``[rho; phi]`` (translation first, rotation second);
- perturbations act on the right, ``P * exp(delta)``;
- quaternions are ``(w, x, y, z)`` with ``w >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-6
# below this angle the Jacobian coefficients switch to Taylor series
SERIES_ANGLE = 1e-2
_PI_GUARD = 1e-12


class LogBranchError(ValueError):
    """Raised when the rotation angle sits on the log cut at pi."""


def hat(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; picks the numerically largest pivot."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    diag = (tr, R[0, 0], R[1, 1], R[2, 2])
    k = int(np.argmax(diag))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return np.array(q)


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(phi @ phi))
    if theta < SMALL_ANGLE:
        k = 0.5 - theta * theta / 48.0
    else:
        k = math.sin(0.5 * theta) / theta
    return np.array([math.cos(0.5 * theta), k * phi[0], k * phi[1], k * phi[2]])


def rotvec_from_quat(q: np.ndarray) -> np.ndarray:
    """Principal-branch rotation vector of a ``w >= 0`` quaternion."""
    w = q[0]
    v = q[1:]
    s = math.sqrt(float(v @ v))
    if w < _PI_GUARD:
        raise LogBranchError("log branch undefined: rotation angle is pi")
    if s < 0.5 * SMALL_ANGLE:
        return (2.0 / w) * (1.0 - s * s / (3.0 * w * w)) * v
    return (2.0 * math.atan2(s, w) / s) * v


def _coefficients(theta: float) -> tuple[float, float]:
    """(1 - cos t)/t^2 and (t - sin t)/t^3, stable near zero."""
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        return 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    half = math.sin(0.5 * theta)
    return 2.0 * half * half / t2, (theta - math.sin(theta)) / (t2 * theta)


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(phi @ phi))
    a, b = _coefficients(theta)
    P = hat(phi)
    return np.eye(3) + a * P + b * (P @ P)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(phi @ phi))
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        c = (1.0 - 0.5 * theta * math.cos(0.5 * theta) / math.sin(0.5 * theta)) / t2
    P = hat(phi)
    return np.eye(3) - 0.5 * P + c * (P @ P)


def _q_block(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Translation/rotation coupling block of the SE(3) left Jacobian."""
    theta = math.sqrt(float(phi @ phi))
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0
        c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        c1 = (theta - s) / (t2 * theta)
        c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2)
        c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta)
    R = hat(rho)
    P = hat(phi)
    PR = P @ R
    RP = R @ P
    PRP = PR @ P
    PP = P @ P
    return (
        0.5 * R
        + c1 * (PR + RP + PRP)
        + c2 * (PP @ R + RP @ P - 3.0 * PRP)
        + c3 * (PRP @ P + P @ PRP)
    )


def se3_left_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    rho, phi = xi[:3], xi[3:]
    Jinv = so3_left_jacobian_inv(phi)
    out = np.zeros((6, 6))
    out[:3, :3] = Jinv
    out[3:, 3:] = Jinv
    out[:3, 3:] = -Jinv @ _q_block(rho, phi) @ Jinv
    return out


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping points from the child frame into the parent frame."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=float).reshape(4)
        t = np.array(self.t, dtype=float).reshape(3)
        n = math.sqrt(float(q @ q))
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("quaternion must be finite and non-zero")
        # skip the division when already unit, so stored bits survive round trips
        if abs(n - 1.0) > 1e-15:
            q = q / n
        if q[0] < 0.0:
            q = -q
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> Pose:
        return cls(quat_from_rotvec(np.asarray(rotvec, dtype=float)), translation)

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(quat_from_matrix(T[:3, :3]), T[:3, 3])

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    @property
    def angle(self) -> float:
        return 2.0 * math.atan2(math.sqrt(float(self.q[1:] @ self.q[1:])), self.q[0])

    def rotvec(self) -> np.ndarray:
        return rotvec_from_quat(self.q)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def adjoint(self) -> np.ndarray:
        R = self.R
        Ad = np.zeros((6, 6))
        Ad[:3, :3] = R
        Ad[3:, 3:] = R
        Ad[:3, 3:] = hat(self.t) @ R
        return Ad

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def __repr__(self) -> str:
        return f"Pose(q={self.q.tolist()}, t={self.t.tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(quat_multiply(a.q, b.q), a.t + a.R @ b.t)


def inverse(p: Pose) -> Pose:
    qc = p.q * np.array([1.0, -1.0, -1.0, -1.0])
    return Pose(qc, -(quat_to_matrix(qc) @ p.t))


def log(p: Pose) -> np.ndarray:
    """se(3) logarithm as ``[rho; phi]``; raises LogBranchError at angle pi."""
    phi = rotvec_from_quat(p.q)
    rho = so3_left_jacobian_inv(phi) @ p.t
    return np.concatenate([rho, phi])


def exp(xi) -> Pose:
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[:3], xi[3:]
    return Pose(quat_from_rotvec(phi), so3_left_jacobian(phi) @ rho)


def interpolate(p: Pose, alpha: float) -> Pose:
    """Geodesic from the identity (alpha=0) to ``p`` (alpha=1)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"interpolation fraction {alpha} outside [0, 1]")
    if alpha == 1.0:
        return p
    return exp(alpha * log(p))


def distance(a: Pose, b: Pose) -> float:
    """Norm of the twist taking ``a`` to ``b``."""
    return float(np.linalg.norm(log(inverse(a) @ b)))
