"""Synthetic two-sensor relative-pose streams with known extrinsics.

Trajectories (reference sensor, 20 Hz by default):

``full_6dof_figure8``
    Lissajous figure-eight in the horizontal plane (x amplitude 2 m, y 1 m)
    with a 0.3 m vertical sinusoid. Attitude is a slow yaw swing plus unit
    amplitude roll, pitch and yaw wobbles at 14 to 24 rad/s, so at 20 Hz each
    step turns by up to about a radian about a changing axis. Every step is
    its own keyframe and all six extrinsic directions are well observed even
    with per-step noise.
``planar_arcs``
    Unicycle at 0.5 m/s with a sinusoidally varying turn rate; motion stays
    in the xy-plane with rotation about z only. Noise is confined to the same
    three planar directions so the degeneracy is exact.
``straight_line``
    Constant 0.5 m/s along x with no rotation.

The second sensor's delta over each step is ``X^-1 A X`` for the extrinsic
``X`` active at that step's end time; drift events switch ``X`` instantly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import pose_from_dict, pose_to_dict
from .estimator import numeric_jacobian
from .geometry import Pose, compose, exp, inverse
from .io import RelativePoseMeasurement
from .keyframer import Keyframer, MotionPair, keyframe_stream

TRAJECTORIES = ("full_6dof_figure8", "planar_arcs", "straight_line")
PLANAR_MASK = np.array([1.0, 1.0, 0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ScenarioSpec:
    trajectory: str = "full_6dof_figure8"
    duration: float = 60.0
    rate: float = 20.0
    theta_true: Pose = field(default_factory=Pose.identity)
    drift_events: tuple[tuple[float, Pose], ...] = ()
    noise: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    reference_sensor: str = "front"
    second_sensor: str = "back"

    def __post_init__(self) -> None:
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"trajectory must be one of {TRAJECTORIES}")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not self.duration >= 0:
            raise ValueError("duration must be non-negative")
        if len(self.noise) != 2 or min(self.noise) < 0:
            raise ValueError("noise is (sigma_t, sigma_r), both non-negative")
        times = [t for t, _ in self.drift_events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("drift event times must be strictly increasing")
        if any(not 0 <= t <= self.duration for t in times):
            raise ValueError("drift events must lie within the scenario duration")
        if self.reference_sensor == self.second_sensor:
            raise ValueError("sensor names must differ")

    def theta_at(self, t: float) -> Pose:
        theta = self.theta_true
        for t_event, new_theta in self.drift_events:
            if t >= t_event:
                theta = new_theta
        return theta

    @classmethod
    def from_dict(cls, obj: dict) -> ScenarioSpec:
        kwargs = dict(obj)
        if "theta_true" in kwargs:
            kwargs["theta_true"] = pose_from_dict(kwargs["theta_true"])
        if "drift_events" in kwargs:
            kwargs["drift_events"] = tuple(
                (float(e["t"]), pose_from_dict(e["theta"])) for e in kwargs["drift_events"]
            )
        if "noise" in kwargs:
            n = kwargs["noise"]
            kwargs["noise"] = (float(n["sigma_t"]), float(n["sigma_r"])) if isinstance(n, dict) else tuple(map(float, n))
        for name in ("duration", "rate"):
            if name in kwargs:
                kwargs[name] = float(kwargs[name])
        if "seed" in kwargs:
            kwargs["seed"] = int(kwargs["seed"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "trajectory": self.trajectory,
            "duration": self.duration,
            "rate": self.rate,
            "theta_true": pose_to_dict(self.theta_true),
            "drift_events": [{"t": t, "theta": pose_to_dict(p)} for t, p in self.drift_events],
            "noise": list(self.noise),
            "seed": self.seed,
            "reference_sensor": self.reference_sensor,
            "second_sensor": self.second_sensor,
        }


def _rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Rz @ Ry @ Rx


def figure8_pose(t: float) -> Pose:
    p = [2.0 * math.sin(0.3 * t), 1.0 * math.sin(0.6 * t), 0.3 * math.sin(0.9 * t)]
    # fast attitude wobble: each 20 Hz step turns by a large fraction of a radian
    yaw = 1.2 * math.sin(0.45 * t) + math.sin(14.0 * t)
    pitch = math.sin(18.2 * t + 0.5)
    roll = math.sin(23.8 * t)
    T = np.eye(4)
    T[:3, :3] = _rpy(roll, pitch, yaw)
    T[:3, 3] = p
    return Pose.from_matrix(T)


def _reference_delta(trajectory: str, t0: float, t1: float) -> Pose:
    dt = t1 - t0
    if trajectory == "full_6dof_figure8":
        return compose(inverse(figure8_pose(t0)), figure8_pose(t1))
    if trajectory == "planar_arcs":
        tm = 0.5 * (t0 + t1)
        omega = 0.9 * math.sin(2.0 * math.pi * tm / 10.0) + 0.3
        return exp([0.5 * dt, 0.0, 0.0, 0.0, 0.0, omega * dt])
    return Pose.identity() if dt == 0 else Pose((1.0, 0.0, 0.0, 0.0), (0.5 * dt, 0.0, 0.0))


def generate(spec: ScenarioSpec) -> list[RelativePoseMeasurement]:
    """Both sensors' streams, interleaved by timestamp (reference first)."""
    rng = np.random.default_rng(spec.seed)
    sigma_t, sigma_r = spec.noise
    sigmas = np.array([sigma_t] * 3 + [sigma_r] * 3)
    if spec.trajectory == "planar_arcs":
        sigmas = sigmas * PLANAR_MASK
    noisy = bool(np.any(sigmas > 0))
    cov = np.diag([sigma_t**2] * 3 + [sigma_r**2] * 3) if sigma_t > 0 and sigma_r > 0 else None

    n = int(round(spec.duration * spec.rate))
    out = []
    t_prev = 0.0
    for k in range(1, n + 1):
        t = k / spec.rate
        a = _reference_delta(spec.trajectory, t_prev, t)
        theta = spec.theta_at(t)
        b = compose(compose(inverse(theta), a), theta)
        if noisy:
            a = compose(a, exp(rng.standard_normal(6) * sigmas))
            b = compose(b, exp(rng.standard_normal(6) * sigmas))
        out.append(RelativePoseMeasurement(t, spec.reference_sensor, a, cov))
        out.append(RelativePoseMeasurement(t, spec.second_sensor, b, cov))
        t_prev = t
    return out


def numerical_rank(matrix: np.ndarray, threshold: float = 0.1) -> int:
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv >= threshold * sv[0]))


def null_space_oracle(
    measurements: Sequence,
    theta: Pose,
    threshold: float = 0.1,
    sensors: tuple[str, str] = ("front", "back"),
) -> tuple[int, list[np.ndarray]]:
    """Rank and null directions of all pairs' stacked Jacobian, without windowing.

    Deliberately independent of the estimator's solve path: Jacobians come
    from central finite differences and whitening uses the Cholesky factor
    of each covariance directly.
    """
    items = list(measurements)
    if items and not isinstance(items[0], MotionPair):
        items = keyframe_stream(items, Keyframer(*sensors))
    if not items:
        return 0, [np.eye(6)[j] for j in range(6)]
    blocks = []
    for pair in items:
        chol = np.linalg.cholesky(pair.cov_pair)
        blocks.append(np.linalg.solve(chol, numeric_jacobian(theta, pair)))
    J = np.vstack(blocks)
    norms = np.linalg.norm(J, axis=0)
    # finite differences leave ~1e-10 residue in directions with no effect
    live = norms > 1e-7 * norms.max() if norms.max() > 0 else np.zeros(6, dtype=bool)
    null = [np.eye(6)[j] for j in np.flatnonzero(~live)]
    if not live.any():
        return 0, null
    scale = 1.0 / norms[live]
    _, sv, Vt = np.linalg.svd(J[:, live] * scale, full_matrices=True)
    rank = int(np.sum(sv >= threshold * sv[0]))
    for v in Vt[rank:]:
        full = np.zeros(6)
        full[live] = scale * v
        null.append(full / np.linalg.norm(full))
    return rank, null
