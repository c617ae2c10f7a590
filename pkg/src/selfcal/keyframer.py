"""Turn two high-rate relative-pose streams into time-aligned motion pairs.

The reference sensor's motion is accumulated until its translation or
rotation crosses a keyframe threshold. The second sensor's motion over the
same time interval is then composed from its own deltas; a delta that
straddles an interval boundary is split by geodesic interpolation, which is
exact for constant-velocity motion within one sample.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, compose, interpolate, inverse
from .io import RelativePoseMeasurement

DEFAULT_SIGMA_T = 0.005
DEFAULT_SIGMA_R = 0.0087


def default_covariance(sigma_t: float = DEFAULT_SIGMA_T, sigma_r: float = DEFAULT_SIGMA_R) -> np.ndarray:
    return np.diag([sigma_t**2] * 3 + [sigma_r**2] * 3)


@dataclass(frozen=True, eq=False)
class MotionPair:
    """Motions of both sensors over one keyframe interval; ideally A X = X B."""

    t_start: float
    t_end: float
    motion_a: Pose
    motion_b: Pose
    cov_pair: np.ndarray


class _Accumulator:
    __slots__ = ("pose", "cov", "count")

    def __init__(self) -> None:
        self.pose = Pose.identity()
        self.cov = np.zeros((6, 6))
        self.count = 0

    def add(self, delta: Pose, cov: np.ndarray, adjoint_transport: bool) -> None:
        if adjoint_transport:
            Ad = inverse(delta).adjoint()
            self.cov = Ad @ self.cov @ Ad.T + cov
        else:
            self.cov = self.cov + cov
        self.pose = compose(self.pose, delta)
        self.count += 1


class Keyframer:
    """Stateful accumulator for one (reference, second) sensor pair.

    ``origin`` is the stream time at which each sensor's first delta starts.
    """

    def __init__(
        self,
        reference: str,
        second: str,
        kf_trans: float = 0.15,
        kf_rot: float = 0.1745,
        default_cov: np.ndarray | None = None,
        origin: float = 0.0,
        adjoint_transport: bool = False,
    ) -> None:
        if reference == second:
            raise ValueError("reference and second sensor must differ")
        self.reference = reference
        self.second = second
        self.kf_trans = kf_trans
        self.kf_rot = kf_rot
        self.default_cov = default_covariance() if default_cov is None else np.asarray(default_cov)
        self.origin = origin
        self.adjoint_transport = adjoint_transport

        self._last_t: dict[str, float | None] = {reference: None, second: None}
        self._acc = _Accumulator()
        self._acc_start = origin
        # closed reference intervals waiting for second-sensor coverage
        self._pending: deque[tuple[float, float, Pose, np.ndarray]] = deque()
        # second-sensor pieces (start, end, delta, cov) not yet consumed
        self._b_pieces: deque[tuple[float, float, Pose, np.ndarray]] = deque()

    def push(self, m: RelativePoseMeasurement) -> list[MotionPair]:
        """Add one measurement; return the motion pairs completed by it."""
        if m.sensor_id not in self._last_t:
            raise ValueError(f"unknown sensor {m.sensor_id!r}")
        prev = self._last_t[m.sensor_id]
        if prev is not None and m.t <= prev:
            raise ValueError(f"timestamps not increasing for sensor {m.sensor_id!r}: t={m.t!r}")
        start = self.origin if prev is None else prev
        self._last_t[m.sensor_id] = m.t
        cov = self.default_cov if m.cov is None else m.cov

        if m.sensor_id == self.reference:
            self._acc.add(m.delta, cov, self.adjoint_transport)
            pose = self._acc.pose
            if float(np.linalg.norm(pose.t)) >= self.kf_trans or pose.angle >= self.kf_rot:
                self._pending.append((self._acc_start, m.t, pose, self._acc.cov))
                self._acc = _Accumulator()
                self._acc_start = m.t
        else:
            self._b_pieces.append((start, m.t, m.delta, cov))
        return self._drain(final=False)

    def flush(self) -> list[MotionPair]:
        """Close out pending intervals and the partial accumulator at end of stream."""
        if self._acc.count:
            self._pending.append(
                (self._acc_start, self._last_t[self.reference], self._acc.pose, self._acc.cov)
            )
            self._acc = _Accumulator()
            self._acc_start = self._last_t[self.reference]
        return self._drain(final=True)

    def _drain(self, final: bool) -> list[MotionPair]:
        out = []
        while self._pending:
            b_last = self._last_t[self.second]
            t_end = self._pending[0][1]
            if not final and (b_last is None or b_last < t_end):
                break
            pair = self._pair_for(*self._pending.popleft())
            if pair is not None:
                out.append(pair)
        return out

    def _pair_for(self, t0: float, t1: float, motion_a: Pose, cov_a: np.ndarray) -> MotionPair | None:
        acc = _Accumulator()
        pieces = self._b_pieces
        while pieces:
            s, e, delta, cov = pieces[0]
            if e <= t0 and not (s == e == t0):
                pieces.popleft()
                continue
            if s >= t1 and not s == e == t1:
                break
            if s < t0:
                # drop the part of the piece that precedes the interval
                alpha = (t0 - s) / (e - s)
                head = interpolate(delta, alpha)
                delta = compose(inverse(head), delta)
                cov = (1.0 - alpha) * cov
                s = t0
            if e <= t1:
                acc.add(delta, cov, self.adjoint_transport)
                pieces.popleft()
            else:
                alpha = (t1 - s) / (e - s)
                head = interpolate(delta, alpha)
                acc.add(head, alpha * cov, self.adjoint_transport)
                pieces[0] = (t1, e, compose(inverse(head), delta), (1.0 - alpha) * cov)
                break
        if acc.count == 0 or not t1 > t0:
            return None
        return MotionPair(t0, t1, motion_a, acc.pose, cov_a + acc.cov)


def keyframe_stream(measurements, keyframer: Keyframer) -> list[MotionPair]:
    pairs = []
    for m in measurements:
        pairs.extend(keyframer.push(m))
    pairs.extend(keyframer.flush())
    return pairs

