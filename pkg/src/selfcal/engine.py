"""Online calibration loop: keyframe, score candidates, swap, solve, decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable

import numpy as np

from .estimator import CalibrationEstimate, SolveOptions, solve
from .geometry import Pose, compose, inverse, log
from .io import RelativePoseMeasurement, ReportRow
from .keyframer import Keyframer, MotionPair, default_covariance
from .queue import LOCAL_MIN, POLICIES, CandidateWindow, Segment, SegmentQueue


@dataclass(frozen=True)
class EngineConfig:
    # tuning knobs; defaults work for 20 Hz odometry
    tsvd_threshold: float = 0.1
    max_entropy: float = 15.0
    pq_capacity: int = 10
    window_size: int = 10
    kf_trans: float = 0.15
    kf_rot: float = 0.1745
    decay_rate: float = 0.04
    same_count: int = 3
    min_update: float = 0.008

    initial_guess: Pose = field(default_factory=Pose.identity)
    reference_sensor: str = "front"
    second_sensor: str = "back"
    sigma_t: float = 0.005
    sigma_r: float = 0.0087
    policy: str = LOCAL_MIN
    max_iterations: int = 20
    step_tolerance: float = 1e-10
    adjoint_transport: bool = False

    def __post_init__(self) -> None:
        for name in TUNING_PARAMETERS:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.tsvd_threshold < 1.0:
            raise ValueError("tsvd_threshold must be below 1")
        if self.reference_sensor == self.second_sensor:
            raise ValueError("reference and second sensor must differ")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.sigma_t <= 0 or self.sigma_r <= 0:
            raise ValueError("default noise sigmas must be positive")

    @property
    def solve_options(self) -> SolveOptions:
        return SolveOptions(self.tsvd_threshold, self.max_iterations, self.step_tolerance, use_tsvd=True)

    @property
    def max_solve_pairs(self) -> int:
        return self.pq_capacity * self.window_size

    @classmethod
    def from_dict(cls, obj: dict) -> EngineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown engine settings: {sorted(unknown)}")
        kwargs = dict(obj)
        if "initial_guess" in kwargs:
            kwargs["initial_guess"] = pose_from_dict(kwargs["initial_guess"])
        for name in ("pq_capacity", "window_size", "same_count", "max_iterations"):
            if name in kwargs:
                kwargs[name] = int(kwargs[name])
        return cls(**kwargs)


TUNING_PARAMETERS = (
    "tsvd_threshold",
    "max_entropy",
    "pq_capacity",
    "window_size",
    "kf_trans",
    "kf_rot",
    "decay_rate",
    "same_count",
    "min_update",
)


def pose_from_dict(obj) -> Pose:
    if isinstance(obj, Pose):
        return obj
    if "rotvec" in obj:
        return Pose.from_rotvec(obj["rotvec"], obj.get("p", (0.0, 0.0, 0.0)))
    return Pose(obj.get("q", (1.0, 0.0, 0.0, 0.0)), obj.get("p", (0.0, 0.0, 0.0)))


def pose_to_dict(p: Pose) -> dict:
    return {"q": p.q.tolist(), "p": p.t.tolist()}


@dataclass
class EngineState:
    theta: Pose
    estimate: CalibrationEstimate | None = None
    queue: SegmentQueue | None = None
    consecutive_small_updates: int = 0
    converged: bool = False
    solve_count: int = 0
    candidate_solves: int = 0
    solve_sizes: list[int] = field(default_factory=list)
    events: list[ReportRow] = field(default_factory=list)


class Engine:
    """One calibration instance for one sensor pair; not safe for concurrent steps."""

    def __init__(self, config: EngineConfig = EngineConfig()) -> None:
        self.config = config
        self.keyframer = Keyframer(
            config.reference_sensor,
            config.second_sensor,
            kf_trans=config.kf_trans,
            kf_rot=config.kf_rot,
            default_cov=default_covariance(config.sigma_t, config.sigma_r),
            adjoint_transport=config.adjoint_transport,
        )
        queue = SegmentQueue(config.pq_capacity)
        self.state = EngineState(theta=config.initial_guess, queue=queue)
        self.window = CandidateWindow(
            config.window_size, self._score, queue, config.max_entropy, config.policy
        )

    @property
    def queue(self) -> SegmentQueue:
        return self.state.queue

    def _score(self, pairs) -> tuple[float, int]:
        # candidate solves only score entropy; the reported theta is untouched
        est = solve(pairs, self.state.theta, self.config.solve_options)
        self.state.candidate_solves += 1
        return est.entropy, est.numerical_rank

    def step(self, m: RelativePoseMeasurement) -> list[ReportRow]:
        rows: list[ReportRow] = []
        for pair in self.keyframer.push(m):
            rows.extend(self._on_pair(pair, m.t))
        rows.extend(self._decay(m.t))
        self.state.events.extend(rows)
        return rows

    def finish(self) -> list[ReportRow]:
        """Flush the keyframer at end of stream."""
        rows: list[ReportRow] = []
        for pair in self.keyframer.flush():
            rows.extend(self._on_pair(pair, pair.t_end))
        self.state.events.extend(rows)
        return rows

    def _on_pair(self, pair: MotionPair, now: float) -> list[ReportRow]:
        event = self.window.push_pair(pair, now)
        if event.kind == "accumulating":
            return []
        worst = self.queue.worst()
        rows = [ReportRow(now, "entropy", (event.entropy, math.nan if worst is None else worst.entropy))]
        if event.kind == "swap_candidate":
            result = self.queue.admit(event.segment)
            if result.accepted:
                self.window.clear()
                evicted = -1 if result.evicted is None else result.evicted.index
                rows.append(
                    ReportRow(now, "swap_event", (evicted, result.inserted.entropy, self.state.solve_count + 1))
                )
                rows.extend(self._solve_queue(now))
        return rows

    def _decay(self, now: float) -> list[ReportRow]:
        removed = self.queue.decay_sweep(now, self.config.decay_rate)
        if not removed:
            return []
        rows = [ReportRow(now, "decay_event", (s.index, w)) for s, w in removed]
        if len(self.queue):
            rows.extend(self._solve_queue(now))
        else:
            self.state.consecutive_small_updates = 0
            self.state.converged = False
        return rows

    def _solve_queue(self, now: float) -> list[ReportRow]:
        st = self.state
        pairs = self.queue.pairs()
        if len(pairs) > self.config.max_solve_pairs:
            raise AssertionError("queue solve exceeds its size bound")
        est = solve(pairs, st.theta, self.config.solve_options)
        st.solve_count += 1
        st.solve_sizes.append(len(pairs))
        moved = float(np.linalg.norm(log(compose(inverse(st.theta), est.theta))))
        if moved < self.config.min_update:
            st.consecutive_small_updates += 1
        else:
            st.consecutive_small_updates = 0
        st.converged = st.consecutive_small_updates >= self.config.same_count
        st.theta = est.theta
        st.estimate = est
        return [
            ReportRow(now, "estimate", (*theta_components(est.theta), est.entropy)),
            ReportRow(now, "observability", (*est.obs_scores, est.numerical_rank)),
        ]

    def run(self, stream: Iterable[RelativePoseMeasurement]) -> tuple[EngineState, list[ReportRow]]:
        for m in stream:
            self.step(m)
        self.finish()
        return self.state, list(self.state.events)


def theta_components(theta: Pose) -> np.ndarray:
    """Translation (m) followed by rotation vector (rad)."""
    return np.concatenate([theta.t, theta.rotvec()])


def run(stream, config: EngineConfig = EngineConfig()) -> tuple[EngineState, list[ReportRow]]:
    return Engine(config).run(stream)


def with_overrides(config: EngineConfig, **overrides) -> EngineConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})


def queue_segments(state: EngineState) -> list[Segment]:
    return list(state.queue.segments)
