"""Online extrinsic self-calibration between two sensors from relative-pose streams."""

from .engine import Engine, EngineConfig, EngineState, run
from .estimator import CalibrationEstimate, SolveOptions, entropy_of, solve
from .geometry import Pose, compose, exp, interpolate, inverse, log
from .io import ReportRow, RelativePoseMeasurement, read_stream, write_report, write_stream
from .keyframer import Keyframer, MotionPair
from .simulator import ScenarioSpec, generate, null_space_oracle

__all__ = [
    "CalibrationEstimate",
    "Engine",
    "EngineConfig",
    "EngineState",
    "Keyframer",
    "MotionPair",
    "Pose",
    "RelativePoseMeasurement",
    "ReportRow",
    "ScenarioSpec",
    "SolveOptions",
    "compose",
    "entropy_of",
    "exp",
    "generate",
    "interpolate",
    "inverse",
    "log",
    "null_space_oracle",
    "read_stream",
    "run",
    "solve",
    "write_report",
    "write_stream",
]
