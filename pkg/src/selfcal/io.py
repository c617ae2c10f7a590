"""Measurement streams (JSONL in) and report time series (CSV out)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import Pose


class StreamFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RelativePoseMeasurement:
    """Motion of one sensor frame between its previous sample and this one.

    ``cov`` is a 6x6 covariance in ``[rho; phi]`` twist coordinates, or None
    when the source did not provide one (the estimator substitutes a default).
    """

    t: float
    sensor_id: str
    delta: Pose
    cov: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise ValueError(f"timestamp must be finite and non-negative, got {self.t}")
        if self.cov is not None:
            cov = np.array(self.cov, dtype=float).reshape(6, 6)
            check_covariance(cov)
            cov.flags.writeable = False
            object.__setattr__(self, "cov", cov)


def check_covariance(cov: np.ndarray) -> None:
    if cov.shape != (6, 6) or not np.all(np.isfinite(cov)):
        raise ValueError("covariance must be a finite 6x6 matrix")
    if np.max(np.abs(cov - cov.T)) > 1e-9:
        raise ValueError("covariance is not symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive-definite") from None


def measurement_from_dict(obj: dict) -> RelativePoseMeasurement:
    cov = obj.get("cov")
    if cov is not None:
        cov = np.asarray(cov, dtype=float)
        if cov.size != 36:
            raise ValueError("cov must hold 36 values")
    return RelativePoseMeasurement(
        t=float(obj["t"]),
        sensor_id=str(obj["sensor"]),
        delta=Pose(np.asarray(obj["q"], dtype=float), np.asarray(obj["p"], dtype=float)),
        cov=None if cov is None else cov.reshape(6, 6),
    )


def measurement_to_dict(m: RelativePoseMeasurement) -> dict:
    obj = {"t": m.t, "sensor": m.sensor_id, "q": m.delta.q.tolist(), "p": m.delta.t.tolist()}
    if m.cov is not None:
        obj["cov"] = m.cov.reshape(-1).tolist()
    return obj


def read_stream(path) -> list[RelativePoseMeasurement]:
    """Parse a JSONL measurement file, enforcing per-sensor monotone time."""
    out = []
    last_t: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                m = measurement_from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as err:
                raise StreamFormatError(f"{path}:{lineno}: malformed measurement: {err}") from err
            prev = last_t.get(m.sensor_id)
            if prev is not None and m.t <= prev:
                raise StreamFormatError(
                    f"{path}:{lineno}: timestamps not increasing for sensor "
                    f"{m.sensor_id!r}: t={m.t!r} after t={prev!r}"
                )
            last_t[m.sensor_id] = m.t
            out.append(m)
    return out


def write_stream(measurements: Iterable[RelativePoseMeasurement], path) -> None:
    # json emits the shortest repr that round-trips each float exactly
    with open(path, "w", encoding="utf-8") as fh:
        for m in measurements:
            fh.write(json.dumps(measurement_to_dict(m)) + "\n")


REPORT_SCHEMAS: dict[str, tuple[str, ...]] = {
    "estimate": ("tx", "ty", "tz", "rx", "ry", "rz", "entropy"),
    "entropy": ("candidate_entropy", "worst_pq_entropy"),
    "swap_event": ("evicted_index", "inserted_entropy", "pq_solve_count"),
    "decay_event": ("segment_index", "weight"),
    "observability": ("obs_tx", "obs_ty", "obs_tz", "obs_rx", "obs_ry", "obs_rz", "numerical_rank"),
}

REPORT_COLUMNS: tuple[str, ...] = ("t", "kind") + tuple(
    name for names in REPORT_SCHEMAS.values() for name in names
)


@dataclass(frozen=True)
class ReportRow:
    t: float
    kind: str
    payload: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        names = REPORT_SCHEMAS.get(self.kind)
        if names is None:
            raise ValueError(f"unknown report kind {self.kind!r}")
        if len(self.payload) != len(names):
            raise ValueError(f"{self.kind} rows carry {len(names)} values, got {len(self.payload)}")
        object.__setattr__(self, "payload", tuple(float(v) for v in self.payload))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(REPORT_SCHEMAS[self.kind], self.payload))


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def write_report(rows: Sequence[ReportRow], path) -> None:
    """One CSV for all kinds; columns not used by a row's kind stay empty."""
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as err:
        raise OSError(f"cannot write report to {path}: {err}") from err
    with fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            values = row.as_dict()
            writer.writerow(
                [_fmt(row.t), row.kind]
                + [_fmt(values[c]) if c in values else "" for c in REPORT_COLUMNS[2:]]
            )


def read_report(path) -> list[ReportRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            kind = rec["kind"]
            rows.append(
                ReportRow(float(rec["t"]), kind, tuple(float(rec[n]) for n in REPORT_SCHEMAS[kind]))
            )
    return rows


def ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
