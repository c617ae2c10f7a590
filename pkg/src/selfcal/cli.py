"""Command-line driver: simulate streams, calibrate them, compare swap policies.

stdout carries ``key=value`` summary lines; stderr carries human messages.
Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace

import numpy as np

from .engine import EngineConfig, run, theta_components
from .estimator import EstimationError
from .geometry import LogBranchError, compose, inverse, log
from .io import StreamFormatError, ensure_parent, read_stream, write_report, write_stream
from .queue import LOCAL_MIN, NAIVE
from .simulator import ScenarioSpec, generate, null_space_oracle

# (flag, alias, config field, type, help)
TUNING_FLAGS = (
    ("--theta-eps-svd", "--tsvd-threshold", "tsvd_threshold", float, "relative TSVD truncation threshold"),
    ("--theta-sigma-max", "--max-entropy", "max_entropy", float, "admission gate on segment entropy (nats)"),
    ("--theta-pq", "--pq-capacity", "pq_capacity", int, "priority queue capacity (segments)"),
    ("--theta-meas", "--window-size", "window_size", int, "motion pairs per candidate window"),
    ("--theta-kf-trans", "--kf-trans", "kf_trans", float, "keyframe translation threshold (m)"),
    ("--theta-kf-rot", "--kf-rot", "kf_rot", float, "keyframe rotation threshold (rad)"),
    ("--theta-lambda", "--decay-rate", "decay_rate", float, "time decay rate (1/s)"),
    ("--theta-same", "--same-count", "same_count", int, "consecutive small updates to flag convergence"),
    ("--theta-min-update", "--min-update", "min_update", float, "update norm counted as small"),
)


class UsageError(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(obj, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return obj


def _scenario(cfg: dict) -> ScenarioSpec:
    try:
        return ScenarioSpec.from_dict(cfg.get("scenario", {}))
    except (TypeError, ValueError, KeyError) as err:
        raise UsageError(f"invalid scenario config: {err}") from err


def _engine_config(cfg: dict, args) -> EngineConfig:
    try:
        config = EngineConfig.from_dict(cfg.get("engine", {}))
        overrides = {field: getattr(args, field) for *_, field, _, _ in TUNING_FLAGS}
        return replace(config, **{k: v for k, v in overrides.items() if v is not None})
    except (TypeError, ValueError, KeyError) as err:
        raise UsageError(f"invalid engine config: {err}") from err


def _emit(**values) -> None:
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.9g}"
        elif isinstance(value, (bool, np.bool_)):
            value = str(bool(value)).lower()
        print(f"{key}={value}")


def cmd_simulate(args) -> int:
    spec = _scenario(_load_config(args.config))
    stream = generate(spec)
    write_stream(stream, ensure_parent(args.out))
    rank, null = null_space_oracle(stream, spec.theta_true, sensors=(spec.reference_sensor, spec.second_sensor))
    _emit(measurements=len(stream), duration=spec.duration, oracle_rank=rank, null_directions=len(null), out=args.out)
    return 0


def _read(path):
    try:
        return read_stream(path)
    except OSError as err:
        raise UsageError(f"cannot read stream {path}: {err}") from err


def cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    config = _engine_config(cfg, args)
    stream = _read(args.input)
    state, rows = run(stream, config)
    write_report(rows, ensure_parent(args.report))
    est = state.estimate
    values = dict(zip(("tx", "ty", "tz", "rx", "ry", "rz"), theta_components(state.theta).tolist()))
    _emit(
        **values,
        entropy=math.nan if est is None else est.entropy,
        rank=0 if est is None else est.numerical_rank,
        converged=state.converged,
        solve_count=state.solve_count,
    )
    if "scenario" in cfg:
        truth = _scenario(cfg).theta_at(stream[-1].t if stream else 0.0)
        err = log(compose(inverse(truth), state.theta))
        _emit(
            translation_error=float(np.linalg.norm(state.theta.t - truth.t)),
            rotation_error=float(np.linalg.norm(err[3:])),
        )
    return 0


def _trace(rows):
    out, count = [], 0
    for row in rows:
        if row.kind == "estimate":
            count += 1
            out.append((row.t, row.as_dict()["entropy"], count))
    return out


def policy_table(local_rows, naive_rows) -> list[tuple]:
    """Both estimate traces merged on time; each side carries its latest value forward."""
    events = sorted(
        [(t, 0, h, n) for t, h, n in _trace(local_rows)] + [(t, 1, h, n) for t, h, n in _trace(naive_rows)],
        key=lambda e: (e[0], e[1], e[3]),
    )
    latest = [(math.nan, 0), (math.nan, 0)]
    table = []
    for t, side, h, n in events:
        latest[side] = (h, n)
        row = (t, *latest[0], *latest[1])
        if table and table[-1][0] == t:
            table[-1] = row
        else:
            table.append(row)
    return table


def cmd_compare(args) -> int:
    config = _engine_config(_load_config(args.config), args)
    stream = _read(args.input)
    local_state, local_rows = run(stream, replace(config, policy=LOCAL_MIN))
    naive_state, naive_rows = run(stream, replace(config, policy=NAIVE))
    with open(ensure_parent(args.out), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("t", "local_entropy", "local_solve_count", "naive_entropy", "naive_solve_count"))
        for t, lh, ln, nh, nn in policy_table(local_rows, naive_rows):
            writer.writerow((f"{t:.9g}", "" if math.isnan(lh) else f"{lh:.9g}", ln, "" if math.isnan(nh) else f"{nh:.9g}", nn))

    def final(state):
        return math.nan if state.estimate is None else state.estimate.entropy

    _emit(
        local_solve_count=local_state.solve_count,
        naive_solve_count=naive_state.solve_count,
        local_entropy=final(local_state),
        naive_entropy=final(naive_state),
    )
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="selfcal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    defaults = EngineConfig()

    def tuning(p):
        group = p.add_argument_group("tuning overrides (take precedence over the config file)")
        for flag, alias, field, kind, text in TUNING_FLAGS:
            group.add_argument(
                flag, alias, dest=field, type=kind, default=None, metavar=field.upper(),
                help=f"{text} (default: {getattr(defaults, field)})",
            )

    p = sub.add_parser("simulate", help="generate a synthetic two-sensor stream")
    p.add_argument("--config", required=True, help="JSON file with a 'scenario' section")
    p.add_argument("--out", required=True, help="output JSONL stream")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run the calibration engine over a stream")
    p.add_argument("--input", required=True, help="JSONL measurement stream")
    p.add_argument("--config", help="JSON file with an optional 'engine' section")
    p.add_argument("--report", required=True, help="output CSV report")
    tuning(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compare-policies", help="run local-minimum and naive swap rules side by side")
    p.add_argument("--input", required=True, help="JSONL measurement stream")
    p.add_argument("--config", help="JSON file with an optional 'engine' section")
    p.add_argument("--out", required=True, help="output CSV")
    tuning(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (StreamFormatError, ValueError, OSError) as err:
        if isinstance(err, LogBranchError):
            print(f"numerical failure: {err}", file=sys.stderr)
            return 2
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (EstimationError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
