"""Acceptance checks, one test per criterion.

Each check prints a single ``criterion N: PASS|FAIL ...`` line. Run directly
(``python3 tests/test_acceptance.py``) for just the summary lines.
"""

import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from selfcal.cli import main as cli_main  # noqa: E402
from selfcal.engine import Engine, EngineConfig  # noqa: E402
from selfcal.estimator import (  # noqa: E402
    entropy_of,
    jacobian,
    normal_update,
    numeric_jacobian,
    stacked_system,
    tsvd_update,
)
from selfcal.geometry import Pose, compose, distance, exp, inverse, log  # noqa: E402
from selfcal.keyframer import MotionPair, default_covariance  # noqa: E402
from selfcal.queue import LOCAL_MIN, NAIVE  # noqa: E402
from selfcal.simulator import ScenarioSpec, generate, null_space_oracle  # noqa: E402

from conftest import exciting_pairs, random_pose  # noqa: E402

NOISE = (0.005, 0.0087)
TRUTH = Pose.from_rotvec([0.1, -0.2, 1.4], [0.3, -0.5, 0.2])
UNIT = np.ones(3) / math.sqrt(3.0)
# 0.2 m and 0.2 rad away from the truth
INIT = compose(TRUTH, Pose.from_rotvec(0.2 * UNIT, 0.2 * UNIT))
SEEDS = range(10)
TRANS_TOL, ROT_TOL = 0.01, 0.0087


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line, flush=True)
    return ok


def errors(theta, truth):
    err = log(compose(inverse(truth), theta))
    return float(np.linalg.norm(theta.t - truth.t)), float(np.linalg.norm(err[3:]))


def criterion_1():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        a, b, c = random_pose(rng), random_pose(rng), random_pose(rng)
        worst = max(
            worst,
            distance(compose(compose(a, b), c), compose(a, compose(b, c))),
            distance(compose(Pose.identity(), a), a),
            distance(compose(a, Pose.identity()), a),
            float(np.linalg.norm(log(compose(a, inverse(a))))),
            float(np.linalg.norm(log(exp(log(a))) - log(a))),
        )
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 1.0
    return report(1, ok, f"max axiom/round-trip error {worst:.2e} over 1000 samples in {elapsed:.2f} s")


def criterion_2():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        theta = random_pose(rng, max_angle=2.0)
        pair = MotionPair(0, 1, random_pose(rng, max_angle=1.2), random_pose(rng, max_angle=1.2), default_covariance())
        J, Jn = jacobian(theta, pair), numeric_jacobian(theta, pair)
        worst = max(worst, float(np.linalg.norm(J - Jn) / np.linalg.norm(Jn)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 1.0
    return report(2, ok, f"max relative Jacobian error {worst:.2e} over 100 samples in {elapsed:.2f} s")


def criterion_3():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        truth = random_pose(rng, max_angle=2.0)
        pairs = exciting_pairs(truth, 10, rng)
        rw, Jw = stacked_system(compose(truth, exp(rng.normal(size=6) * 0.1)), pairs)
        a, b = tsvd_update(Jw, rw, 0.0), normal_update(Jw, rw)
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    return report(3, worst <= 1e-10, f"max relative difference {worst:.2e} over 50 systems")


@functools.lru_cache(maxsize=None)
def figure8_run(seed, noisy, policy=LOCAL_MIN):
    stream = generate(ScenarioSpec(theta_true=TRUTH, noise=NOISE if noisy else (0.0, 0.0), seed=seed))
    start = time.perf_counter()
    engine = Engine(EngineConfig(initial_guess=INIT, policy=policy))
    state, _ = engine.run(stream)
    return state, time.perf_counter() - start


def criterion_4():
    state, elapsed = figure8_run(0, False)
    te, re = errors(state.theta, TRUTH)
    clean_ok = te < 1e-6 and re < 1e-6 and elapsed < 10.0
    worst_t = worst_r = slowest = 0.0
    for seed in SEEDS:
        state, elapsed = figure8_run(seed, True)
        t_err, r_err = errors(state.theta, TRUTH)
        worst_t, worst_r, slowest = max(worst_t, t_err), max(worst_r, r_err), max(slowest, elapsed)
    noisy_ok = worst_t < TRANS_TOL and worst_r < ROT_TOL and slowest < 10.0
    return report(
        4,
        clean_ok and noisy_ok,
        f"noise-free error {te:.1e} m / {re:.1e} rad; noisy worst {worst_t:.4f} m / {worst_r:.4f} rad "
        f"over {len(SEEDS)} seeds; slowest run {slowest:.1f} s",
    )


def criterion_5():
    truth = Pose.from_rotvec([0.0, 0.0, 0.3], [0.2, -0.1, 0.0])
    init = Pose.from_rotvec([0.0, 0.0, 0.2], [0.1, 0.0, 0.3])
    stream = generate(ScenarioSpec(trajectory="planar_arcs", theta_true=truth, noise=NOISE, seed=0))
    engine = Engine(EngineConfig(initial_guess=init))
    clamped = rank_ok = agree = True
    solves = 0
    for m in stream:
        before = engine.state.solve_count
        rows = engine.step(m)
        for row in rows:
            values = row.as_dict()
            if row.kind == "estimate":
                clamped &= values["tz"] == 0.3
            if row.kind == "observability":
                rank_ok &= values["numerical_rank"] <= 5
        if engine.state.solve_count > before:
            solves += 1
            oracle_rank, null = null_space_oracle(engine.queue.pairs(), engine.state.theta)
            agree &= oracle_rank == engine.state.estimate.numerical_rank
            agree &= any(abs(v[2]) > 0.99 for v in null)
    ok = clamped and rank_ok and agree and solves > 0
    return report(
        5, ok, f"{solves} queue solves; z held at 0.3: {clamped}; rank <= 5: {rank_ok}; oracle agrees: {agree}"
    )


def criterion_6():
    failures = []
    for seed in SEEDS:
        local, _ = figure8_run(seed, True, LOCAL_MIN)
        naive, _ = figure8_run(seed, True, NAIVE)
        count_ok = local.solve_count <= naive.solve_count
        entropy_ok = local.estimate.entropy <= naive.estimate.entropy + 1e-9
        if not (count_ok and entropy_ok):
            failures.append(
                f"seed {seed}: solves {local.solve_count} vs {naive.solve_count}, "
                f"entropy {local.estimate.entropy:.6f} vs {naive.estimate.entropy:.6f}"
            )
    detail = "local-minimum rule no worse on all seeds" if not failures else "; ".join(failures)
    return report(6, not failures, detail)


def criterion_7():
    t_drift, rate = 200.0, 0.04
    post = Pose(TRUTH.q, TRUTH.t + np.array([0.05, 0.0, 0.0]))
    spec = ScenarioSpec(duration=400.0, theta_true=TRUTH, drift_events=((t_drift, post),), noise=NOISE, seed=0)
    horizon = t_drift + math.log(rate / 0.001) / rate
    engine = Engine(EngineConfig(initial_guess=INIT, decay_rate=rate))
    stale = 0
    for m in generate(spec):
        engine.step(m)
        if m.t > horizon:
            stale += sum(s.created_at < t_drift for s in engine.queue.segments)
    engine.finish()
    te, re = errors(engine.state.theta, post)
    ok = stale == 0 and te < TRANS_TOL and re < ROT_TOL
    return report(
        7, ok, f"pre-drift segments after {horizon:.1f} s: {stale}; final error {te:.4f} m / {re:.4f} rad"
    )


def steady_step_time(duration):
    stream = generate(ScenarioSpec(duration=duration, theta_true=TRUTH, noise=NOISE, seed=0))
    engine = Engine(EngineConfig(initial_guess=INIT))
    times = []
    for m in stream:
        start = time.perf_counter()
        engine.step(m)
        elapsed = time.perf_counter() - start
        if engine.queue.full:
            times.append(elapsed)
    return float(np.mean(times)), max(engine.state.solve_sizes)


def criterion_8():
    # best of two timings per length damps scheduler noise
    short = min(steady_step_time(30.0) for _ in range(2))
    long = min(steady_step_time(300.0) for _ in range(2))
    bound = EngineConfig().max_solve_pairs
    growth = long[0] / short[0] - 1.0
    ok = max(short[1], long[1]) <= bound and growth < 0.2
    return report(
        8,
        ok,
        f"largest solve {max(short[1], long[1])} pairs (bound {bound}); steady per-step time "
        f"{1e3 * short[0]:.2f} ms -> {1e3 * long[0]:.2f} ms ({100 * growth:+.1f}%)",
    )


def criterion_9(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"scenario": {"duration": 20, "noise": [0.005, 0.0087], "seed": 9}}')
    outputs = []
    for k in range(2):
        stream, report_csv, cmp_csv = (tmp_path / f"s{k}.jsonl", tmp_path / f"r{k}.csv", tmp_path / f"c{k}.csv")
        codes = [
            cli_main(["simulate", "--config", str(cfg), "--out", str(stream)]),
            cli_main(["calibrate", "--input", str(stream), "--report", str(report_csv)]),
            cli_main(["compare-policies", "--input", str(stream), "--out", str(cmp_csv)]),
        ]
        outputs.append((codes, stream.read_bytes(), report_csv.read_bytes(), cmp_csv.read_bytes()))
    ok = outputs[0] == outputs[1] and outputs[0][0] == [0, 0, 0] and len(outputs[0][2]) > 1000
    return report(9, ok, f"stream, report and policy CSVs byte-identical across runs: {outputs[0] == outputs[1]}")


def criterion_10():
    value = entropy_of(np.eye(6))
    expected = 3.0 * math.log(2.0 * math.pi * math.e)
    return report(10, abs(value - expected) <= 1e-9, f"entropy_of(I6) = {value:.9f}, closed form {expected:.9f}")


@pytest.mark.parametrize(
    "check",
    [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_10],
    ids=lambda f: f.__name__,
)
def test_criterion(check, capsys):
    with capsys.disabled():
        ok = check()
    assert ok


def test_criterion_9(tmp_path, capsys):
    # the CLI's own summary lines stay captured; only the verdict is shown
    ok = criterion_9(tmp_path)
    captured = capsys.readouterr().out
    with capsys.disabled():
        print(captured.splitlines()[-1], flush=True)
    assert ok


if __name__ == "__main__":
    import tempfile

    checks = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]
    results = [check() for check in checks]
    with tempfile.TemporaryDirectory() as tmp:
        results.append(criterion_9(Path(tmp)))
    results.append(criterion_10())
    sys.exit(0 if all(results) else 1)
