import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfcal.geometry import Pose
from selfcal.keyframer import MotionPair, default_covariance
from selfcal.queue import (
    LOCAL_MIN,
    NAIVE,
    CandidateWindow,
    Segment,
    SegmentQueue,
    decay_weight,
    naive_swap,
    should_swap,
)


def dummy_pair(t):
    return MotionPair(t - 0.1, t, Pose.identity(), Pose.identity(), default_covariance())


def seg(entropy, rank=6, created_at=0.0):
    return Segment((dummy_pair(created_at + 0.1),), entropy, rank, created_at)


def history(*entropies):
    return [seg(h, created_at=float(i)) for i, h in enumerate(entropies)]


class ScriptedScorer:
    def __init__(self, entropies, rank=6):
        self.entropies = list(entropies)
        self.rank = rank
        self.calls = 0

    def __call__(self, pairs):
        self.calls += 1
        return self.entropies.pop(0), self.rank


def full_queue(entropies, rank=6):
    q = SegmentQueue(len(entropies))
    for i, h in enumerate(entropies):
        q.admit(seg(h, rank, float(i)))
    return q


def test_nine_pushes_accumulate_without_solving():
    scorer = ScriptedScorer([])
    win = CandidateWindow(10, scorer, SegmentQueue(10))
    kinds = [win.push_pair(dummy_pair(0.1 * k), 0.1 * k).kind for k in range(1, 10)]
    assert kinds == ["accumulating"] * 9 and scorer.calls == 0


def test_tenth_push_evaluates_once():
    scorer = ScriptedScorer([20.0])
    # a 20-nat window fails the admission gate, so nothing is offered
    win = CandidateWindow(10, scorer, SegmentQueue(10))
    events = [win.push_pair(dummy_pair(0.1 * k), 0.1 * k) for k in range(1, 11)]
    assert events[-1].kind == "evaluated" and events[-1].entropy == 20.0
    assert scorer.calls == 1 and win.evaluations == 1


def test_local_minimum_emits_the_middle_snapshot():
    scorer = ScriptedScorer([26.0, 24.0, 25.0])
    win = CandidateWindow(10, scorer, full_queue([30.0, 10.0]), max_entropy=40.0)
    events = [win.push_pair(dummy_pair(0.1 * k), 0.1 * k) for k in range(1, 13)]
    assert [e.kind for e in events[-3:]] == ["evaluated", "evaluated", "swap_candidate"]
    chosen = events[-1].segment
    assert chosen.entropy == 24.0
    # the snapshot that scored 24 ends at the 11th pair
    assert chosen.pairs[-1].t_end == pytest.approx(1.1) and len(chosen.pairs) == 10


def test_fill_phase_offers_every_admissible_window():
    scorer = ScriptedScorer([5.0, 16.0])
    win = CandidateWindow(2, scorer, SegmentQueue(3), max_entropy=15.0)
    win.push_pair(dummy_pair(0.1), 0.1)
    assert win.push_pair(dummy_pair(0.2), 0.2).kind == "swap_candidate"
    assert win.push_pair(dummy_pair(0.3), 0.3).kind == "evaluated"


def test_naive_policy_swaps_on_any_improvement():
    scorer = ScriptedScorer([28.0])
    win = CandidateWindow(1, scorer, full_queue([30.0]), max_entropy=40.0, policy=NAIVE)
    assert win.push_pair(dummy_pair(0.1), 0.1).kind == "swap_candidate"


@pytest.mark.parametrize(
    "entropies, worst, expected",
    [
        ((28.0, 27.0, 26.0), 30.0, None),
        ((26.0, 24.0, 25.0), 30.0, 24.0),
        ((26.0, 24.0, 25.0), 23.0, None),
        ((26.0, 24.0, 24.0), 30.0, None),
        ((24.0, 24.0, 25.0), 30.0, None),
        ((26.0, 24.0, 25.0), 24.0, None),
    ],
)
def test_should_swap_examples(entropies, worst, expected):
    out = should_swap(history(*entropies), worst, max_entropy=40.0)
    assert (out and out.entropy) == expected


def test_should_swap_respects_gate_and_history_length():
    assert should_swap(history(26.0, 24.0, 25.0), 30.0, max_entropy=15.0) is None
    assert should_swap(history(26.0, 24.0), 30.0, max_entropy=40.0) is None


def test_should_swap_rank_dominance():
    h = [seg(26.0, 5), seg(24.0, 6), seg(25.0, 5)]
    # rank 6 beats a rank-5 worst entry despite its higher entropy
    assert should_swap(h, 10.0, 40.0, worst_pq_rank=5).entropy == 24.0
    assert should_swap(h, 30.0, 40.0, worst_pq_rank=6).entropy == 24.0
    low = [seg(26.0), seg(-50.0, 5), seg(25.0)]
    assert should_swap(low, 30.0, 40.0, worst_pq_rank=6) is None


def test_naive_swap_examples():
    assert naive_swap(seg(27.0), 30.0, 40.0).entropy == 27.0
    assert naive_swap(seg(30.0), 30.0, 40.0) is None


@settings(max_examples=200)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-60, 60), st.booleans())
def test_monotone_histories_never_swap(values, worst, increasing):
    values = sorted(values, reverse=not increasing)
    assert should_swap(history(*values), worst, max_entropy=100.0) is None


def test_admit_into_non_full_queue():
    q = full_queue([10.0, 11.0, 12.0])
    q.capacity = 10
    result = q.admit(seg(5.0))
    assert result.accepted and result.evicted is None and len(q) == 4


def test_admit_evicts_worst():
    q = full_queue([20.0, 30.0, 25.0])
    result = q.admit(seg(24.0, created_at=9.0))
    assert result.evicted.entropy == 30.0
    assert sorted(s.entropy for s in q.segments) == [20.0, 24.0, 25.0]


def test_admit_rejects_lower_rank_into_full_rank_queue():
    q = full_queue([20.0, 30.0])
    assert not q.admit(seg(-100.0, rank=5)).accepted
    assert len(q) == 2


def test_eviction_tie_goes_to_older_segment():
    q = SegmentQueue(2)
    q.admit(seg(30.0, created_at=5.0))
    q.admit(seg(30.0, created_at=1.0))
    assert q.worst().created_at == 1.0
    assert q.admit(seg(10.0, created_at=9.0)).evicted.created_at == 1.0


def test_indices_are_sequential():
    q = full_queue([1.0, 2.0, 3.0])
    assert [s.index for s in q.segments] == [0, 1, 2]


@settings(max_examples=100)
@given(st.lists(st.floats(-40, 40), min_size=3, max_size=3), st.lists(st.floats(-40, 40), max_size=20))
def test_swaps_never_worsen_the_worst_entry(initial, candidates):
    q = full_queue(initial)
    for i, h in enumerate(candidates):
        before = max(s.entropy for s in q.segments)
        q.admit(seg(h, created_at=10.0 + i))
        assert len(q) <= q.capacity
        assert max(s.entropy for s in q.segments) <= before


def test_decay_weight_values():
    assert decay_weight(0.0, 0.0, 0.04) == pytest.approx(0.04)
    assert decay_weight(0.0, 50.0, 0.04) == pytest.approx(0.04 * math.exp(-2.0))
    assert decay_weight(0.0, 50.0, 0.04) == pytest.approx(0.00541, abs=5e-6)


@pytest.mark.parametrize(
    "age, kept",
    [(0.0, True), (50.0, True), (math.log(40) / 0.04 - 1e-6, True), (math.log(40) / 0.04 + 1e-6, False)],
)
def test_decay_sweep_threshold(age, kept):
    q = SegmentQueue(3)
    q.admit(seg(1.0, created_at=100.0))
    removed = q.decay_sweep(100.0 + age, 0.04)
    assert (len(q) == 1) == kept and (len(removed) == 0) == kept


def test_decay_crossing_time_is_about_92_seconds():
    assert math.log(40) / 0.04 == pytest.approx(92.22, abs=0.01)


def test_decay_sweep_idempotent_and_validated():
    q = full_queue([1.0, 2.0, 3.0])
    q.segments[0] = Segment(q.segments[0].pairs, 1.0, 6, -500.0, 0)
    assert len(q.decay_sweep(10.0, 0.04)) == 1
    assert q.decay_sweep(10.0, 0.04) == [] and len(q) == 2
    with pytest.raises(ValueError):
        q.decay_sweep(10.0, 0.0)


def test_window_clear_forgets_history():
    win = CandidateWindow(1, ScriptedScorer([3.0]), SegmentQueue(2))
    win.push_pair(dummy_pair(0.1), 0.1)
    win.clear()
    assert len(win.pairs) == 0 and len(win.history) == 0


def test_unknown_policy_rejected():
    with pytest.raises(ValueError):
        CandidateWindow(3, ScriptedScorer([]), SegmentQueue(2), policy="greedy")
