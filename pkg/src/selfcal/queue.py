"""Informative-segment bookkeeping: rolling candidate window and bounded queue.

Segments are ordered by ``(-rank, entropy)``: a segment that constrains more
directions always outranks one that constrains fewer, and among equal ranks
lower entropy wins. Entropies of different rank live on subspaces of
different dimension and are not comparable on their own.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .keyframer import MotionPair

DECAY_FLOOR = 0.001

LOCAL_MIN = "local_min"
NAIVE = "naive"
POLICIES = (LOCAL_MIN, NAIVE)


@dataclass(frozen=True, eq=False)
class Segment:
    pairs: tuple[MotionPair, ...]
    entropy: float
    rank: int
    created_at: float
    index: int = -1

    @property
    def key(self) -> tuple[int, float]:
        return (-self.rank, self.entropy)


def decay_weight(created_at: float, now: float, rate: float) -> float:
    return rate * math.exp(-rate * (now - created_at))


def _key(rank: int, entropy: float) -> tuple[int, float]:
    return (-rank, entropy)


def admissible(segment: Segment, max_entropy: float) -> bool:
    return segment.rank > 0 and math.isfinite(segment.entropy) and segment.entropy < max_entropy


def should_swap(
    history: Sequence[Segment],
    worst_pq_entropy: float,
    max_entropy: float,
    worst_pq_rank: int = 6,
) -> Segment | None:
    """Return the middle of the last three windows iff it is a strict local
    minimum that also beats the worst queue entry and the entropy gate."""
    if len(history) < 3:
        return None
    prev, mid, cur = history[-3], history[-2], history[-1]
    if not (mid.key < prev.key and mid.key < cur.key):
        return None
    if not mid.key < _key(worst_pq_rank, worst_pq_entropy):
        return None
    return mid if admissible(mid, max_entropy) else None


def naive_swap(
    candidate: Segment,
    worst_pq_entropy: float,
    max_entropy: float,
    worst_pq_rank: int = 6,
) -> Segment | None:
    """Swap whenever the newest window beats the worst queue entry."""
    if candidate.key < _key(worst_pq_rank, worst_pq_entropy) and admissible(candidate, max_entropy):
        return candidate
    return None


@dataclass(frozen=True)
class SwapResult:
    inserted: Segment | None
    evicted: Segment | None = None

    @property
    def accepted(self) -> bool:
        return self.inserted is not None


class SegmentQueue:
    """Bounded set of the most informative segments."""

    def __init__(self, capacity: int = 10) -> None:
        if capacity < 1:
            raise ValueError("queue capacity must be positive")
        self.capacity = capacity
        self.segments: list[Segment] = []
        self._next_index = 0

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def full(self) -> bool:
        return len(self.segments) >= self.capacity

    def worst(self) -> Segment | None:
        if not self.segments:
            return None
        # max (-rank, entropy); equal keys evict the older segment
        return max(self.segments, key=lambda s: (s.key, -s.created_at))

    def pairs(self) -> list[MotionPair]:
        return [p for s in self.segments for p in s.pairs]

    def admit(self, segment: Segment) -> SwapResult:
        evicted = None
        if self.full:
            evicted = self.worst()
            if not segment.key < evicted.key:
                return SwapResult(None)
            self.segments.remove(evicted)
        stored = Segment(segment.pairs, segment.entropy, segment.rank, segment.created_at, self._next_index)
        self._next_index += 1
        self.segments.append(stored)
        return SwapResult(stored, evicted)

    def decay_sweep(self, now: float, rate: float) -> list[tuple[Segment, float]]:
        """Drop segments whose decay weight fell below the floor; idempotent at fixed ``now``."""
        if rate <= 0.0:
            raise ValueError("decay rate must be positive")
        removed, kept = [], []
        for s in self.segments:
            w = decay_weight(s.created_at, now, rate)
            (removed if w < DECAY_FLOOR else kept).append((s, w))
        self.segments = [s for s, _ in kept]
        return removed


@dataclass(frozen=True)
class WindowEvent:
    kind: str  # accumulating | evaluated | swap_candidate
    candidate: Segment | None = None
    segment: Segment | None = None

    @property
    def entropy(self) -> float:
        return math.nan if self.candidate is None else self.candidate.entropy


Scorer = Callable[[Sequence[MotionPair]], tuple[float, int]]


@dataclass
class CandidateWindow:
    """Rolling window of the newest pairs, scored each time it is full.

    While the queue has room every admissible full window is offered
    directly; once it is full, the configured policy decides.
    """

    capacity: int
    scorer: Scorer
    queue: SegmentQueue
    max_entropy: float = 15.0
    policy: str = LOCAL_MIN
    pairs: deque = field(init=False)
    history: deque = field(init=False)
    evaluations: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"unknown swap policy {self.policy!r}")
        self.pairs = deque(maxlen=self.capacity)
        self.history = deque(maxlen=3)

    def push_pair(self, pair: MotionPair, now: float) -> WindowEvent:
        self.pairs.append(pair)
        if len(self.pairs) < self.capacity:
            return WindowEvent("accumulating")
        snapshot = tuple(self.pairs)
        entropy, rank = self.scorer(snapshot)
        self.evaluations += 1
        candidate = Segment(snapshot, entropy, rank, snapshot[-1].t_end)
        self.history.append(candidate)

        if not self.queue.full:
            chosen = candidate if admissible(candidate, self.max_entropy) else None
        else:
            worst = self.queue.worst()
            if self.policy == LOCAL_MIN:
                chosen = should_swap(self.history, worst.entropy, self.max_entropy, worst.rank)
            else:
                chosen = naive_swap(candidate, worst.entropy, self.max_entropy, worst.rank)
        if chosen is None:
            return WindowEvent("evaluated", candidate)
        return WindowEvent("swap_candidate", candidate, chosen)

    def clear(self) -> None:
        """Forget window contents so queued pairs are never reused by later candidates."""
        self.pairs.clear()
        self.history.clear()
