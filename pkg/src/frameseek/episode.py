"""Bandwidth-budgeted episodes: query loop, belief updates, classification.

An episode fetches floor(B * T) frame scores from a FrameSource, one at a
time, each chosen by the greedy planner, recomputing the belief after every
fetch. Frames are then classified by thresholding the final belief at 0.5
(ties predict 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .data import QuantileBinner, discretize
from .hmm import EMPTY_OBSERVATIONS, HmmParams, forward_backward
from .policy import select_next_query

# floor(B * T) intends the exact rational product; a one-in-1e9 nudge undoes
# float rounding like 0.015 * 200 -> 2.9999999999999996
_FLOOR_EPS = 1e-9


class TransportError(RuntimeError):
    """A frame fetch failed; carries any partial episode result."""

    def __init__(self, message: str, partial: "EpisodeResult | None" = None):
        super().__init__(message)
        self.partial = partial


@runtime_checkable
class FrameSource(Protocol):
    """Where frame scores come from; every successful fetch is counted."""

    requests: int

    def frame_count(self) -> int: ...

    def fetch(self, t: int) -> float: ...


class ArrayFrameSource:
    """In-process FrameSource over a score vector."""

    def __init__(self, scores: np.ndarray):
        self._scores = np.asarray(scores, dtype=np.float64)
        if self._scores.ndim != 1 or self._scores.size < 1:
            raise ValueError("scores must be a nonempty vector")
        self.requests = 0

    def frame_count(self) -> int:
        return self._scores.size

    def fetch(self, t: int) -> float:
        if not 0 <= t < self._scores.size:
            raise ValueError(f"index out of bounds: frame {t} of {self._scores.size}")
        self.requests += 1
        return float(self._scores[t])


class ClipFrameSource:
    """Window [start, start + length) of another source, for clipped videos."""

    def __init__(self, base: FrameSource, start: int, length: int):
        if start < 0 or length < 1 or start + length > base.frame_count():
            raise ValueError("clip window out of range")
        self._base = base
        self._start = start
        self._length = length

    @property
    def requests(self) -> int:
        return self._base.requests

    def frame_count(self) -> int:
        return self._length

    def fetch(self, t: int) -> float:
        if not 0 <= t < self._length:
            raise ValueError(f"index out of bounds: frame {t} of {self._length}")
        return self._base.fetch(self._start + t)


@dataclass
class EpisodeResult:
    """Query log, final belief, thresholded predictions and accuracy."""

    queries: list[tuple[int, float, int]]
    final_belief: np.ndarray
    predictions: np.ndarray
    accuracy: float | None
    budget_used: int

    def to_json(self) -> str:
        doc = {
            "queries": [[t, score, obs] for t, score, obs in self.queries],
            "belief": self.final_belief.tolist(),
            "predictions": self.predictions.tolist(),
            "accuracy": self.accuracy,
            "budget_used": self.budget_used,
        }
        return json.dumps(doc) + "\n"


def query_budget(bandwidth_ratio: float, frame_count: int) -> int:
    """floor(B * T), capped at T."""
    if not 0.0 <= bandwidth_ratio <= 1.0:
        raise ValueError(f"bandwidth ratio must lie in [0, 1], got {bandwidth_ratio}")
    return min(int(math.floor(bandwidth_ratio * frame_count + _FLOOR_EPS)), frame_count)


def _classify(belief: np.ndarray, labels: np.ndarray | None) -> tuple[np.ndarray, float | None]:
    predictions = (belief >= 0.5).astype(np.int64)
    accuracy = None
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size != belief.size:
            raise ValueError(
                f"misaligned sequences: {labels.size} labels vs {belief.size} frames"
            )
        accuracy = float(np.mean(predictions == labels))
    return predictions, accuracy


def _result(queries, belief, labels) -> EpisodeResult:
    predictions, accuracy = _classify(belief, labels)
    return EpisodeResult(
        queries=list(queries),
        final_belief=belief,
        predictions=predictions,
        accuracy=accuracy,
        budget_used=len(queries),
    )


def run_episode_snapshots(
    params: HmmParams,
    binner: QuantileBinner,
    source: FrameSource,
    budgets: Sequence[int],
    labels: np.ndarray | None = None,
    loss_sink: list | None = None,
) -> list[EpisodeResult]:
    """Run one greedy episode to max(budgets), snapshotting along the way.

    Greedy selection never depends on the remaining budget, so the query
    sequence for a smaller budget is an exact prefix of a larger one; one
    trajectory therefore yields the EpisodeResult of every requested budget.
    Results are returned in the order of ``budgets``. ``loss_sink``, if
    given, collects each step's expected-loss vector for inspection.
    """
    frame_count = source.frame_count()
    budgets = [int(k) for k in budgets]
    if not budgets:
        return []
    for k in budgets:
        if not 0 <= k <= frame_count:
            raise ValueError(f"budget {k} out of range for {frame_count} frames")
    want = sorted(set(budgets))
    observations = EMPTY_OBSERVATIONS
    belief = forward_backward(params, frame_count, observations)
    queries: list[tuple[int, float, int]] = []
    by_budget: dict[int, EpisodeResult] = {}
    for k in range(max(want) + 1):
        if k in want:
            by_budget[k] = _result(queries, belief, labels)
        if k == max(want):
            break
        plan = select_next_query(params, frame_count, observations)
        if loss_sink is not None:
            loss_sink.append(plan.expected_losses)
        try:
            score = source.fetch(plan.next)
        except TransportError as exc:
            raise TransportError(str(exc), partial=_result(queries, belief, labels)) from exc
        obs = int(discretize(binner, score))
        observations = observations.added(plan.next, score, obs)
        belief = forward_backward(params, frame_count, observations)
        queries.append((plan.next, score, obs))
    return [by_budget[k] for k in budgets]


def run_episode(
    params: HmmParams,
    binner: QuantileBinner,
    source: FrameSource,
    bandwidth_ratio: float,
    labels: np.ndarray | None = None,
) -> EpisodeResult:
    """One greedy episode at bandwidth ratio B: exactly floor(B*T) fetches."""
    budget = query_budget(bandwidth_ratio, source.frame_count())
    return run_episode_snapshots(params, binner, source, [budget], labels)[0]


def uniform_query_indices(frame_count: int, budget: int) -> list[int]:
    """Evenly spaced indices round(i * T / (k + 1)), i = 1..k, deduplicated.

    A full budget (k = T) degenerates under the formula, so it queries every
    frame in order, matching the saturation semantics.
    """
    if budget >= frame_count:
        return list(range(frame_count))
    indices = []
    for i in range(1, budget + 1):
        t = int(math.floor(i * frame_count / (budget + 1) + 0.5))
        indices.append(min(max(t, 0), frame_count - 1))
    out: list[int] = []
    for t in indices:
        if t not in out:
            out.append(t)
    return out


def uniform_baseline_episode(
    params: HmmParams,
    binner: QuantileBinner,
    source: FrameSource,
    bandwidth_ratio: float,
    labels: np.ndarray | None = None,
) -> EpisodeResult:
    """Control episode: same budget, evenly spaced queries, same inference."""
    frame_count = source.frame_count()
    budget = query_budget(bandwidth_ratio, frame_count)
    observations = EMPTY_OBSERVATIONS
    belief = forward_backward(params, frame_count, observations)
    queries: list[tuple[int, float, int]] = []
    for t in uniform_query_indices(frame_count, budget):
        try:
            score = source.fetch(t)
        except TransportError as exc:
            raise TransportError(str(exc), partial=_result(queries, belief, labels)) from exc
        obs = int(discretize(binner, score))
        observations = observations.added(t, score, obs)
        belief = forward_backward(params, frame_count, observations)
        queries.append((t, score, obs))
    return _result(queries, belief, labels)
