"""Greedy query selection by expected mean frame-wise cross entropy.

The planner scores every unobserved frame q by the expected value, under the
model's predictive distribution of X_q, of the mean binary cross entropy of
the belief after adding that observation, and requests the argmin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hmm import HmmParams, ObservationSet, forward_backward
from .kernels import PROB_FLOOR, expected_losses_kernel


@dataclass(frozen=True)
class QueryPlan:
    """Chosen next frame plus the full per-candidate expected-loss vector.

    ``expected_losses`` has length T; entries for already-observed frames are
    NaN. Ties resolve to the smallest frame index.
    """

    next: int
    expected_losses: np.ndarray


def expected_cross_entropy(belief: np.ndarray) -> float:
    """Mean frame-wise expected cross entropy of a belief vector, in nats.

    0 log 0 counts as 0; interior probabilities are clamped away from the
    endpoints before the logs, so the result is always finite.
    """
    p = np.asarray(belief, dtype=np.float64)
    pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    h = -(pc * np.log(pc) + (1.0 - pc) * np.log(1.0 - pc))
    h[(p <= 0.0) | (p >= 1.0)] = 0.0
    return float(h.mean())


def observation_predictive(params: HmmParams, p_q: float) -> np.ndarray:
    """P(X_q = x) when Y_q ~ Bernoulli(p_q): a mixture of the emission rows."""
    if not 0.0 <= p_q <= 1.0:
        raise ValueError(f"p_q must lie in [0, 1], got {p_q}")
    return (1.0 - p_q) * params.emission[0] + p_q * params.emission[1]


def _losses_for_candidates(
    params: HmmParams,
    frame_count: int,
    observations: ObservationSet,
    candidates: np.ndarray,
) -> np.ndarray:
    lik = observations.likelihood_matrix(params.emission, frame_count)
    belief = forward_backward(params, frame_count, observations)
    return expected_losses_kernel(
        params.transition, params.emission, params.initial, lik, candidates, belief
    )


def expected_loss_for_query(
    params: HmmParams,
    frame_count: int,
    observations: ObservationSet,
    q: int,
    current_belief: np.ndarray | None = None,
) -> float:
    """Expected post-query mean cross entropy for querying frame q.

    ``current_belief`` is accepted for callers that already computed it; the
    returned value is identical either way.
    """
    if not 0 <= q < frame_count:
        raise ValueError(f"index out of bounds: frame {q} of {frame_count}")
    if observations.observed(q):
        raise ValueError(f"frame already observed: {q}")
    losses = _losses_for_candidates(
        params, frame_count, observations, np.array([q], dtype=np.int64)
    )
    return float(losses[0])


def select_next_query(
    params: HmmParams, frame_count: int, observations: ObservationSet
) -> QueryPlan:
    """Evaluate every unobserved frame and pick the expected-loss argmin."""
    observed = np.zeros(frame_count, dtype=bool)
    for t, _entry in observations.items():
        if not 0 <= t < frame_count:
            raise ValueError(f"index out of bounds: frame {t} of {frame_count}")
        observed[t] = True
    candidates = np.nonzero(~observed)[0].astype(np.int64)
    if candidates.size == 0:
        raise ValueError("budget exceeds frames: every frame is already observed")
    losses = _losses_for_candidates(params, frame_count, observations, candidates)
    full = np.full(frame_count, np.nan)
    full[candidates] = losses
    # candidates ascend, so argmin's first-minimum rule breaks ties low
    best = candidates[int(np.argmin(losses))]
    return QueryPlan(next=int(best), expected_losses=full)
