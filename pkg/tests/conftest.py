"""Shared test helpers: random model draws and the enumeration oracle."""

from __future__ import annotations

import numpy as np

from frameseek.hmm import HmmParams, ObservationSet


def random_params(rng: np.random.Generator, concentration: float = 1.0) -> HmmParams:
    return HmmParams(
        transition=rng.dirichlet(np.full(2, concentration), size=2),
        emission=rng.dirichlet(np.full(3, concentration), size=2),
        initial=rng.dirichlet(np.full(2, concentration)),
        quantile_boundaries=(1.0 / 3.0, 2.0 / 3.0),
    )


def random_evidence(rng: np.random.Generator, frame_count: int, n_obs: int) -> ObservationSet:
    frames = rng.choice(frame_count, size=n_obs, replace=False)
    return ObservationSet.from_observations(
        {int(t): int(rng.integers(0, 3)) for t in frames}
    )


def enumeration_posterior(params: HmmParams, frame_count: int, observations: ObservationSet) -> np.ndarray:
    """Brute-force marginals: sum joint probabilities over all 2^T label
    sequences consistent with the evidence. Independent of forward-backward."""
    T = frame_count
    seqs = (np.arange(2**T)[:, None] >> np.arange(T)) & 1  # (2^T, T)
    probs = params.initial[seqs[:, 0]].copy()
    for t in range(1, T):
        probs *= params.transition[seqs[:, t - 1], seqs[:, t]]
    for t, (_score, x) in observations.items():
        probs *= params.emission[seqs[:, t], x]
    total = probs.sum()
    return np.array([probs[seqs[:, t] == 1].sum() / total for t in range(T)])
