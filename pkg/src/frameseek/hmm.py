"""Two-state / three-observation hidden Markov model over frame labels.

Hidden state Y_t in {0, 1} is the frame-of-interest label; the observation
X_t in {0, 1, 2} is the quantile bin of the frame's score. Beliefs are plain
float64 arrays p with p[t] = P(Y_t = 1 | evidence so far).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .kernels import posterior_kernel

N_LABELS = 2
N_OBSERVATIONS = 3

_ROW_SUM_TOL = 1e-12


def _check_stochastic(name: str, matrix: np.ndarray) -> None:
    if np.any(matrix < 0.0) or np.any(matrix > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    row_sums = matrix.sum(axis=-1)
    if np.any(np.abs(row_sums - 1.0) > _ROW_SUM_TOL):
        raise ValueError(f"{name} rows must sum to 1 (got {row_sums})")


@dataclass(frozen=True)
class HmmParams:
    """Full generative model: transition A, emission E, initial pi, score bins.

    ``transition[y, y2]`` is P(Y_{t+1}=y2 | Y_t=y), ``emission[y, x]`` is
    P(X_t=x | Y_t=y), ``initial`` the distribution of Y_1 and
    ``quantile_boundaries`` the two ascending score thresholds that map raw
    scores onto observation values.
    """

    transition: np.ndarray
    emission: np.ndarray
    initial: np.ndarray
    quantile_boundaries: tuple[float, float]

    def __post_init__(self) -> None:
        transition = np.ascontiguousarray(self.transition, dtype=np.float64)
        emission = np.ascontiguousarray(self.emission, dtype=np.float64)
        initial = np.ascontiguousarray(self.initial, dtype=np.float64)
        if transition.shape != (N_LABELS, N_LABELS):
            raise ValueError(f"transition must be {N_LABELS}x{N_LABELS}")
        if emission.shape != (N_LABELS, N_OBSERVATIONS):
            raise ValueError(f"emission must be {N_LABELS}x{N_OBSERVATIONS}")
        if initial.shape != (N_LABELS,):
            raise ValueError(f"initial must have length {N_LABELS}")
        _check_stochastic("transition", transition)
        _check_stochastic("emission", emission)
        _check_stochastic("initial", initial)
        b1, b2 = (float(b) for b in self.quantile_boundaries)
        if not b1 <= b2:
            raise ValueError(f"quantile boundaries must be ascending, got ({b1}, {b2})")
        for arr in (transition, emission, initial):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "emission", emission)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "quantile_boundaries", (b1, b2))

    def to_json(self) -> str:
        doc = {
            "transition": self.transition.tolist(),
            "emission": self.emission.tolist(),
            "initial": self.initial.tolist(),
            "quantile_boundaries": list(self.quantile_boundaries),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "HmmParams":
        doc = json.loads(text)
        try:
            return cls(
                transition=np.array(doc["transition"], dtype=np.float64),
                emission=np.array(doc["emission"], dtype=np.float64),
                initial=np.array(doc["initial"], dtype=np.float64),
                quantile_boundaries=tuple(doc["quantile_boundaries"]),
            )
        except KeyError as exc:
            raise ValueError(f"params document missing key {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "HmmParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class ObservationSet:
    """Sparse evidence: frame index -> (raw score, discrete observation).

    Instances are immutable; ``added`` returns an extended copy. Raw scores
    may be NaN when evidence is constructed directly from observation values
    (hypothetical queries, tests).
    """

    entries: Mapping[int, tuple[float, int]] = field(default_factory=dict)

    @classmethod
    def from_observations(cls, obs_map: Mapping[int, int]) -> "ObservationSet":
        return cls({int(t): (float("nan"), int(x)) for t, x in obs_map.items()})

    def added(self, t: int, score: float, obs: int) -> "ObservationSet":
        if t in self.entries:
            raise ValueError(f"frame already observed: {t}")
        if not 0 <= obs < N_OBSERVATIONS:
            raise ValueError(f"observation value out of range: {obs}")
        new = dict(self.entries)
        new[int(t)] = (float(score), int(obs))
        return ObservationSet(new)

    def observed(self, t: int) -> bool:
        return t in self.entries

    def items(self) -> Iterator[tuple[int, tuple[float, int]]]:
        return iter(sorted(self.entries.items()))

    def __len__(self) -> int:
        return len(self.entries)

    def likelihood_matrix(self, emission: np.ndarray, frame_count: int) -> np.ndarray:
        """(T, 2) per-frame evidence likelihoods; unit rows where unobserved."""
        lik = np.ones((frame_count, N_LABELS))
        for t, (_score, x) in self.entries.items():
            if not 0 <= t < frame_count:
                raise ValueError(f"index out of bounds: frame {t} of {frame_count}")
            lik[t, 0] = emission[0, x]
            lik[t, 1] = emission[1, x]
        return lik


EMPTY_OBSERVATIONS = ObservationSet()


def forward_backward(params: HmmParams, frame_count: int, observations: ObservationSet) -> np.ndarray:
    """Marginal P(Y_t = 1 | observations) for every frame, by scaled
    forward-backward. Unobserved frames contribute a unit emission factor."""
    if frame_count < 1:
        raise ValueError("frame count must be at least 1")
    lik = observations.likelihood_matrix(params.emission, frame_count)
    return posterior_kernel(params.transition, params.initial, lik)


def _as_label_array(seq: Sequence[int]) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("label sequences must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return arr


def estimate_transition(label_sequences: Iterable[Sequence[int]], smoothing: float = 1.0) -> np.ndarray:
    """Transition matrix from occurrence rates of adjacent label pairs,
    with additive smoothing."""
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    counts = np.zeros((N_LABELS, N_LABELS))
    for seq in label_sequences:
        labels = _as_label_array(seq)
        if labels.size < 2:
            continue
        for y in range(N_LABELS):
            for y2 in range(N_LABELS):
                counts[y, y2] += np.sum((labels[:-1] == y) & (labels[1:] == y2))
    if counts.sum() == 0:
        raise ValueError("insufficient data: need at least one sequence of length >= 2")
    row_totals = counts.sum(axis=1)
    if smoothing == 0 and np.any(row_totals == 0):
        raise ValueError("degenerate row: a label has no outgoing pairs and smoothing is 0")
    return (counts + smoothing) / (row_totals + N_LABELS * smoothing)[:, None]


def estimate_emission(
    label_sequences: Iterable[Sequence[int]],
    obs_sequences: Iterable[Sequence[int]],
    smoothing: float = 1.0,
) -> np.ndarray:
    """Emission matrix from label-observation co-occurrence rates, with
    additive smoothing."""
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    label_sequences = list(label_sequences)
    obs_sequences = list(obs_sequences)
    if len(label_sequences) != len(obs_sequences):
        raise ValueError("misaligned sequences: label and observation sequence counts differ")
    counts = np.zeros((N_LABELS, N_OBSERVATIONS))
    for labels_seq, obs_seq in zip(label_sequences, obs_sequences):
        labels = _as_label_array(labels_seq)
        obs = np.asarray(obs_seq, dtype=np.int64)
        if labels.shape != obs.shape:
            raise ValueError(
                f"misaligned sequences: {labels.size} labels vs {obs.size} observations"
            )
        if obs.size and (obs.min() < 0 or obs.max() >= N_OBSERVATIONS):
            raise ValueError("observations must lie in {0, 1, 2}")
        for y in range(N_LABELS):
            for x in range(N_OBSERVATIONS):
                counts[y, x] += np.sum((labels == y) & (obs == x))
    if counts.sum() == 0:
        raise ValueError("insufficient data: no aligned label/observation positions")
    row_totals = counts.sum(axis=1)
    if smoothing == 0 and np.any(row_totals == 0):
        raise ValueError("degenerate row: a label never occurs and smoothing is 0")
    return (counts + smoothing) / (row_totals + N_OBSERVATIONS * smoothing)[:, None]


def estimate_initial(label_sequences: Iterable[Sequence[int]]) -> np.ndarray:
    """Empirical label frequency over all training frames."""
    counts = np.zeros(N_LABELS)
    for seq in label_sequences:
        labels = _as_label_array(seq)
        counts += np.bincount(labels, minlength=N_LABELS)
    total = counts.sum()
    if total == 0:
        raise ValueError("insufficient data: no frames")
    return counts / total


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Stationary distribution of a 2x2 row-stochastic matrix."""
    a01 = transition[0, 1]
    a10 = transition[1, 0]
    if a01 + a10 == 0.0:
        # absorbing identity chain: every distribution is stationary
        return np.array([0.5, 0.5])
    return np.array([a10 / (a01 + a10), a01 / (a01 + a10)])
