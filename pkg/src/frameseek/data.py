"""Video records, score quantile binning, clipping, file IO and synthesis.

Labels and scores travel as JSON-lines files: one ``{"video_id": ...,
"labels": [...]}`` or ``{"video_id": ..., "scores": [...]}`` object per line.
Frame indices are 0-based everywhere in code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .hmm import HmmParams, N_OBSERVATIONS

# Synthetic scores encode the observation bin directly: bin k occupies
# [k/3, (k+1)/3), so these boundaries invert the encoding exactly.
SYNTHETIC_BOUNDARIES = (1.0 / 3.0, 2.0 / 3.0)


@dataclass
class VideoRecord:
    """One video's ground-truth labels and (optionally) its frame scores."""

    video_id: str
    labels: np.ndarray
    scores: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or self.labels.size < 1:
            raise ValueError(f"{self.video_id}: labels must be a nonempty vector")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError(f"{self.video_id}: labels must be 0 or 1")
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64)
            if self.scores.shape != self.labels.shape:
                raise ValueError(
                    f"{self.video_id}: misaligned sequences: "
                    f"{self.labels.size} labels vs {self.scores.size} scores"
                )

    @property
    def frame_count(self) -> int:
        return self.labels.size

    @property
    def has_interest(self) -> bool:
        return bool(self.labels.any())


@dataclass(frozen=True)
class QuantileBinner:
    """Two ascending score thresholds defining three observation bins."""

    boundaries: tuple[float, float]

    def __post_init__(self) -> None:
        b1, b2 = (float(b) for b in self.boundaries)
        if not b1 <= b2:
            raise ValueError(f"boundaries must be ascending, got ({b1}, {b2})")
        object.__setattr__(self, "boundaries", (b1, b2))


def compute_quantiles(scores: Sequence[float]) -> QuantileBinner:
    """Nearest-rank 1/3 and 2/3 empirical quantiles of the training scores."""
    arr = np.sort(np.asarray(scores, dtype=np.float64))
    n = arr.size
    if n < 3:
        raise ValueError(f"insufficient data: need at least 3 scores, got {n}")
    b1 = arr[int(np.ceil(n / 3)) - 1]
    b2 = arr[int(np.ceil(2 * n / 3)) - 1]
    return QuantileBinner((float(b1), float(b2)))


def discretize(binner: QuantileBinner, score) -> int | np.ndarray:
    """Bin index in {0, 1, 2}; bins are right-closed (score <= b1 -> 0)."""
    b = np.asarray(binner.boundaries)
    out = np.searchsorted(b, score, side="left")
    if np.isscalar(score) or np.ndim(score) == 0:
        return int(out)
    return out.astype(np.int64)


def clip_video(record: VideoRecord, max_len: int) -> list[VideoRecord]:
    """Split into consecutive clips of at most ``max_len`` frames.

    Clip ids are ``<video_id>#<k>`` with k counting from 0; concatenating the
    clips reproduces the original labels/scores.
    """
    if max_len < 1:
        raise ValueError("max_len must be positive")
    clips = []
    for k, start in enumerate(range(0, record.frame_count, max_len)):
        stop = min(start + max_len, record.frame_count)
        clips.append(
            VideoRecord(
                video_id=f"{record.video_id}#{k}",
                labels=record.labels[start:stop].copy(),
                scores=None if record.scores is None else record.scores[start:stop].copy(),
            )
        )
    return clips


def generate_synthetic(
    params: HmmParams, frame_count: int, rng_seed
) -> tuple[VideoRecord, np.ndarray]:
    """Sample one video from the generative model.

    Returns the record (labels + scores) and the sampled discrete
    observations. The score for bin k is (k + u)/3 with u ~ uniform[0, 1), so
    re-binning with SYNTHETIC_BOUNDARIES recovers the observation exactly.
    """
    if frame_count < 1:
        raise ValueError("frame count must be at least 1")
    rng = np.random.default_rng(rng_seed)
    a = params.transition
    labels = np.empty(frame_count, dtype=np.int64)
    u_labels = rng.random(frame_count)
    labels[0] = u_labels[0] < params.initial[1]
    for t in range(1, frame_count):
        labels[t] = u_labels[t] < a[labels[t - 1], 1]

    emission_cdf = np.cumsum(params.emission, axis=1)
    u_obs = rng.random(frame_count)
    obs = np.empty(frame_count, dtype=np.int64)
    for t in range(frame_count):
        obs[t] = np.searchsorted(emission_cdf[labels[t]], u_obs[t], side="right")
    obs = np.minimum(obs, N_OBSERVATIONS - 1)

    scores = (obs + rng.random(frame_count)) / 3.0
    # float rounding can land a score exactly on its lower bin edge; nudge up
    binner = QuantileBinner(SYNTHETIC_BOUNDARIES)
    rebinned = discretize(binner, scores)
    for t in np.nonzero(rebinned != obs)[0]:
        s = scores[t]
        while discretize(binner, s) != obs[t]:
            s = np.nextafter(s, 1.0)
        scores[t] = s

    record = VideoRecord(video_id=f"synthetic-{rng_seed}", labels=labels, scores=scores)
    return record, obs


PRESETS: dict[str, HmmParams] = {
    "persistent": HmmParams(
        transition=np.array([[0.98, 0.02], [0.04, 0.96]]),
        emission=np.array([[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]]),
        initial=np.array([2.0 / 3.0, 1.0 / 3.0]),
        quantile_boundaries=SYNTHETIC_BOUNDARIES,
    ),
}


def _read_jsonl(path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON line ({exc.msg})") from exc
            if not isinstance(doc, dict):
                raise ValueError(f"{path}:{lineno}: expected a JSON object")
            rows.append((lineno, doc))
    return rows


def load_labels(path) -> list[VideoRecord]:
    """Read a labels JSON-lines file into VideoRecords (scores unset)."""
    records = []
    seen: set[str] = set()
    for lineno, doc in _read_jsonl(path):
        try:
            video_id = doc["video_id"]
            labels = doc["labels"]
        except KeyError as exc:
            raise ValueError(f"{path}:{lineno}: missing key {exc}")
        if video_id in seen:
            raise ValueError(f"{path}:{lineno}: duplicate video_id {video_id!r}")
        seen.add(video_id)
        try:
            records.append(VideoRecord(video_id=video_id, labels=labels))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return records


def load_scores(path, records: list[VideoRecord]) -> list[VideoRecord]:
    """Attach scores from a scores JSON-lines file to existing records."""
    by_id = {record.video_id: record for record in records}
    for lineno, doc in _read_jsonl(path):
        try:
            video_id = doc["video_id"]
            scores = doc["scores"]
        except KeyError as exc:
            raise ValueError(f"{path}:{lineno}: missing key {exc}")
        record = by_id.get(video_id)
        if record is None:
            raise ValueError(f"{path}:{lineno}: unknown video_id {video_id!r}")
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != record.labels.shape:
            raise ValueError(
                f"{path}:{lineno}: misaligned sequences: {record.labels.size} labels "
                f"vs {scores.size} scores for {video_id!r}"
            )
        record.scores = scores
    return records


def load_score_table(path) -> dict[str, np.ndarray]:
    """Read a scores file standalone (server catalogs need no labels)."""
    table: dict[str, np.ndarray] = {}
    for lineno, doc in _read_jsonl(path):
        try:
            video_id = doc["video_id"]
            scores = np.asarray(doc["scores"], dtype=np.float64)
        except KeyError as exc:
            raise ValueError(f"{path}:{lineno}: missing key {exc}")
        if video_id in table:
            raise ValueError(f"{path}:{lineno}: duplicate video_id {video_id!r}")
        if scores.ndim != 1 or scores.size < 1:
            raise ValueError(f"{path}:{lineno}: scores must be a nonempty vector")
        table[video_id] = scores
    return table


def write_labels(path, records: Sequence[VideoRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({"video_id": record.video_id, "labels": record.labels.tolist()}))
            fh.write("\n")


def write_scores(path, records: Sequence[VideoRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            if record.scores is None:
                raise ValueError(f"{record.video_id}: no scores to write")
            fh.write(json.dumps({"video_id": record.video_id, "scores": record.scores.tolist()}))
            fh.write("\n")


def write_synthetic_dataset(
    params: HmmParams, num_videos: int, frame_count: int, seed: int, out_dir
) -> tuple[Path, Path, Path]:
    """Write labels.jsonl, scores.jsonl and the generating params.json."""
    if num_videos < 1:
        raise ValueError("num_videos must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).spawn(num_videos)
    records = []
    for i, seq in enumerate(seeds):
        record, _obs = generate_synthetic(params, frame_count, seq)
        record.video_id = f"v{i:05d}"
        records.append(record)
    labels_path = out / "labels.jsonl"
    scores_path = out / "scores.jsonl"
    params_path = out / "params.json"
    write_labels(labels_path, records)
    write_scores(scores_path, records)
    params.save(params_path)
    return labels_path, scores_path, params_path
