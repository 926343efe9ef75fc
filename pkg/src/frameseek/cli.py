"""Command-line entry points: train, eval, query, synth, serve.

``eval`` produces the accuracy-versus-bandwidth sweep as CSV; ``query`` dumps
a single inspectable episode; ``synth`` writes a reproducible synthetic
dataset; ``serve`` runs the NDJSON frame server.
"""

from __future__ import annotations

import argparse
import json
import math
import signal
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import (
    PRESETS,
    QuantileBinner,
    VideoRecord,
    clip_video,
    compute_quantiles,
    discretize,
    load_labels,
    load_score_table,
    load_scores,
    write_synthetic_dataset,
)
from .episode import (
    ArrayFrameSource,
    ClipFrameSource,
    TransportError,
    query_budget,
    run_episode,
    run_episode_snapshots,
    uniform_baseline_episode,
)
from .hmm import (
    HmmParams,
    estimate_emission,
    estimate_initial,
    estimate_transition,
    stationary_distribution,
)
from .server import RemoteFrameSource, ServerCatalog, serve

DEFAULT_GRID = "0:0.1:0.005"
DEFAULT_MAX_CLIP_LEN = 300

_GRID_EPS = 1e-9


def parse_grid(spec: str) -> list[float]:
    """Parse "start:stop:step" (endpoints inclusive within 1e-9) or one value."""
    parts = spec.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"bad grid spec {spec!r}: want start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if stop < start:
        raise ValueError(f"bad grid spec {spec!r}: stop < start")
    if step <= 0:
        if math.isclose(start, stop):
            return [round(start, 10)]
        raise ValueError(f"bad grid spec {spec!r}: step must be positive")
    values = []
    i = 0
    while True:
        value = start + i * step
        if value > stop + _GRID_EPS:
            break
        values.append(round(value, 10))
        i += 1
    return values


def parse_address(spec: str) -> tuple[str, int]:
    host, sep, port = spec.rpartition(":")
    if not sep or not host:
        raise ValueError(f"bad address {spec!r}: want host:port")
    return host, int(port)


@dataclass
class SweepResult:
    """Mean accuracy per bandwidth ratio over a fixed evaluation set."""

    bandwidth: list[float]
    mean_accuracy: list[float]
    episodes: int
    uniform_accuracy: list[float] | None = None

    def __post_init__(self) -> None:
        if any(b2 <= b1 for b1, b2 in zip(self.bandwidth, self.bandwidth[1:])):
            raise ValueError("bandwidth ratios must be strictly increasing")
        if any(not 0.0 <= a <= 1.0 for a in self.mean_accuracy):
            raise ValueError("mean accuracy must lie in [0, 1]")

    def to_csv(self) -> str:
        header = "bandwidth_ratio,mean_accuracy,episodes"
        if self.uniform_accuracy is not None:
            header += ",uniform_mean_accuracy"
        lines = [header]
        for i, (b, acc) in enumerate(zip(self.bandwidth, self.mean_accuracy)):
            row = f"{b},{acc},{self.episodes}"
            if self.uniform_accuracy is not None:
                row += f",{self.uniform_accuracy[i]}"
            lines.append(row)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise ValueError("empty CSV")
        header = lines[0].split(",")
        if header[:3] != ["bandwidth_ratio", "mean_accuracy", "episodes"]:
            raise ValueError(f"unexpected CSV header: {lines[0]!r}")
        has_uniform = len(header) == 4
        bandwidth, accuracy, uniform = [], [], []
        episodes = None
        for line in lines[1:]:
            cells = line.split(",")
            bandwidth.append(float(cells[0]))
            accuracy.append(float(cells[1]))
            row_episodes = int(cells[2])
            if episodes is None:
                episodes = row_episodes
            elif episodes != row_episodes:
                raise ValueError("episode count varies across rows")
            if has_uniform:
                uniform.append(float(cells[3]))
        return cls(
            bandwidth=bandwidth,
            mean_accuracy=accuracy,
            episodes=0 if episodes is None else episodes,
            uniform_accuracy=uniform if has_uniform else None,
        )


# ---------------------------------------------------------------------------
# shared loading helpers
# ---------------------------------------------------------------------------


def _load_eval_videos(labels_path, scores_path) -> list[VideoRecord]:
    records = load_labels(labels_path)
    if scores_path is not None:
        load_scores(scores_path, records)
    qualifying = [r for r in records if r.has_interest]
    if not qualifying:
        raise ValueError(f"{labels_path}: no videos with a frame of interest")
    return qualifying


def _clip_plan(records: list[VideoRecord], max_clip_len: int):
    """Clips plus (source video, start offset) bookkeeping for remote fetch."""
    clips, origins = [], []
    for record in records:
        for k, clip in enumerate(clip_video(record, max_clip_len)):
            clips.append(clip)
            origins.append((record.video_id, k * max_clip_len))
    return clips, origins


# ---------------------------------------------------------------------------
# sweep engine
# ---------------------------------------------------------------------------


def _eval_one_clip(task) -> tuple[list[float], list[float] | None, int]:
    (params, binner, labels, scores, server_spec, grid, baseline) = task
    frame_count = labels.size
    budgets = [query_budget(b, frame_count) for b in grid]

    def make_source():
        if scores is not None:
            return ArrayFrameSource(scores), None
        address, video_id, start = server_spec
        remote = RemoteFrameSource(address, video_id)
        return ClipFrameSource(remote, start, frame_count), remote

    source, remote = make_source()
    try:
        snapshots = run_episode_snapshots(params, binner, source, budgets, labels)
        greedy = [result.accuracy for result in snapshots]
        uniform = None
        if baseline:
            uniform = [
                uniform_baseline_episode(params, binner, source, b, labels).accuracy
                for b in grid
            ]
    finally:
        if remote is not None:
            remote.close()
    return greedy, uniform, frame_count


def run_sweep(
    params: HmmParams,
    binner: QuantileBinner,
    clips: list[VideoRecord],
    grid: list[float],
    baseline: bool = False,
    jobs: int = 1,
    frame_weighted: bool = False,
    server_address: tuple[str, int] | None = None,
    origins: list[tuple[str, int]] | None = None,
) -> SweepResult:
    tasks = []
    for i, clip in enumerate(clips):
        if server_address is None:
            if clip.scores is None:
                raise ValueError(f"{clip.video_id}: no scores available for evaluation")
            scores, spec = clip.scores, None
        else:
            video_id, start = origins[i]
            scores, spec = None, (server_address, video_id, start)
        tasks.append((params, binner, clip.labels, scores, spec, grid, baseline))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_eval_one_clip, tasks))
    else:
        results = [_eval_one_clip(task) for task in tasks]

    greedy = np.array([r[0] for r in results])  # (clips, grid)
    frames = np.array([r[2] for r in results], dtype=np.float64)
    weights = frames / frames.sum() if frame_weighted else np.full(len(clips), 1.0 / len(clips))
    mean_accuracy = (greedy * weights[:, None]).sum(axis=0)
    uniform_accuracy = None
    if baseline:
        uniform = np.array([r[1] for r in results])
        uniform_accuracy = list((uniform * weights[:, None]).sum(axis=0))
    return SweepResult(
        bandwidth=list(grid),
        mean_accuracy=list(mean_accuracy),
        episodes=len(clips),
        uniform_accuracy=uniform_accuracy,
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    records = load_labels(args.labels)
    load_scores(args.scores, records)
    qualifying = [r for r in records if r.has_interest]
    if not qualifying:
        raise ValueError("no frames of interest in training set")
    for record in qualifying:
        if record.scores is None:
            raise ValueError(f"{record.video_id}: labels present but no scores")

    pooled = np.concatenate([r.scores for r in qualifying])
    if args.boundaries is not None:
        b1, b2 = (float(x) for x in args.boundaries.split(","))
        binner = QuantileBinner((b1, b2))
    else:
        binner = compute_quantiles(pooled)

    label_seqs = [r.labels for r in qualifying]
    obs_seqs = [discretize(binner, r.scores) for r in qualifying]
    transition = estimate_transition(label_seqs, smoothing=args.smoothing)
    emission = estimate_emission(label_seqs, obs_seqs, smoothing=args.smoothing)
    if args.initial == "stationary":
        initial = stationary_distribution(transition)
    else:
        initial = estimate_initial(label_seqs)
    params = HmmParams(
        transition=transition,
        emission=emission,
        initial=initial,
        quantile_boundaries=binner.boundaries,
    )
    params.save(args.out)
    print(f"wrote {args.out} ({len(qualifying)} training videos, {pooled.size} frames)")
    return 0


def cmd_eval(args) -> int:
    params = HmmParams.load(args.params)
    binner = QuantileBinner(params.quantile_boundaries)
    grid = parse_grid(args.grid)
    server_address = parse_address(args.server) if args.server else None
    if server_address is None and args.scores is None:
        raise ValueError("eval needs --scores or --server")

    videos = _load_eval_videos(args.labels, args.scores if server_address is None else None)
    clips, origins = _clip_plan(videos, args.max_clip_len)
    result = run_sweep(
        params,
        binner,
        clips,
        grid,
        baseline=args.baseline == "uniform",
        jobs=args.jobs,
        frame_weighted=args.frame_weighted,
        server_address=server_address,
        origins=origins,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(result.to_csv())
    if args.gnuplot:
        with open(args.gnuplot, "w", encoding="utf-8") as fh:
            for b, acc in zip(result.bandwidth, result.mean_accuracy):
                fh.write(f"{b} {acc}\n")
    print(f"wrote {args.out} ({result.episodes} clips x {len(grid)} bandwidth ratios)")
    return 0


def cmd_query(args) -> int:
    params = HmmParams.load(args.params)
    binner = QuantileBinner(params.quantile_boundaries)

    labels = None
    if args.labels:
        records = {r.video_id: r for r in load_labels(args.labels)}
        if args.video not in records:
            raise ValueError(f"{args.labels}: no labels for video {args.video!r}")
        labels = records[args.video].labels

    remote = None
    if args.server:
        remote = RemoteFrameSource(parse_address(args.server), args.video)
        source = remote
    else:
        if args.scores is None:
            raise ValueError("query needs --scores or --server")
        table = load_score_table(args.scores)
        if args.video not in table:
            raise ValueError(f"{args.scores}: no scores for video {args.video!r}")
        source = ArrayFrameSource(table[args.video])

    loss_log: list[np.ndarray] = []
    try:
        result = run_episode_snapshots(
            params,
            binner,
            source,
            [query_budget(args.bandwidth, source.frame_count())],
            labels,
            loss_sink=loss_log,
        )[0]
    finally:
        if remote is not None:
            remote.close()

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(result.to_json())
    if args.dump_losses:
        dump = [[None if math.isnan(v) else v for v in step.tolist()] for step in loss_log]
        with open(args.dump_losses, "w", encoding="utf-8") as fh:
            json.dump(dump, fh)
            fh.write("\n")
    print(f"wrote {args.out} (budget {result.budget_used} of {source.frame_count()} frames)")
    return 0


def cmd_synth(args) -> int:
    if args.params:
        params = HmmParams.load(args.params)
    else:
        params = PRESETS[args.preset]
    labels_path, scores_path, params_path = write_synthetic_dataset(
        params, args.num_videos, args.frames, args.seed, args.out_dir
    )
    print(f"wrote {labels_path}, {scores_path}, {params_path}")
    return 0


def cmd_serve(args) -> int:
    table = load_score_table(args.scores)
    labels = None
    if args.labels:
        labels = {r.video_id: r.labels for r in load_labels(args.labels)}
    catalog = ServerCatalog(table, labels)
    server = serve(catalog, parse_address(args.listen))
    host, port = server.bound_address

    # raise out of serve_forever; calling shutdown() from this thread deadlocks
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))
    print(f"serving {len(table)} videos on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameseek",
        description="Bandwidth-budgeted frame-of-interest search with an HMM query agent",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="estimate HMM parameters from labels + scores")
    p.add_argument("--labels", required=True, help="labels JSON-lines file")
    p.add_argument("--scores", required=True, help="scores JSON-lines file")
    p.add_argument("--smoothing", type=float, default=1.0, help="additive smoothing (default 1)")
    p.add_argument(
        "--initial",
        choices=["empirical", "stationary"],
        default="empirical",
        help="initial distribution: empirical label frequency or stationary of A",
    )
    p.add_argument(
        "--boundaries",
        default=None,
        help="fixed quantile boundaries 'b1,b2' instead of data quantiles",
    )
    p.add_argument("--out", required=True, help="output params JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy-versus-bandwidth sweep, CSV out")
    p.add_argument("--params", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--scores", default=None)
    p.add_argument("--server", default=None, help="fetch scores from host:port instead of a file")
    p.add_argument("--grid", default=DEFAULT_GRID, help="bandwidth grid start:stop:step")
    p.add_argument("--max-clip-len", type=int, default=DEFAULT_MAX_CLIP_LEN)
    p.add_argument("--baseline", choices=["uniform"], default=None)
    p.add_argument(
        "--frame-weighted",
        action="store_true",
        help="weight clips by frame count instead of equally",
    )
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over clips")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--gnuplot", default=None, help="also write a two-column data file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("query", help="run one episode and dump it as JSON")
    p.add_argument("--params", required=True)
    p.add_argument("--video", required=True, help="video id to query")
    p.add_argument("--scores", default=None)
    p.add_argument("--server", default=None)
    p.add_argument("--labels", default=None, help="optional labels for accuracy")
    p.add_argument("--bandwidth", type=float, required=True, help="bandwidth ratio B")
    p.add_argument("--out", required=True, help="output episode JSON path")
    p.add_argument("--dump-losses", default=None, help="also dump per-step expected losses")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--params", default=None, help="generating params JSON")
    group.add_argument("--preset", choices=sorted(PRESETS), default="persistent")
    p.add_argument("--num-videos", type=int, required=True)
    p.add_argument("--frames", type=int, required=True, help="frames per video")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the NDJSON frame server")
    p.add_argument("--listen", default="127.0.0.1:4170", help="bind address host:port")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", default=None, help="optional; kept local, never transmitted")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, TransportError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
