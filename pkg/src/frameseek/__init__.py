"""Bandwidth-budgeted frame-of-interest search.

A two-state hidden Markov model turns sparse, quantile-binned frame scores
into dense per-frame label beliefs; a greedy planner picks the next frame to
request by minimizing the expected mean frame-wise cross entropy of the
updated belief, under a budget of floor(B * T) requests per T-frame video.
"""

from .data import (
    PRESETS,
    QuantileBinner,
    VideoRecord,
    clip_video,
    compute_quantiles,
    discretize,
    generate_synthetic,
    load_labels,
    load_scores,
)
from .episode import (
    ArrayFrameSource,
    EpisodeResult,
    FrameSource,
    TransportError,
    run_episode,
    run_episode_snapshots,
    uniform_baseline_episode,
)
from .hmm import (
    HmmParams,
    ObservationSet,
    estimate_emission,
    estimate_initial,
    estimate_transition,
    forward_backward,
    stationary_distribution,
)
from .policy import (
    QueryPlan,
    expected_cross_entropy,
    expected_loss_for_query,
    observation_predictive,
    select_next_query,
)
from .server import RemoteFrameSource, ServerCatalog, serve

__version__ = "0.1.0"

__all__ = [
    "ArrayFrameSource",
    "EpisodeResult",
    "FrameSource",
    "HmmParams",
    "ObservationSet",
    "PRESETS",
    "QuantileBinner",
    "QueryPlan",
    "RemoteFrameSource",
    "ServerCatalog",
    "TransportError",
    "VideoRecord",
    "clip_video",
    "compute_quantiles",
    "discretize",
    "estimate_emission",
    "estimate_initial",
    "estimate_transition",
    "expected_cross_entropy",
    "expected_loss_for_query",
    "forward_backward",
    "generate_synthetic",
    "load_labels",
    "load_scores",
    "observation_predictive",
    "run_episode",
    "run_episode_snapshots",
    "select_next_query",
    "serve",
    "stationary_distribution",
    "uniform_baseline_episode",
]
