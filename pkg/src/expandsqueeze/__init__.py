"""Expand-then-squeeze search rollouts: multi-query retrieval, summarised evidence, EM + format rewards."""

from .core import (
    Chunk,
    ChunkSet,
    ConfigError,
    Question,
    QueryBundle,
    RewardBreakdown,
    RolloutConfig,
    Segment,
    SegmentKind,
    Status,
    Summary,
    Trajectory,
    validate_config,
)
from .retrieval import BM25Index, RemoteRetriever, ingest_corpus, recall_at, retrieve_bundle
from .gateway import CallableGateway, OpenAIGateway, ScriptedGateway
from .squeeze import Squeezer, SqueezeInput, build_squeeze_prompt
from .tags import render_information, render_prompt, scan_generation, split_queries
from .rollout import Collaborators, run_batch, run_rollout
from .rewards import aggregate, em_reward, format_reward, normalize_answer, total_reward

__version__ = "0.1.0"
