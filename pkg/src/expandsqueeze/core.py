"""Shared domain types: questions, rollout configs, trajectories, retrieval results, rewards."""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Protocol


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SchemaError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyGoldSet(ValueError):
    pass


# --- token counting -------------------------------------------------------

_WS_TOKEN = re.compile(r"\S+")


class Tokenizer(Protocol):
    def count(self, text: str) -> int: ...

    def truncate(self, text: str, limit: int) -> str: ...


class WhitespaceTokenizer:
    """Counts whitespace-delimited words. Deterministic and model-free."""

    def count(self, text: str) -> int:
        return sum(1 for _ in _WS_TOKEN.finditer(text))

    def truncate(self, text: str, limit: int) -> str:
        # cut right after the limit-th word so the kept prefix is byte-identical
        if limit <= 0:
            return ""
        for i, m in enumerate(_WS_TOKEN.finditer(text), start=1):
            if i == limit:
                return text[: m.end()]
        return text


WHITESPACE = WhitespaceTokenizer()


# --- questions and config -------------------------------------------------


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    golden_answers: tuple[str, ...]
    dataset: str = "unknown"

    def __post_init__(self):
        object.__setattr__(self, "golden_answers", tuple(self.golden_answers))
        if not self.text.strip():
            raise ValueError(f"question {self.id!r} has empty text")
        if not self.golden_answers or any(not g.strip() for g in self.golden_answers):
            raise ValueError(f"question {self.id!r} needs non-empty golden answers")


@dataclass(frozen=True)
class RolloutConfig:
    max_turns: int = 4
    n_expansions: int = 3
    top_k: int = 10
    response_token_limit: int = 500
    retrieved_token_limit: int = 500
    lambda_format: float = 0.2
    max_bundle_size: int = 8
    squeeze_context_budget: int = 8192
    strict_em: bool = False

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RolloutConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config key")
        return validate_config(cls(**data))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_POSITIVE_INT_FIELDS = (
    "max_turns",
    "n_expansions",
    "top_k",
    "response_token_limit",
    "retrieved_token_limit",
    "max_bundle_size",
    "squeeze_context_budget",
)


def validate_config(cfg: RolloutConfig) -> RolloutConfig:
    for name in _POSITIVE_INT_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        if value < 1:
            raise ConfigError(name, f"must be >= 1, got {value}")
    lam = cfg.lambda_format
    if isinstance(lam, bool) or not isinstance(lam, (int, float)) or not lam >= 0:
        raise ConfigError("lambda_format", f"must be a non-negative real, got {lam!r}")
    return cfg


# --- segments and trajectories ----------------------------------------------


class SegmentKind(str, enum.Enum):
    THINK = "think"
    SEARCH = "search"
    ANSWER = "answer"
    INFORMATION = "information"
    RETHINK = "rethink"
    RAW = "raw"


RUNTIME_KINDS = frozenset({SegmentKind.INFORMATION, SegmentKind.RETHINK})


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    content: str
    turn_index: int = 0


class Status(str, enum.Enum):
    RUNNING = "running"
    ANSWERED = "answered"
    EXHAUSTED = "exhausted"
    FAILED = "failed"


@dataclass(frozen=True)
class Trajectory:
    question: Question
    segments: tuple[Segment, ...]
    status: Status
    final_answer: str | None = None
    turn_count: int = 0
    error: str | None = None
    timings_ms: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        n_answers = sum(1 for s in self.segments if s.kind is SegmentKind.ANSWER)
        answered = self.status is Status.ANSWERED
        if answered != (self.final_answer is not None) or answered != (n_answers == 1):
            raise ValueError(
                f"inconsistent trajectory: status={self.status.value}, "
                f"final_answer={self.final_answer!r}, answer segments={n_answers}"
            )

    @property
    def finished(self) -> bool:
        return self.status is not Status.RUNNING

    def turn_segments(self, turn: int) -> list[Segment]:
        return [s for s in self.segments if s.turn_index == turn]


# --- retrieval results ------------------------------------------------------


@dataclass(frozen=True)
class QueryBundle:
    queries: tuple[str, ...]
    source_turn: int = 0

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        for q in self.queries:
            if not q or q != q.strip():
                raise ValueError(f"queries must be trimmed and non-empty: {q!r}")

    def __len__(self) -> int:
        return len(self.queries)


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    title: str
    text: str
    score: float
    rank: int


@dataclass(frozen=True)
class ChunkSet:
    query: str
    chunks: tuple[Chunk, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "chunks", tuple(self.chunks))
        for i, c in enumerate(self.chunks):
            if c.rank != i + 1:
                raise ValueError(f"chunk ranks must run 1..n, got {c.rank} at position {i}")
            if i and c.score > self.chunks[i - 1].score:
                raise ValueError("chunk scores must be non-increasing by rank")

    @property
    def doc_ids(self) -> list[str]:
        return [c.doc_id for c in self.chunks]

    def __len__(self) -> int:
        return len(self.chunks)


@dataclass(frozen=True)
class Summary:
    text: str
    source_queries: tuple[str, ...] = ()
    source_doc_ids: tuple[str, ...] = ()
    squeezer_model: str = ""

    def __post_init__(self):
        object.__setattr__(self, "source_queries", tuple(self.source_queries))
        object.__setattr__(self, "source_doc_ids", tuple(self.source_doc_ids))


@dataclass(frozen=True)
class RewardBreakdown:
    em: int
    format: int
    lam: float
    total: float

    @classmethod
    def combine(cls, em: int, fmt: int, lam: float) -> "RewardBreakdown":
        return cls(em=em, format=fmt, lam=lam, total=em + lam * fmt)

    def consistent(self) -> bool:
        return self.total == self.em + self.lam * self.format

    def to_dict(self) -> dict[str, Any]:
        return {"em": self.em, "format": self.format, "lambda": self.lam, "total": self.total}


# --- JSONL trajectory records -------------------------------------------------


def trajectory_to_record(
    traj: Trajectory,
    cfg: RolloutConfig | None = None,
    reward: RewardBreakdown | None = None,
    include_timings: bool = True,
) -> dict[str, Any]:
    q = traj.question
    rec: dict[str, Any] = {
        "question_id": q.id,
        "dataset": q.dataset,
        "question": q.text,
        "golden_answers": list(q.golden_answers),
        "status": traj.status.value,
        "segments": [
            {"kind": s.kind.value, "content": s.content, "turn": s.turn_index}
            for s in traj.segments
        ],
        "final_answer": traj.final_answer,
        "turn_count": traj.turn_count,
        "error": traj.error,
        "reward": reward.to_dict() if reward is not None else None,
        "config": cfg.to_dict() if cfg is not None else None,
    }
    if include_timings:
        rec["timings_ms"] = dict(traj.timings_ms)
    return rec


def trajectory_from_record(rec: dict[str, Any]) -> Trajectory:
    question = Question(
        id=rec["question_id"],
        text=rec["question"],
        golden_answers=tuple(rec["golden_answers"]),
        dataset=rec.get("dataset", "unknown"),
    )
    segments = tuple(
        Segment(SegmentKind(s["kind"]), s["content"], s["turn"]) for s in rec["segments"]
    )
    return Trajectory(
        question=question,
        segments=segments,
        status=Status(rec["status"]),
        final_answer=rec.get("final_answer"),
        turn_count=rec.get("turn_count", 0),
        error=rec.get("error"),
        timings_ms=dict(rec.get("timings_ms") or {}),
    )


def dumps_record(rec: dict[str, Any]) -> str:
    return json.dumps(rec, ensure_ascii=False, sort_keys=True)
