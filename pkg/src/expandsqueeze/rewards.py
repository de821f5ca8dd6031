"""Exact-match + format reward and per-dataset evaluation reports."""

from __future__ import annotations

import csv
import json
import re
import string
import unicodedata
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .core import (
    EmptyGoldSet,
    RewardBreakdown,
    RolloutConfig,
    SegmentKind,
    Status,
    Trajectory,
)
from .tags import split_queries

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_ASCII_PUNCT = frozenset(string.punctuation)


def _is_punct(ch: str) -> bool:
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation, drop articles, collapse whitespace.

    Punctuation goes before articles so that the result is a fixed point
    (``"t.he"`` would otherwise turn into a fresh article on the second pass).
    """
    text = text.lower()
    text = "".join(ch for ch in text if not _is_punct(ch))
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def em_reward(pred: str, golds: Sequence[str], strict: bool = False) -> int:
    if not golds:
        raise EmptyGoldSet("exact match needs at least one gold answer")
    if strict:
        return int(any(pred == g for g in golds))
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(g) for g in golds))


def format_reward(traj: Trajectory) -> int:
    """1 iff the rollout answered, never needed a rethink, and thought before every search."""
    if traj.status is not Status.ANSWERED:
        return 0
    thought_in: set[int] = set()
    for seg in traj.segments:
        if seg.kind is SegmentKind.RETHINK:
            return 0
        if seg.kind is SegmentKind.THINK:
            thought_in.add(seg.turn_index)
        elif seg.kind is SegmentKind.SEARCH and seg.turn_index not in thought_in:
            return 0
    return 1


def total_reward(traj: Trajectory, cfg: RolloutConfig) -> RewardBreakdown:
    em = em_reward(traj.final_answer or "", traj.question.golden_answers, strict=cfg.strict_em)
    if traj.final_answer is None:
        # a gold like "The" normalizes to "" and must not reward a missing answer
        em = 0
    return RewardBreakdown.combine(em, format_reward(traj), cfg.lambda_format)


def queries_used(traj: Trajectory) -> int:
    n = 0
    for seg in traj.segments:
        if seg.kind is SegmentKind.SEARCH:
            bundle = split_queries(seg.content)
            n += len(getattr(bundle, "queries", ()))
    return n


@dataclass(frozen=True)
class EvalRow:
    id: str
    dataset: str
    em: int
    format: int
    total: float
    turns: int
    n_queries_used: int
    status: str


def score(traj: Trajectory, cfg: RolloutConfig) -> EvalRow:
    r = total_reward(traj, cfg)
    return EvalRow(
        id=traj.question.id,
        dataset=traj.question.dataset,
        em=r.em,
        format=r.format,
        total=r.total,
        turns=traj.turn_count,
        n_queries_used=queries_used(traj),
        status=traj.status.value,
    )


@dataclass
class EvalReport:
    per_dataset: dict[str, dict[str, Any]]
    overall: dict[str, Any]
    config: dict[str, Any] | None = None
    axis: str | None = None
    axis_value: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _cell(rows: list[EvalRow]) -> dict[str, Any]:
    n = len(rows)
    return {
        "em_mean": (sum(r.em for r in rows) / n) if n else None,
        "count": n,
        "failed": sum(1 for r in rows if r.status == Status.FAILED.value),
    }


def aggregate(rows: Iterable[EvalRow], cfg: RolloutConfig | None = None) -> EvalReport:
    """Per-dataset and overall EM means. Failed rollouts count as EM 0 and are tallied."""
    rows = list(rows)
    by_ds: dict[str, list[EvalRow]] = defaultdict(list)
    for r in rows:
        by_ds[r.dataset].append(r)
    return EvalReport(
        per_dataset={ds: _cell(rs) for ds, rs in sorted(by_ds.items())},
        overall=_cell(rows),
        config=cfg.to_dict() if cfg is not None else None,
    )


def write_rows_csv(rows: Iterable[EvalRow], path: str | Path) -> None:
    fields = ["id", "dataset", "em", "format", "total", "turns", "n_queries_used"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
