"""Experiment layer: dataset loading, trajectory files, n/k sweeps, expansion-type analysis."""

from __future__ import annotations

import csv
import json
import logging
import re
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .core import (
    Question,
    QueryBundle,
    RolloutConfig,
    SchemaError,
    SegmentKind,
    Trajectory,
    dumps_record,
    trajectory_from_record,
    trajectory_to_record,
)
from .gateway import GenerationRequest, LLMGateway
from .rewards import EvalReport, aggregate, score, total_reward
from .rollout import Collaborators, run_batch
from .tags import split_queries

log = logging.getLogger(__name__)

SYNTAX = "syntax"
SEMANTIC = "semantic"

EXPANSION_TYPE_TEMPLATE = (
    "Classify the following query expansion type.\n"
    "\n"
    "Base Query: BASE_QUERY\n"
    "Expanded Query: EXPANDED_QUERY\n"
    "\n"
    "Query expansion types:\n"
    "- Syntax Expansion: Reformulating the query structure while keeping the same meaning "
    "(e.g., \"Alexander's father\" → \"father of Alexander\", \"where did he die\" → \"death place of\")\n"
    "- Semantic Expansion: Expanding the meaning to related concepts "
    "(e.g., \"Alexander's father\" → \"Alexander's family\", \"death place\" → \"burial location\")\n"
    "\n"
    "Respond with ONLY one word: 'syntax' or 'semantic'"
)


# --- datasets and trajectory files -------------------------------------------


def load_dataset(path: str | Path, default_dataset: str | None = None) -> list[Question]:
    """Read {id, question, golden_answers, dataset} JSONL records.

    ``dataset`` falls back to ``default_dataset`` (or the file stem). Duplicate
    ids are kept with a warning; they are provenance, not keys.
    """
    path = Path(path)
    fallback = default_dataset or path.stem
    out: list[Question] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise SchemaError(line_no, "expected an object")
            qid, text, golds = obj.get("id"), obj.get("question"), obj.get("golden_answers")
            if isinstance(golds, str):
                golds = [golds]
            if qid is None or not isinstance(text, str):
                raise SchemaError(line_no, "missing id or question")
            if not isinstance(golds, list) or not all(isinstance(g, str) for g in golds):
                raise SchemaError(line_no, "golden_answers must be a list of strings")
            try:
                q = Question(str(qid), text, tuple(golds), str(obj.get("dataset") or fallback))
            except ValueError as exc:
                raise SchemaError(line_no, str(exc)) from None
            if q.id in seen:
                log.warning("%s:%d duplicate question id %r", path, line_no, q.id)
            seen.add(q.id)
            out.append(q)
    return out


def write_trajectories(
    path: str | Path,
    trajectories: Iterable[Trajectory],
    cfg: RolloutConfig,
    include_timings: bool = True,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajectories:
            rec = trajectory_to_record(t, cfg, total_reward(t, cfg), include_timings=include_timings)
            fh.write(dumps_record(rec) + "\n")


def read_trajectories(path: str | Path) -> list[tuple[Trajectory, dict[str, Any]]]:
    """Returns (trajectory, raw record) pairs."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append((trajectory_from_record(rec), rec))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise SchemaError(line_no, f"bad trajectory record: {exc}") from None
    return out


def evaluate(trajectories: Sequence[Trajectory], cfg: RolloutConfig) -> tuple[EvalReport, list]:
    rows = [score(t, cfg) for t in trajectories]
    return aggregate(rows, cfg), rows


# --- sweeps ------------------------------------------------------------------

SWEEP_AXES = ("n_expansions", "top_k")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[int, ...]
    base_config: RolloutConfig = field(default_factory=RolloutConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"sweep values must be strictly increasing: {self.values}")


@dataclass
class SweepCell:
    axis_value: int
    report: EvalReport | None
    error: str | None = None
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)


def run_sweep(
    spec: SweepSpec,
    questions: Sequence[Question],
    collab: Collaborators,
    parallelism: int = 1,
    temperature: float = 0.0,
) -> list[SweepCell]:
    """One full evaluation per axis value with everything else held fixed. Cells run sequentially."""
    cells = []
    for value in spec.values:
        cfg = replace(spec.base_config, **{spec.axis: value})
        try:
            batch = run_batch(questions, cfg, collab, parallelism, temperature=temperature, seed=spec.seed)
            report, _ = evaluate(batch.trajectories, cfg)
            report.axis, report.axis_value = spec.axis, value
            cells.append(SweepCell(value, report, trajectories=batch.trajectories))
        except Exception as exc:
            log.exception("sweep cell %s=%s failed", spec.axis, value)
            cells.append(SweepCell(value, None, f"{type(exc).__name__}: {exc}"))
    return cells


def write_sweep(cells: Sequence[SweepCell], spec: SweepSpec, out_dir: str | Path) -> tuple[Path, Path]:
    """Write sweep.json (full reports) and sweep.csv (axis_value, dataset, em_mean, count)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "axis": spec.axis,
        "values": list(spec.values),
        "seed": spec.seed,
        "base_config": spec.base_config.to_dict(),
        "cells": [
            {"axis_value": c.axis_value, "report": c.report.to_dict() if c.report else None, "error": c.error}
            for c in cells
        ],
    }
    json_path = out_dir / "sweep.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([spec.axis, "dataset", "em_mean", "count"])
        for c in cells:
            if c.report is None:
                w.writerow([c.axis_value, "overall", "", 0])
                continue
            for ds, cell in c.report.per_dataset.items():
                w.writerow([c.axis_value, ds, cell["em_mean"], cell["count"]])
            w.writerow([c.axis_value, "overall", c.report.overall["em_mean"], c.report.overall["count"]])
    return json_path, csv_path


# --- expansion types ---------------------------------------------------------


class UnparseableLabel(ValueError):
    def __init__(self, raw: str):
        super().__init__(f"classifier answered {raw!r}, expected 'syntax' or 'semantic'")
        self.raw = raw


@dataclass(frozen=True)
class ExpansionLabel:
    base_query: str
    expanded_query: str
    label: str
    classifier_model: str


def expansion_prompt(base: str, expanded: str) -> str:
    fills = {"BASE_QUERY": base, "EXPANDED_QUERY": expanded}
    # single pass so a query containing a placeholder word is left alone
    return re.sub(r"BASE_QUERY|EXPANDED_QUERY", lambda m: fills[m.group(0)], EXPANSION_TYPE_TEMPLATE)


def parse_label(raw: str) -> str:
    word = raw.strip().lower()
    if word not in (SYNTAX, SEMANTIC):
        raise UnparseableLabel(raw)
    return word


def classify_pair(base: str, expanded: str, gateway: LLMGateway) -> ExpansionLabel:
    result = gateway.generate(GenerationRequest(expansion_prompt(base, expanded), (), 8, 0.0))
    return ExpansionLabel(base, expanded, parse_label(result.text), getattr(gateway, "label", ""))


def expansion_pairs(trajectories: Iterable[Trajectory]) -> list[tuple[str, str]]:
    """(base, expansion) pairs from every search block with at least two queries; the first query is the base."""
    pairs = []
    for t in trajectories:
        for seg in t.segments:
            if seg.kind is not SegmentKind.SEARCH:
                continue
            bundle = split_queries(seg.content)
            if isinstance(bundle, QueryBundle) and len(bundle) >= 2:
                base = bundle.queries[0]
                pairs.extend((base, q) for q in bundle.queries[1:])
    return pairs


@dataclass
class ClassificationResult:
    labels: list[ExpansionLabel]
    unparseable: list[str]

    @property
    def summary(self) -> dict[str, Any]:
        n = len(self.labels)
        syn = sum(1 for x in self.labels if x.label == SYNTAX)
        return {
            "labeled": n,
            "unparseable": len(self.unparseable),
            "syntax_pct": 100.0 * syn / n if n else None,
            "semantic_pct": 100.0 * (n - syn) / n if n else None,
        }


def classify_expansions(trajectories: Iterable[Trajectory], gateway: LLMGateway) -> ClassificationResult:
    labels, bad = [], []
    for base, expanded in expansion_pairs(trajectories):
        try:
            labels.append(classify_pair(base, expanded, gateway))
        except UnparseableLabel as exc:
            log.warning("unparseable expansion label for %r -> %r: %r", base, expanded, exc.raw)
            bad.append(exc.raw)
    return ClassificationResult(labels, bad)


def ablate_expansion_type(
    bundle: QueryBundle,
    labels: Mapping[str, str] | Iterable[ExpansionLabel],
    drop: str,
) -> QueryBundle:
    """Remove expansions of type ``drop``; the base (first) query always stays."""
    if drop not in (SYNTAX, SEMANTIC):
        raise ValueError(f"drop must be 'syntax' or 'semantic', got {drop!r}")
    if not isinstance(labels, Mapping):
        labels = {x.expanded_query: x.label for x in labels}
    base, *rest = bundle.queries
    missing = [q for q in rest if q not in labels]
    if missing:
        raise ValueError(f"no label for expansion(s): {missing}")
    kept = [base] + [q for q in rest if labels[q] != drop]
    return QueryBundle(tuple(kept), bundle.source_turn)


class ExpansionAblation:
    """Bundle filter for rollouts: classifies expansions on the fly and drops one type.

    Expansions the classifier cannot label are kept.
    """

    def __init__(self, classifier: LLMGateway, drop: str):
        if drop not in (SYNTAX, SEMANTIC):
            raise ValueError(f"drop must be 'syntax' or 'semantic', got {drop!r}")
        self.classifier = classifier
        self.drop = drop
        self._cache: dict[tuple[str, str], str | None] = {}
        self._lock = threading.Lock()

    def _label(self, base: str, expanded: str) -> str | None:
        key = (base, expanded)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        try:
            label: str | None = classify_pair(base, expanded, self.classifier).label
        except UnparseableLabel:
            label = None
        with self._lock:
            self._cache[key] = label
        return label

    def __call__(self, bundle: QueryBundle) -> QueryBundle:
        base, *rest = bundle.queries
        labels = {q: (self._label(base, q) or "unlabeled") for q in rest}
        return ablate_expansion_type(bundle, labels, self.drop)


def rule_based_expansion_classifier(prompt: str) -> str:
    """Deterministic stand-in for the classifier LLM, applying the prompt's own definitions.

    Same content words in a different arrangement is a reformulation
    (syntax); anything that changes the content words changes the meaning
    (semantic).
    """
    base = _field(prompt, "Base Query: ")
    expanded = _field(prompt, "Expanded Query: ")
    return SYNTAX if _content_words(base) == _content_words(expanded) else SEMANTIC


_FUNCTION_WORDS = frozenset(
    "a an the of for to in on at by with from is are was were do does did who what where when which how s".split()
)


def _field(prompt: str, marker: str) -> str:
    start = prompt.index(marker) + len(marker)
    end = prompt.find("\n", start)
    return prompt[start : end if end >= 0 else None]


def _content_words(text: str) -> frozenset[str]:
    words = re.findall(r"[^\W_]+", text.lower())
    return frozenset(w for w in words if w not in _FUNCTION_WORDS)

