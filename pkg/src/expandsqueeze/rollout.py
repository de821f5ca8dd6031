"""Multi-turn generate / parse / (retrieve + squeeze | answer | rethink) rollout loop."""

from __future__ import annotations

import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Callable, Iterable, Sequence

from .core import (
    Question,
    QueryBundle,
    RolloutConfig,
    Segment,
    SegmentKind,
    Status,
    Trajectory,
)
from .gateway import GenerationRequest, LLMGateway
from .retrieval import Retriever, retrieve_bundle
from .squeeze import SqueezeInput, Squeezer
from .tags import (
    RETHINK_NOTICE,
    STOP_SEQUENCES,
    AnswerAction,
    SearchAction,
    render_information,
    render_prompt,
    scan_generation,
)

log = logging.getLogger(__name__)


class EventKind(str, enum.Enum):
    TURN_STARTED = "turn_started"
    GENERATION_RECEIVED = "generation_received"
    SEARCH_DISPATCHED = "search_dispatched"
    SUMMARY_INJECTED = "summary_injected"
    RETHINK_INJECTED = "rethink_injected"
    ANSWERED = "answered"
    EXHAUSTED = "exhausted"
    ERROR_ABORTED = "error_aborted"


@dataclass(frozen=True)
class RolloutEvent:
    kind: EventKind
    turn: int
    question_id: str
    payload: dict[str, Any] = field(default_factory=dict)
    timestamp: float = 0.0


EventSink = Callable[[RolloutEvent], None]

_NEXT: dict[EventKind | None, set[EventKind]] = {
    None: {EventKind.TURN_STARTED, EventKind.EXHAUSTED},
    EventKind.TURN_STARTED: {EventKind.GENERATION_RECEIVED, EventKind.ERROR_ABORTED},
    EventKind.GENERATION_RECEIVED: {
        EventKind.SEARCH_DISPATCHED,
        EventKind.RETHINK_INJECTED,
        EventKind.ANSWERED,
    },
    EventKind.SEARCH_DISPATCHED: {EventKind.SUMMARY_INJECTED, EventKind.ERROR_ABORTED},
    EventKind.SUMMARY_INJECTED: {EventKind.TURN_STARTED, EventKind.EXHAUSTED},
    EventKind.RETHINK_INJECTED: {EventKind.TURN_STARTED, EventKind.EXHAUSTED},
}
_TERMINAL_EVENTS = {EventKind.ANSWERED, EventKind.EXHAUSTED, EventKind.ERROR_ABORTED}


def is_valid_event_path(events: Sequence[RolloutEvent]) -> bool:
    """True if the events of one rollout trace a legal walk through the turn state machine."""
    prev: EventKind | None = None
    for ev in events:
        if prev in _TERMINAL_EVENTS or ev.kind not in _NEXT.get(prev, set()):
            return False
        prev = ev.kind
    return prev in _TERMINAL_EVENTS


RETHINK_PIECE = "\n" + RETHINK_NOTICE + "\n"


def run_rollout(
    question: Question,
    cfg: RolloutConfig,
    policy: LLMGateway,
    retriever: Retriever,
    squeezer: Squeezer,
    *,
    sink: EventSink | None = None,
    bundle_filter: Callable[[QueryBundle], QueryBundle] | None = None,
    temperature: float = 1.0,
    seed: int | None = None,
    parallel_retrieval: bool = True,
) -> Trajectory:
    """Run one rollout to completion.

    Each turn the policy continues the transcript until a stop tag. A search
    block is split into queries, retrieved in parallel, squeezed and injected as
    <information>; an answer block ends the rollout; anything else gets the
    rethink notice. Every non-answer turn consumes one unit of ``max_turns``.
    Collaborator failures end the rollout as Failed rather than raising.
    """
    qid = question.id

    def emit(kind: EventKind, turn: int, **payload):
        if sink is not None:
            sink(RolloutEvent(kind, turn, qid, payload, time.time()))

    prefix = render_prompt(question, cfg)
    transcript = ""
    segments: list[Segment] = []
    timings = {"generate": 0.0, "retrieve": 0.0, "squeeze": 0.0}
    t_start = time.perf_counter()

    def finish(status: Status, turns: int, answer: str | None = None, error: str | None = None) -> Trajectory:
        ms = {k: int(v * 1000) for k, v in timings.items()}
        ms["total"] = int((time.perf_counter() - t_start) * 1000)
        return Trajectory(question, tuple(segments), status, answer, turns, error, ms)

    b = 0
    while b < cfg.max_turns:
        emit(EventKind.TURN_STARTED, b)
        req = GenerationRequest(
            prompt=prefix + transcript,
            stop_sequences=STOP_SEQUENCES,
            max_tokens=cfg.response_token_limit,
            temperature=temperature,
            seed=seed,
        )
        t0 = time.perf_counter()
        try:
            result = policy.generate(req)
        except Exception as exc:
            log.warning("%s: policy failed on turn %d: %s", qid, b, exc)
            emit(EventKind.ERROR_ABORTED, b, stage="generate", error=repr(exc))
            return finish(Status.FAILED, b + 1, error=f"turn {b} generate: {type(exc).__name__}: {exc}")
        timings["generate"] += time.perf_counter() - t0

        transcript += result.text
        new_segments, action = scan_generation(result.text, b)
        segments.extend(new_segments)
        emit(
            EventKind.GENERATION_RECEIVED,
            b,
            text=result.text,
            stop_reason=result.stop_reason,
            action=type(action).__name__,
        )

        if isinstance(action, AnswerAction):
            emit(EventKind.ANSWERED, b, answer=action.answer)
            return finish(Status.ANSWERED, b + 1, answer=action.answer)

        if isinstance(action, SearchAction):
            bundle = action.bundle
            if len(bundle) > cfg.max_bundle_size:
                log.warning(
                    "%s: bundle of %d queries truncated to %d", qid, len(bundle), cfg.max_bundle_size
                )
                bundle = replace(bundle, queries=bundle.queries[: cfg.max_bundle_size])
            if bundle_filter is not None:
                bundle = bundle_filter(bundle)
            emit(EventKind.SEARCH_DISPATCHED, b, queries=list(bundle.queries))
            try:
                t0 = time.perf_counter()
                chunk_sets = retrieve_bundle(retriever, bundle, cfg.top_k, parallel=parallel_retrieval)
                timings["retrieve"] += time.perf_counter() - t0
                t0 = time.perf_counter()
                summary = squeezer.squeeze(
                    SqueezeInput(bundle.queries, tuple(chunk_sets), cfg.squeeze_context_budget),
                    injection_limit=cfg.retrieved_token_limit,
                )
                timings["squeeze"] += time.perf_counter() - t0
            except Exception as exc:
                log.warning("%s: search failed on turn %d: %s", qid, b, exc)
                emit(EventKind.ERROR_ABORTED, b, stage="search", error=repr(exc))
                return finish(Status.FAILED, b + 1, error=f"turn {b} search: {type(exc).__name__}: {exc}")
            transcript += "\n" + render_information(summary) + "\n"
            segments.append(Segment(SegmentKind.INFORMATION, summary.text, b))
            emit(
                EventKind.SUMMARY_INJECTED,
                b,
                summary=summary.text,
                doc_ids=list(summary.source_doc_ids),
                squeezer=summary.squeezer_model,
            )
        else:
            transcript += RETHINK_PIECE
            segments.append(Segment(SegmentKind.RETHINK, RETHINK_NOTICE, b))
            emit(EventKind.RETHINK_INJECTED, b, reason=action.reason)
        b += 1

    emit(EventKind.EXHAUSTED, b)
    return finish(Status.EXHAUSTED, b)


# --- batches -----------------------------------------------------------------


@dataclass
class Collaborators:
    """Policy, retriever and squeezer for a batch.

    ``policy`` and ``squeezer`` may each be a shared instance or a factory
    called once per question (needed when scripted backends must not be
    shared between concurrent rollouts).
    """

    policy: Any
    retriever: Retriever
    squeezer: Any
    bundle_filter: Callable[[QueryBundle], QueryBundle] | None = None

    def for_question(self, q: Question) -> tuple[LLMGateway, Squeezer]:
        policy = self.policy if hasattr(self.policy, "generate") else self.policy(q)
        squeezer = self.squeezer if hasattr(self.squeezer, "squeeze") else self.squeezer(q)
        return policy, squeezer

    def labels(self) -> dict[str, str]:
        def label(x, attr):
            return getattr(x, attr, None) or ("per-question" if callable(x) else type(x).__name__)

        return {
            "policy": label(self.policy, "label"),
            "squeezer": label(self.squeezer, "label"),
            "retriever": self.retriever.identity(),
        }


@dataclass
class BatchResult:
    trajectories: list[Trajectory]
    manifest: dict[str, Any]


def run_batch(
    questions: Iterable[Question],
    cfg: RolloutConfig,
    collab: Collaborators,
    parallelism: int = 1,
    *,
    sink: EventSink | None = None,
    temperature: float = 1.0,
    seed: int | None = None,
) -> BatchResult:
    """Roll out every question; results come back in input order.

    A failure in one rollout (including one raised outside the collaborators,
    e.g. by a per-question factory) yields a Failed trajectory for that
    question only.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    questions = list(questions)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()

    def one(q: Question) -> Trajectory:
        try:
            policy, squeezer = collab.for_question(q)
            return run_rollout(
                q,
                cfg,
                policy,
                collab.retriever,
                squeezer,
                sink=sink,
                bundle_filter=collab.bundle_filter,
                temperature=temperature,
                seed=seed,
            )
        except Exception as exc:
            log.exception("rollout for %s crashed", q.id)
            return Trajectory(q, (), Status.FAILED, None, 0, f"{type(exc).__name__}: {exc}")

    if parallelism == 1:
        trajectories = [one(q) for q in questions]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            trajectories = list(pool.map(one, questions))

    counts: dict[str, int] = {}
    for t in trajectories:
        counts[t.status.value] = counts.get(t.status.value, 0) + 1
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "models": collab.labels(),
        "index_identity": collab.retriever.identity(),
        "parallelism": parallelism,
        "seed": seed,
        "temperature": temperature,
        "n_questions": len(questions),
        "status_counts": counts,
        "started_at": started.isoformat(),
        "wall_clock_s": round(time.perf_counter() - t0, 3),
    }
    return BatchResult(trajectories, manifest)
