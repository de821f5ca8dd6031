"""Tagged output protocol: <think>, <search>, <answer>, <information> and the ## query separator."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Union

from .core import Question, QueryBundle, RolloutConfig, Segment, SegmentKind, Summary

log = logging.getLogger(__name__)

QUERY_SEPARATOR = "##"
RETHINK_NOTICE = "My action is not correct. Let me rethink."
STOP_SEQUENCES = ("</search>", "</answer>")

_TAG_KINDS = {
    "think": SegmentKind.THINK,
    "search": SegmentKind.SEARCH,
    "answer": SegmentKind.ANSWER,
    "information": SegmentKind.INFORMATION,
}
_KIND_TAGS = {v: k for k, v in _TAG_KINDS.items()}
_TAG = re.compile(r"<(/?)(think|search|answer|information)>")

PROMPT_TEMPLATE = (
    "Answer the given question. "
    "You must conduct reasoning inside <think> and </think> first every time you get new information. "
    "After reasoning, if you find you lack some knowledge, you can call a search engine by "
    "<search> query </search>, and it will return the searched results between "
    "<information> and </information>. "
    "Within <search> </search>, generate {n} diverse query variants — such as paraphrases, "
    "decomposed sub-questions, keyword expansions  to facilitate retrieval for more relevant knowledge. "
    "Separate multiple queries with ## so they can be run in parallel.\n"
    "Example format: <search> query_1 ## query_2 ## ... ## query_n </search>\n"
    "You can search as many times as you want. "
    "If you find no further external knowledge needed, you can directly provide the answer inside "
    "<answer> and </answer> without detailed illustrations. For example, <answer> abc </answer>.  "
    "Question: {question}.\n"
)


@dataclass(frozen=True)
class SearchAction:
    bundle: QueryBundle


@dataclass(frozen=True)
class AnswerAction:
    answer: str


@dataclass(frozen=True)
class Malformed:
    reason: str


ParsedAction = Union[SearchAction, AnswerAction, Malformed]


def render_segment(seg: Segment) -> str:
    if seg.kind is SegmentKind.RAW or seg.kind is SegmentKind.RETHINK:
        return seg.content
    tag = _KIND_TAGS[seg.kind]
    return f"<{tag}>{seg.content}</{tag}>"


def render_segments(segments: Iterable[Segment], sep: str = "") -> str:
    return sep.join(render_segment(s) for s in segments)


def render_information(summary: Summary) -> str:
    return f"<information>{summary.text}</information>"


def render_prompt(question: Question, cfg: RolloutConfig) -> str:
    return PROMPT_TEMPLATE.format(n=cfg.n_expansions, question=question.text)


def _scan(text: str, turn: int) -> tuple[list[tuple[int, Segment]], list[tuple[int, str]]]:
    # segments and issues, each tagged with the offset where it ends / occurs
    segments: list[tuple[int, Segment]] = []
    issues: list[tuple[int, str]] = []
    tags = list(_TAG.finditer(text))
    raw_start = 0
    i = 0

    def flush(upto: int):
        chunk = text[raw_start:upto]
        if chunk.strip():
            segments.append((upto, Segment(SegmentKind.RAW, chunk, turn)))

    while i < len(tags):
        m = tags[i]
        name = m.group(2)
        nxt = tags[i + 1] if i + 1 < len(tags) else None
        if m.group(1) == "/":
            issues.append((m.start(), f"stray </{name}>"))
        elif nxt is None:
            issues.append((m.start(), f"unclosed <{name}>"))
        elif nxt.group(1) != "/" or nxt.group(2) != name:
            issues.append((m.start(), f"<{name}> interrupted by {nxt.group(0)}"))
        else:
            flush(m.start())
            segments.append((nxt.end(), Segment(_TAG_KINDS[name], text[m.end() : nxt.start()], turn)))
            raw_start = nxt.end()
            i += 2
            continue
        i += 1
    flush(len(text))
    return segments, issues


def scan_segments(text: str, turn: int = 0) -> tuple[list[Segment], list[str]]:
    """Tokenize text into flat tagged segments.

    Text outside well-formed blocks becomes RAW segments (whitespace-only runs
    are dropped). Returns the segments plus a list of structural problems found
    (unclosed, stray or nested tags); offending tags are kept verbatim as RAW.
    """
    segments, issues = _scan(text, turn)
    return [s for _, s in segments], [msg for _, msg in issues]


def split_queries(body: str, source_turn: int = 0) -> QueryBundle | Malformed:
    queries = [q.strip() for q in body.split(QUERY_SEPARATOR)]
    queries = [q for q in queries if q]
    if not queries:
        return Malformed("empty query bundle")
    return QueryBundle(tuple(queries), source_turn)


def _demote(seg: Segment) -> Segment:
    # keep the original bytes, but as untrusted text
    return Segment(SegmentKind.RAW, render_segment(seg), seg.turn_index)


def scan_generation(raw: str, turn: int = 0) -> tuple[list[Segment], ParsedAction]:
    """Parse one policy generation into segments and the action it requests.

    The first closed <search> or <answer> block is terminal; anything after it
    is dropped. Structural problems before the terminal block, an empty search
    body, a policy-authored <information> block, or no terminal block at all
    make the action Malformed, in which case search/answer blocks are demoted
    to RAW so they cannot be mistaken for executed actions.
    """
    spans, issue_spans = _scan(raw, turn)
    segments = [s for _, s in spans]
    terminal = next(
        (i for i, s in enumerate(segments) if s.kind in (SegmentKind.SEARCH, SegmentKind.ANSWER)),
        None,
    )
    cut = len(raw)
    if terminal is not None:
        cut = spans[terminal][0]
        if terminal + 1 < len(segments):
            log.warning("discarding %d segment(s) after terminal tag", len(segments) - terminal - 1)
            segments = segments[: terminal + 1]
    issues = [msg for at, msg in issue_spans if at < cut]
    if any(s.kind is SegmentKind.INFORMATION for s in segments):
        issues.append("policy emitted an <information> block")

    action: ParsedAction
    if terminal is None:
        action = Malformed("no terminal action tag")
    elif issues:
        action = Malformed(issues[0])
    else:
        last = segments[-1]
        if last.kind is SegmentKind.SEARCH:
            parsed = split_queries(last.content, turn)
            action = parsed if isinstance(parsed, Malformed) else SearchAction(parsed)
        else:
            action = AnswerAction(last.content.strip())

    if isinstance(action, Malformed):
        segments = [_demote(s) if s.kind in _ACTION_KINDS else s for s in segments]
    return segments, action


_ACTION_KINDS = frozenset({SegmentKind.SEARCH, SegmentKind.ANSWER, SegmentKind.INFORMATION})
