"""Distil the chunks retrieved for a query bundle into one short summary via a frozen LLM."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import WHITESPACE, Chunk, ChunkSet, Summary, Tokenizer
from .gateway import GenerationRequest, LLMGateway
from .tags import _TAG, render_information

SQUEEZE_TEMPLATE = (
    "You are a helpful assistant.\n"
    "You are given a series of queries and contexts.\n"
    "Return the answer to queries based on the Contexts and nothing else.\n"
    "\n"
    "Queries: QUERIES\n"
    "Contexts: CONTEXT\n"
    "Answer:"
)
_SLOTS = re.compile(r"QUERIES|CONTEXT")


class EmptyInput(ValueError):
    pass


class SummaryEmpty(RuntimeError):
    pass


@dataclass(frozen=True)
class SqueezeInput:
    queries: tuple[str, ...]
    chunk_sets: tuple[ChunkSet, ...]
    token_budget: int = 8192

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        object.__setattr__(self, "chunk_sets", tuple(self.chunk_sets))
        if len(self.queries) != len(self.chunk_sets):
            raise ValueError(f"{len(self.queries)} queries but {len(self.chunk_sets)} chunk sets")


def format_chunk(position: int, chunk: Chunk) -> str:
    return f"Doc {position} (Title: {chunk.title}) {chunk.text}"


def select_chunks(inp: SqueezeInput, tokenizer: Tokenizer = WHITESPACE) -> list[Chunk]:
    """Dedup by doc_id in first-seen order, then keep the longest prefix that fits the budget."""
    seen: set[str] = set()
    unique: list[Chunk] = []
    for cs in inp.chunk_sets:
        for c in cs.chunks:
            if c.doc_id not in seen:
                seen.add(c.doc_id)
                unique.append(c)
    kept: list[Chunk] = []
    used = 0
    for c in unique:
        cost = tokenizer.count(format_chunk(len(kept) + 1, c))
        if used + cost > inp.token_budget:
            break
        kept.append(c)
        used += cost
    return kept


def build_squeeze_prompt(inp: SqueezeInput, tokenizer: Tokenizer = WHITESPACE) -> str:
    if not inp.queries:
        raise EmptyInput("squeeze needs at least one query")
    return _render(inp.queries, select_chunks(inp, tokenizer))


def _render(queries, chunks: list[Chunk]) -> str:
    fills = {
        "QUERIES": "".join(f"\n{i}. {q}" for i, q in enumerate(queries, 1)),
        "CONTEXT": "".join(f"\n{format_chunk(i, c)}" for i, c in enumerate(chunks, 1)),
    }
    return _SLOTS.sub(lambda m: fills[m.group(0)], SQUEEZE_TEMPLATE)


def strip_protocol_tags(text: str) -> str:
    return _TAG.sub("", text)


def fit_injection(text: str, limit: int, tokenizer: Tokenizer = WHITESPACE) -> str:
    """Longest prefix of ``text`` whose rendered <information> block is within ``limit`` tokens."""
    budget = limit
    while budget > 0:
        cut = tokenizer.truncate(text, budget)
        if tokenizer.count(render_information(Summary(cut))) <= limit:
            return cut
        budget -= 1
    return ""


@dataclass
class Squeezer:
    """Calls a frozen summarizer model with the squeeze prompt.

    ``SqueezeInput.token_budget`` caps the squeezer's input;
    ``injection_limit`` caps the summary handed back to the policy.
    """

    gateway: LLMGateway
    max_tokens: int = 1024
    temperature: float = 0.0
    tokenizer: Tokenizer = field(default=WHITESPACE)

    @property
    def label(self) -> str:
        return getattr(self.gateway, "label", "squeezer")

    def squeeze(self, inp: SqueezeInput, injection_limit: int | None = None) -> Summary:
        if not inp.queries:
            raise EmptyInput("squeeze needs at least one query")
        chunks = select_chunks(inp, self.tokenizer)
        prompt = _render(inp.queries, chunks)
        result = self.gateway.generate(
            GenerationRequest(prompt, (), self.max_tokens, self.temperature)
        )
        # the summary is spliced into the policy transcript; it must not forge protocol tags
        text = strip_protocol_tags(result.text)
        if injection_limit is not None:
            text = fit_injection(text, injection_limit, self.tokenizer)
        if not text.strip():
            raise SummaryEmpty(f"{self.label} returned no usable text")
        return Summary(
            text=text,
            source_queries=inp.queries,
            source_doc_ids=tuple(c.doc_id for c in chunks),
            squeezer_model=self.label,
        )
