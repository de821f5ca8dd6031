"""Synthetic two-facet QA benchmark where answering needs the union of several query variants.

Each entity has a hometown document (found by its name) and an occupation
document that only mentions an alias. A single literal query recovers the
hometown; the occupation needs the alias variant. A configurable fraction of
entities state both facts in the hometown document, so one query suffices.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

from .core import Question
from .gateway import CallableGateway
from .retrieval import CorpusDoc
from .squeeze import Squeezer

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_HOMETOWN = re.compile(r"\bhometown (\w+)")
_OCCUPATION = re.compile(r"\boccupation (\w+)")
_N_VARIANTS = re.compile(r"generate (\d+) diverse query variants")
_QUESTION = re.compile(r"Question: (.*)\.\n")
_INFO = re.compile(r"<information>(.*?)</information>", re.S)
UNKNOWN = "unknown"


@dataclass(frozen=True)
class Benchmark:
    docs: tuple[CorpusDoc, ...]
    questions: tuple[Question, ...]
    variants: dict[str, tuple[str, ...]]  # question text -> ordered query variants
    gold_docs: dict[str, frozenset[str]]  # question id -> evidence doc ids


def _pseudo_words(rng: random.Random, count: int) -> list[str]:
    words: set[str] = set()
    out = []
    while len(out) < count:
        w = "".join(
            rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(rng.randint(3, 4))
        )
        if w not in words:
            words.add(w)
            out.append(w)
    return out


def make_benchmark(
    n_questions: int = 30,
    n_distractors: int = 40,
    single_doc_fraction: float = 0.3,
    seed: int = 0,
    dataset: str = "synthetic",
) -> Benchmark:
    rng = random.Random(seed)
    words = iter(_pseudo_words(rng, 4 * n_questions + 8 * n_distractors))
    docs: list[CorpusDoc] = []
    questions, variants, gold = [], {}, {}
    for i in range(n_questions):
        name, alias, city, job = (next(words) for _ in range(4))
        both = rng.random() < single_doc_fraction
        home_text = f"{name} grew up in the hometown {city}."
        if both:
            home_text += f" {name} has the occupation {job}."
        docs.append(CorpusDoc(f"h{i:03d}", name, home_text))
        docs.append(CorpusDoc(f"o{i:03d}", alias, f"The figure known as {alias} has the occupation {job}."))
        text = f"What is the hometown and occupation of {name}?"
        questions.append(Question(f"q{i:03d}", text, (f"{city} {job}",), dataset))
        variants[text] = (f"{name} hometown", f"{alias} occupation", f"{name} {alias} occupation")
        gold[f"q{i:03d}"] = frozenset({f"h{i:03d}", f"o{i:03d}"})
    for j in range(n_distractors):
        body = " ".join(next(words) for _ in range(8))
        docs.append(CorpusDoc(f"x{j:03d}", f"note {j}", f"An unrelated note about {body}."))
    rng.shuffle(docs)
    return Benchmark(tuple(docs), tuple(questions), variants, gold)


def oracle_policy(bench: Benchmark) -> CallableGateway:
    """Policy that knows each question's ideal variants and emits as many as the prompt asks for.

    First turn: think, then search with the first n variants. Second turn:
    answer from whatever facts the injected summary carries.
    """

    def act(prompt: str) -> str:
        m = _QUESTION.search(prompt)
        question = m.group(1)
        n = int(_N_VARIANTS.search(prompt).group(1))
        # the instructions mention the tags too; only the rollout so far counts
        infos = _INFO.findall(prompt[m.end():])
        if not infos:
            queries = " ## ".join(bench.variants[question][:n])
            return f"<think>I need both facets of the question.</think>\n<search>{queries}</search>"
        home, occ = _HOMETOWN.search(infos[-1]), _OCCUPATION.search(infos[-1])
        answer = f"{home.group(1)} {occ.group(1)}" if home and occ else UNKNOWN
        return f"<think>The summary covers what I found.</think>\n<answer>{answer}</answer>"

    return CallableGateway(act, label="oracle-policy")


def read_facts(prompt: str) -> str:
    """Squeezer stand-in: report the first hometown and occupation facts in the contexts."""
    context = prompt.split("Contexts:", 1)[1]
    facts = []
    if m := _HOMETOWN.search(context):
        facts.append(f"hometown {m.group(1)}")
    if m := _OCCUPATION.search(context):
        facts.append(f"occupation {m.group(1)}")
    return "; ".join(facts) if facts else "No relevant information in the contexts."


def reader_squeezer() -> Squeezer:
    return Squeezer(CallableGateway(read_facts, label="fact-reader"))
