import random

import pytest

from expandsqueeze import BM25Index, Collaborators, ScriptedGateway, Squeezer
from expandsqueeze.casestudies import CASES, TOY_CORPUS
from expandsqueeze.retrieval import CorpusDoc


@pytest.fixture(scope="session")
def toy_index():
    idx = BM25Index()
    idx.build(TOY_CORPUS)
    return idx


def case_collaborators(index, cases=CASES):
    by_id = {c.question.id: c for c in cases}
    return Collaborators(
        policy=lambda q: ScriptedGateway(by_id[q.id].policy_script, "policy"),
        retriever=index,
        squeezer=lambda q: Squeezer(ScriptedGateway(by_id[q.id].squeezer_script, "squeezer")),
    )


VOCAB = [f"w{i}" for i in range(40)]


def random_corpus(rng: random.Random, n_docs: int, vocab=VOCAB) -> list[CorpusDoc]:
    docs = []
    for i in range(n_docs):
        title = " ".join(rng.choices(vocab, k=rng.randint(0, 3)))
        text = " ".join(rng.choices(vocab, k=rng.randint(1, 25)))
        docs.append(CorpusDoc(f"d{rng.randint(0, 10**6):07d}_{i}", title, text))
    rng.shuffle(docs)
    return docs


def random_query(rng: random.Random, vocab=VOCAB) -> str:
    # sprinkle in out-of-vocabulary terms and punctuation
    words = rng.choices(vocab + ["zzz", "qqq"], k=rng.randint(1, 6))
    return rng.choice([" ", ", ", "  "]).join(words)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
