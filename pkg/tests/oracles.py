"""Independent reference implementations used to check the package.

Written from the textbook formulas with no shared code beyond the
tokenization rule, which is part of the contract.
"""

import math
import re
from collections import Counter

WORD = re.compile(r"[^\W_]+")


def words(text):
    return WORD.findall(text.lower())


def bm25_topk(docs, query, k, k1=1.2, b=0.75):
    """Score every document against every query term, then fully sort."""
    bags = [Counter(words(f"{d.title}\n{d.text}")) for d in docs]
    lens = [sum(bag.values()) for bag in bags]
    n = len(docs)
    avg = sum(lens) / n
    scored = []
    for d, bag, dl in zip(docs, bags, lens):
        s = 0.0
        matched = False
        for term, qtf in Counter(words(query)).items():
            tf = bag.get(term, 0)
            if tf == 0:
                continue
            matched = True
            df = sum(1 for other in bags if term in other)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            s += qtf * idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avg))
        if matched:
            scored.append((s, d.doc_id))
    scored.sort(key=lambda x: (-x[0], x[1]))
    return scored[:k]


def tfidf_cosine_top1(docs, query):
    """Plain log-tf / idf cosine ranking, a different lexical model for sanity checks."""
    bags = [Counter(words(f"{d.title} {d.text}")) for d in docs]
    n = len(docs)
    df = Counter(t for bag in bags for t in bag)

    def vec(bag):
        return {t: (1 + math.log(c)) * math.log(n / df[t]) for t, c in bag.items() if t in df}

    qv = vec(Counter(words(query)))
    best = None
    for d, bag in zip(docs, bags):
        dv = vec(bag)
        dot = sum(w * dv.get(t, 0.0) for t, w in qv.items())
        norm = math.sqrt(sum(w * w for w in dv.values())) or 1.0
        cand = (dot / norm, d.doc_id)
        if best is None or cand[0] > best[0]:
            best = cand
    return best[1]
