"""Lexical BM25 search engine, remote retrieval client/server, and parallel bundle retrieval."""

from __future__ import annotations

import gzip
import hashlib
import heapq
import json
import logging
import math
import re
import threading
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterable, Protocol

import httpx

from .core import Chunk, ChunkSet, EmptyGoldSet, QueryBundle, SchemaError

log = logging.getLogger(__name__)

INDEX_FORMAT = "expandsqueeze.bm25"
INDEX_VERSION = 1

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; no stemming, no stopwords."""
    return _TOKEN.findall(text.lower())


class IndexNotBuilt(RuntimeError):
    pass


class RetrievalError(RuntimeError):
    pass


class BundleRetrievalError(RetrievalError):
    def __init__(self, query_index: int, query: str, cause: BaseException):
        super().__init__(f"query #{query_index} ({query!r}) failed: {cause}")
        self.query_index = query_index
        self.query = query
        self.__cause__ = cause


class Retriever(Protocol):
    def retrieve(self, query: str, k: int) -> ChunkSet: ...

    def identity(self) -> str: ...


@dataclass(frozen=True)
class CorpusDoc:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class IndexStats:
    doc_count: int
    term_count: int
    avg_doc_len: float
    build_time_ms: int
    rejected: int = 0


def bm25_idf(df: int, n_docs: int) -> float:
    # Lucene-style smoothing; strictly positive for any df <= N
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def bm25_term_weight(tf: int, doc_len: int, avg_len: float, idf: float, k1: float, b: float) -> float:
    return idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * doc_len / avg_len))


class BM25Index:
    """Immutable in-memory inverted index.

    Construct empty, then call :meth:`build` exactly once (or use
    :func:`ingest_corpus` / :meth:`load`). Safe to share across threads after
    building.
    """

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self._docs: list[CorpusDoc] | None = None
        self._postings: dict[str, list[tuple[int, int]]] = {}
        self._doc_len: list[int] = []
        self._avg_len = 0.0
        self._identity = ""
        self.stats: IndexStats | None = None

    @property
    def built(self) -> bool:
        return self._docs is not None

    def build(self, docs: Iterable[CorpusDoc], rejected: int = 0) -> IndexStats:
        if self.built:
            raise RuntimeError("index is immutable once built")
        t0 = time.perf_counter()
        docs = list(docs)
        seen: set[str] = set()
        for d in docs:
            if d.doc_id in seen:
                raise ValueError(f"duplicate doc_id {d.doc_id!r}")
            seen.add(d.doc_id)

        postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        digest = hashlib.sha256()
        for idx, d in enumerate(docs):
            tokens = tokenize(f"{d.title}\n{d.text}")
            self._doc_len.append(len(tokens))
            for term, tf in Counter(tokens).items():
                postings[term].append((idx, tf))
            digest.update(json.dumps([d.doc_id, d.title, d.text]).encode())
        self._postings = dict(postings)
        self._avg_len = sum(self._doc_len) / len(docs) if docs else 0.0
        self._identity = f"bm25:{digest.hexdigest()[:16]}"
        self._docs = docs
        self.stats = IndexStats(
            doc_count=len(docs),
            term_count=len(self._postings),
            avg_doc_len=self._avg_len,
            build_time_ms=int((time.perf_counter() - t0) * 1000),
            rejected=rejected,
        )
        return self.stats

    def identity(self) -> str:
        return self._identity

    def __len__(self) -> int:
        return len(self._docs or ())

    def scores(self, query: str) -> dict[int, float]:
        """Raw BM25 scores for every document matching at least one query term."""
        if self._docs is None:
            raise IndexNotBuilt("call build() before retrieving")
        n = len(self._docs)
        acc: dict[int, float] = {}
        for term, qtf in Counter(tokenize(query)).items():
            plist = self._postings.get(term)
            if not plist:
                continue
            idf = bm25_idf(len(plist), n)
            for idx, tf in plist:
                w = qtf * bm25_term_weight(tf, self._doc_len[idx], self._avg_len, idf, self.k1, self.b)
                acc[idx] = acc.get(idx, 0.0) + w
        return acc

    def retrieve(self, query: str, k: int) -> ChunkSet:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        acc = self.scores(query)
        docs = self._docs
        top = heapq.nsmallest(k, acc.items(), key=lambda kv: (-kv[1], docs[kv[0]].doc_id))
        chunks = tuple(
            Chunk(docs[i].doc_id, docs[i].title, docs[i].text, score, rank)
            for rank, (i, score) in enumerate(top, start=1)
        )
        return ChunkSet(query, chunks)

    # -- persistence --

    def save(self, path: str | Path) -> None:
        if self._docs is None:
            raise IndexNotBuilt("cannot save an unbuilt index")
        payload = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "k1": self.k1,
            "b": self.b,
            "identity": self._identity,
            "stats": vars(self.stats),
            "docs": [[d.doc_id, d.title, d.text] for d in self._docs],
            "doc_len": self._doc_len,
            "postings": self._postings,
        }
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "BM25Index":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != INDEX_FORMAT:
            raise ValueError(f"{path}: not an index file (format={payload.get('format')!r})")
        if payload.get("version") != INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {payload.get('version')}")
        idx = cls(k1=payload["k1"], b=payload["b"])
        idx._docs = [CorpusDoc(*d) for d in payload["docs"]]
        idx._doc_len = payload["doc_len"]
        idx._postings = {t: [tuple(p) for p in pl] for t, pl in payload["postings"].items()}
        idx._avg_len = sum(idx._doc_len) / len(idx._docs) if idx._docs else 0.0
        idx._identity = payload["identity"]
        idx.stats = IndexStats(**payload["stats"])
        return idx


def read_corpus(path: str | Path, skip_malformed: bool = False) -> tuple[list[CorpusDoc], int]:
    """Parse a JSONL corpus of {doc_id, title, text} objects.

    Returns (docs, rejected_count). Malformed lines and duplicate ids raise
    SchemaError unless ``skip_malformed`` is set, in which case they are
    counted and skipped.
    """
    docs: list[CorpusDoc] = []
    seen: set[str] = set()
    rejected = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = _parse_doc(line, line_no, seen)
            except SchemaError:
                if not skip_malformed:
                    raise
                log.warning("skipping malformed corpus line %d", line_no)
                rejected += 1
                continue
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs, rejected


def _parse_doc(line: str, line_no: int, seen: set[str]) -> CorpusDoc:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise SchemaError(line_no, "expected an object")
    doc_id = obj.get("doc_id", obj.get("id"))
    if isinstance(doc_id, int):
        doc_id = str(doc_id)
    title, text = obj.get("title", ""), obj.get("text", obj.get("contents"))
    if not isinstance(doc_id, str) or not doc_id:
        raise SchemaError(line_no, "missing doc_id")
    if not isinstance(title, str) or not isinstance(text, str):
        raise SchemaError(line_no, "title and text must be strings")
    if doc_id in seen:
        raise SchemaError(line_no, f"duplicate doc_id {doc_id!r}")
    return CorpusDoc(doc_id, title, text)


def ingest_corpus(path: str | Path, skip_malformed: bool = False, k1: float = 1.2, b: float = 0.75) -> BM25Index:
    docs, rejected = read_corpus(path, skip_malformed=skip_malformed)
    index = BM25Index(k1=k1, b=b)
    index.build(docs, rejected=rejected)
    log.info("indexed %d docs (%d rejected) from %s", len(docs), rejected, path)
    return index


# --- remote backend ------------------------------------------------------------


class RemoteRetriever:
    """Client for a retrieval service speaking {query, topk} -> {results: [...]}."""

    def __init__(self, url: str, timeout: float = 30.0, client: httpx.Client | None = None):
        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def identity(self) -> str:
        return f"remote:{self.url}"

    def retrieve(self, query: str, k: int) -> ChunkSet:
        try:
            resp = self._client.post(self.url, json={"query": query, "topk": k})
            resp.raise_for_status()
            results = resp.json()["results"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise RetrievalError(f"remote retrieval failed: {exc}") from exc
        ordered = sorted(
            (
                (float(r["score"]), str(r["doc_id"]), r.get("title", ""), r["text"])
                for r in results[:k]
            ),
            key=lambda r: (-r[0], r[1]),
        )
        chunks = [Chunk(doc_id, title, text, score, rank) for rank, (score, doc_id, title, text) in enumerate(ordered, 1)]
        return ChunkSet(query, chunks)


def make_retrieval_server(retriever: Retriever, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """HTTP server exposing ``retriever`` over the remote JSON protocol.

    Call ``serve_forever()`` (or run it in a thread); ``server_address`` has the
    bound port when ``port=0``.
    """

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            try:
                body = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
                query, topk = body["query"], int(body.get("topk", 10))
                if not isinstance(query, str) or topk < 1:
                    raise ValueError("bad request")
            except (ValueError, KeyError, TypeError) as exc:
                self._reply(400, {"error": str(exc)})
                return
            cs = retriever.retrieve(query, topk)
            self._reply(200, {"results": [
                {"doc_id": c.doc_id, "title": c.title, "text": c.text, "score": c.score} for c in cs.chunks
            ]})

        def _reply(self, status: int, payload: dict):
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, fmt, *args):
            log.debug("retrieval server: " + fmt, *args)

    return ThreadingHTTPServer((host, port), Handler)


def serve_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    return t


# --- bundle retrieval --------------------------------------------------------


def retrieve_bundle(
    retriever: Retriever,
    bundle: QueryBundle,
    k: int,
    parallel: bool = True,
    max_workers: int | None = None,
) -> list[ChunkSet]:
    """One ChunkSet per query, in bundle order.

    Fan-out is an execution detail; results equal sequential retrieval. The
    first failing query (by bundle position) is re-raised as
    BundleRetrievalError carrying its index.
    """
    queries = bundle.queries
    if not parallel or len(queries) <= 1:
        out = []
        for i, q in enumerate(queries):
            try:
                out.append(retriever.retrieve(q, k))
            except Exception as exc:
                raise BundleRetrievalError(i, q, exc) from exc
        return out

    with ThreadPoolExecutor(max_workers=max_workers or len(queries)) as pool:
        futures = [pool.submit(retriever.retrieve, q, k) for q in queries]
    out = []
    for i, (q, fut) in enumerate(zip(queries, futures)):
        exc = fut.exception()
        if exc is not None:
            raise BundleRetrievalError(i, q, exc) from exc
        out.append(fut.result())
    return out


def recall_at(retriever: Retriever, bundle: QueryBundle, k: int, gold_doc_ids: Iterable[str]) -> float:
    """Fraction of gold documents covered by the union of top-k results across the bundle."""
    gold = set(gold_doc_ids)
    if not gold:
        raise EmptyGoldSet("recall needs at least one gold doc id")
    found: set[str] = set()
    for cs in retrieve_bundle(retriever, bundle, k):
        found.update(cs.doc_ids)
    return len(found & gold) / len(gold)
