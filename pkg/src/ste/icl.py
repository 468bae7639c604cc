"""Embedding, demonstration selection, tool retrieval and ICL prompt assembly."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import prompts
from .distill import PoolEntry
from .llm import DEFAULT_CONTEXT_LIMIT, Conversation, Gateway, LLMError, check_context, user
from .registry import ApiSpec, Registry, render_documentation

DEFAULT_DIM = 1024
SCORE_DECIMALS = 12


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedTrigramEmbedder:
    """Character-trigram term frequencies hashed into a fixed-size, L2-normalized vector."""

    def __init__(self, dimension: int = DEFAULT_DIM):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        t = " " + " ".join(text.lower().split()) + " "
        v = np.zeros(self.dimension, dtype=np.float64)
        for i in range(len(t) - 2):
            v[zlib.crc32(t[i:i + 3].encode("utf-8")) % self.dimension] += 1.0
        return v / np.linalg.norm(v)

    def embed_many(self, texts: Iterable[str]) -> np.ndarray:
        rows = [self.embed(t) for t in texts]
        return np.vstack(rows) if rows else np.zeros((0, self.dimension))


def embed_all(embedder: Embedder, texts: Sequence[str]) -> np.ndarray:
    many = getattr(embedder, "embed_many", None)
    if many is not None:
        return many(texts)
    return np.vstack([embedder.embed(t) for t in texts])


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def rank_by_similarity(scores: np.ndarray) -> list[int]:
    """Descending score; exact ties (after rounding away float noise) keep ascending index."""
    rounded = np.round(scores, SCORE_DECIMALS)
    return sorted(range(len(rounded)), key=lambda i: (-rounded[i], i))


class DemoSelector:
    """Pool embeddings are computed once; selection is then a read-only dot product."""

    def __init__(self, pool: Sequence[PoolEntry], embedder: Embedder | None = None):
        if not pool:
            raise ValueError("demonstration pool is empty")
        self.pool = list(pool)
        self.embedder = embedder if embedder is not None else HashedTrigramEmbedder()
        self.matrix = embed_all(self.embedder, [p.query for p in self.pool])

    def rank(self, query: str, k: int) -> list[tuple[int, float]]:
        if k < 0:
            raise ValueError("k must be >= 0")
        # report the rounded scores the order is based on, so they never increase
        scores = np.round(self.matrix @ self.embedder.embed(query), SCORE_DECIMALS)
        order = rank_by_similarity(scores)[: min(k, len(self.pool))]
        return [(i, float(scores[i])) for i in order]

    def select(self, query: str, k: int) -> list[PoolEntry]:
        return [self.pool[i] for i, _ in self.rank(query, k)]


def select_demos(query: str, pool: Sequence[PoolEntry], k: int, embedder: Embedder | None = None) -> list[PoolEntry]:
    return DemoSelector(pool, embedder).select(query, k)


def retrieve_tools(gold_api: str, registry: Registry, m: int, embedder: Embedder | None = None) -> list[ApiSpec]:
    """Oracle retrieval: rank documentation by similarity to the gold API's own documentation."""
    if gold_api not in registry:
        raise KeyError(f"unknown API {gold_api!r}")
    if m < 1:
        raise ValueError("m must be >= 1")
    embedder = embedder if embedder is not None else HashedTrigramEmbedder()
    specs = list(registry)
    matrix = embed_all(embedder, [render_documentation(s) for s in specs])
    gold = next(i for i, s in enumerate(specs) if s.name == gold_api)
    scores = matrix @ matrix[gold]
    rounded = np.round(scores, SCORE_DECIMALS)
    order = sorted(range(len(specs)), key=lambda i: (i != gold, -rounded[i], i))
    return [specs[i] for i in order[: min(m, len(specs))]]


def retrieve_tools_for_query(query: str, registry: Registry, m: int, embedder: Embedder | None = None) -> list[ApiSpec]:
    """Non-oracle retrieval: rank documentation by similarity to the query itself."""
    if m < 1:
        raise ValueError("m must be >= 1")
    embedder = embedder if embedder is not None else HashedTrigramEmbedder()
    specs = list(registry)
    matrix = embed_all(embedder, [render_documentation(s) for s in specs])
    order = rank_by_similarity(matrix @ embedder.embed(query))
    return [specs[i] for i in order[: min(m, len(specs))]]


def render_demo(entry: PoolEntry) -> str:
    return (
        f"User Query: {entry.query}\n"
        f"Action: {entry.call.api_name}\n"
        f"Action Input: {entry.call.arguments_json()}\n"
        f"Observation: {entry.execution_result}\n"
        f"Final Answer: {entry.response}"
    )


def assemble_icl_prompt(
    docs: Sequence[str],
    demos: Sequence[PoolEntry],
    query: str,
    context_limit: int = DEFAULT_CONTEXT_LIMIT,
    tag: str = "icl/predict",
) -> Conversation:
    """Documentation block, then demonstrations in the given order, then the test query."""
    doc_block = prompts.ICL_HEADER.format(api_descriptions="\n\n".join(docs))
    demo_block = ""
    if demos:
        demo_block = prompts.ICL_DEMOS + "\n\n" + "\n\n".join(render_demo(d) for d in demos)
    query_block = prompts.ICL_QUERY.format(query=query)
    check_context(
        {"api_documentation": doc_block, "demonstrations": demo_block, "query": query_block},
        context_limit,
    )
    text = "\n\n".join(b for b in (doc_block, demo_block, query_block) if b)
    return Conversation([user(text)], tag)


@dataclass
class IclPrediction:
    id: str
    query: str
    api_name: str
    raw_text: str
    tools: list[str]
    demos: list[str]
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "query": self.query,
            "api_name": self.api_name,
            "raw_text": self.raw_text,
            "tools": self.tools,
            "demos": self.demos,
            "error": self.error,
        }


def predict(conv: Conversation, gateway: Gateway) -> tuple[str, str | None]:
    """Model output for one ICL prompt; a backend failure yields empty text plus the error."""
    try:
        return gateway.complete(conv).content, None
    except LLMError as e:
        return "", str(e)


def run_icl_eval(
    tests: Sequence[dict],
    registry: Registry,
    gateway: Gateway,
    selector: DemoSelector | None,
    k: int = 8,
    tool_top: int = 15,
    retrieval: str = "oracle",
    most_similar_first: bool = True,
    context_limit: int = DEFAULT_CONTEXT_LIMIT,
) -> list[IclPrediction]:
    """Predict a call for each test record (needs ``query`` and gold ``api_name``)."""
    if retrieval not in ("oracle", "query"):
        raise ValueError("retrieval must be 'oracle' or 'query'")
    embedder = selector.embedder if selector is not None else HashedTrigramEmbedder()
    out = []
    for n, t in enumerate(tests):
        query, gold = t["query"], t["api_name"]
        if retrieval == "oracle":
            tools = retrieve_tools(gold, registry, tool_top, embedder)
        else:
            tools = retrieve_tools_for_query(query, registry, tool_top, embedder)
        demos = selector.select(query, k) if selector is not None and k > 0 else []
        if not most_similar_first:
            demos = demos[::-1]
        conv = assemble_icl_prompt([render_documentation(s) for s in tools], demos, query, context_limit)
        raw, err = predict(conv, gateway)
        out.append(IclPrediction(str(t.get("id", n)), query, gold, raw, [s.name for s in tools], [d.query for d in demos], err))
    return out
