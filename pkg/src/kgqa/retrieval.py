"""Candidate gathering by neighborhood expansion and cosine-threshold filtering.

A triple survives when its best cosine similarity against any key text
strictly exceeds epsilon. The kept set is canonically sorted so results do
not depend on candidate iteration order.
"""
from __future__ import annotations

from dataclasses import dataclass

from .embedding import Embedder, cosine_sim
from .extraction import Key, KeySet, serialize_key
from .kg_store import KnowledgeGraph, Triple

DEFAULT_EPSILON = 0.7
DEFAULT_HUB_CAP = 512


@dataclass
class RetrievalConfig:
    hops: int = 1
    hub_cap: int = DEFAULT_HUB_CAP
    resolve_threshold: float = 0.7

    def __post_init__(self) -> None:
        if self.hops < 1:
            raise ValueError("hops must be >= 1")
        if self.hub_cap < 1:
            raise ValueError("hub_cap must be positive")


def serialize_triple(t: Triple) -> str:
    return f"{t.head.surface} {t.relation} {t.tail.surface}"


@dataclass(frozen=True)
class ScoredTriple:
    triple: Triple
    best_key: Key
    score: float


@dataclass
class RetrievedTripleSet:
    kept: tuple[ScoredTriple, ...]
    candidate_count: int
    epsilon: float

    def triples(self) -> list[Triple]:
        return [s.triple for s in self.kept]


def gather_candidates(
    g: KnowledgeGraph,
    keys: KeySet,
    embedder: Embedder,
    cfg: RetrievalConfig,
) -> set[Triple]:
    """Union of neighborhood expansions over every resolvable key mention.

    Per-entity expansion is truncated at the hub cap, preferring the
    highest-scoring triples against the key set (lexicographically first
    when no keys can score).
    """
    key_texts = [text for _, text in keys.scoring_pairs()]
    key_vectors = [embedder.embed(t) for t in key_texts]
    candidates: set[Triple] = set()
    for mention in keys.mentions():
        entity = g.resolve_entity(mention, embedder, cfg.resolve_threshold)
        if entity is None:
            continue
        expansion = g.neighbors(entity, cfg.hops)
        if len(expansion) > cfg.hub_cap:
            if key_vectors:
                def best_score(t: Triple) -> float:
                    vec = embedder.embed(serialize_triple(t))
                    return max(cosine_sim(vec, kv) for kv in key_vectors)

                ranked = sorted(expansion, key=lambda t: (-best_score(t), t.sort_key()))
            else:
                ranked = sorted(expansion, key=Triple.sort_key)
            expansion = set(ranked[: cfg.hub_cap])
        candidates |= expansion
    return candidates


def filter_by_similarity(
    candidates: set[Triple],
    keys: KeySet,
    embedder: Embedder,
    epsilon: float = DEFAULT_EPSILON,
) -> RetrievedTripleSet:
    """Keep candidates whose max similarity over keys strictly exceeds epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    pairs = keys.scoring_pairs()
    key_vectors = [(key, embedder.embed(text)) for key, text in pairs]
    kept: list[ScoredTriple] = []
    for triple in candidates:
        vec = embedder.embed(serialize_triple(triple))
        best_key: Key | None = None
        best = float("-inf")
        for key, key_vec in key_vectors:
            score = cosine_sim(vec, key_vec)
            if score > best:
                best = score
                best_key = key
        if best_key is not None and best > epsilon:
            kept.append(ScoredTriple(triple=triple, best_key=best_key, score=best))
    kept.sort(key=lambda s: (-s.score, s.triple.sort_key()))
    return RetrievedTripleSet(kept=tuple(kept), candidate_count=len(candidates), epsilon=epsilon)
