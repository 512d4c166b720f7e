"""Turn a user query into an evidence context for the chat prompt.

The path is: embed the query, match entities by cosine similarity, pull the
relations those entities participate in from the graph (exact adjacency, not
vector search), and render everything as plain text within a character budget.
Every rendered evidence line is backed by one relation IRI in the store.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import GraphStore, RelationRow, query_relations_for_entity
from .ontology import OntologySpec
from .vectors import DocClass, Embedder, EntityDoc, VectorIndex

# Rendered verbatim when a query matches no relations; the chat prompt relies
# on this marker so the model can state that no references were found.
NO_RELATIONS_LINE = "No relations found: no additional reference data is available for this query."


@dataclass(frozen=True)
class RetrievalConfig:
    k_entities: int = 5
    k_relations: int = 10
    min_score: float = 0.0
    max_context_chars: int = 4000

    def __post_init__(self):
        if self.k_entities < 1 or self.k_relations < 1:
            raise ValueError("k_entities and k_relations must be >= 1")
        if not -1.0 <= self.min_score <= 1.0:
            raise ValueError("min_score must be within [-1, 1]")
        if self.max_context_chars < 1:
            raise ValueError("max_context_chars must be >= 1")


@dataclass(frozen=True)
class MatchedEntity:
    name: str
    entity_type: str
    score: float


@dataclass(frozen=True)
class ContextBlock:
    matched_entities: list[MatchedEntity]
    evidence: list[RelationRow]
    rendered: str


def match_entities(
    query: str,
    index: VectorIndex,
    embedder: Embedder,
    cfg: RetrievalConfig = RetrievalConfig(),
) -> list[tuple[EntityDoc, float]]:
    """Entity docs semantically closest to the query, best first."""
    if not query.strip() or len(index) == 0:
        return []
    query_vector = embedder.embed(query)
    if not query_vector.any():
        return []
    hits = index.search(query_vector, k=cfg.k_entities, doc_class=DocClass.ENTITY)
    out = []
    for hit in hits:
        if hit.score < cfg.min_score:
            continue
        doc = index.get(hit.id)
        if isinstance(doc, EntityDoc):
            out.append((doc, hit.score))
    return out


def gather_relations(
    matched: list[tuple[EntityDoc, float]],
    store: GraphStore,
    spec: OntologySpec,
    cfg: RetrievalConfig = RetrievalConfig(),
) -> list[RelationRow]:
    """Relations touching the matched entities, deduplicated and truncated.

    Ordered by (rank of the best-matching entity that pulled the relation in,
    relation IRI); increasing k_relations only ever appends to the result.
    """
    rows: list[RelationRow] = []
    seen: set[str] = set()
    for doc, _score in matched:
        for row in query_relations_for_entity(store, doc.name, spec):
            if row.relation_iri in seen:
                continue
            seen.add(row.relation_iri)
            rows.append(row)
    return rows[: cfg.k_relations]


def render_context(
    matched: list[tuple[EntityDoc, float]],
    evidence: list[RelationRow],
    cfg: RetrievalConfig = RetrievalConfig(),
) -> ContextBlock:
    """Deterministic plain-text rendering, truncated at whole-line boundaries."""
    lines: list[str] = []
    if matched:
        lines.append("Matched entities:")
        for doc, score in matched:
            lines.append(f"- {doc.name} ({doc.entity_type}, score={score:.4f})")
    evidence_lines: list[tuple[str, RelationRow]] = []
    if evidence:
        lines.append("Relations:")
        for row in evidence:
            line = f"{row.subject} —[{row.predicate}]→ {row.object} (source: {row.publication_id})"
            evidence_lines.append((line, row))
    else:
        lines.append(NO_RELATIONS_LINE)

    kept: list[str] = []
    kept_rows: list[RelationRow] = []
    used = 0
    pending = [(line, None) for line in lines] + evidence_lines
    for line, row in pending:
        cost = len(line) + (1 if kept else 0)
        if used + cost > cfg.max_context_chars:
            break
        kept.append(line)
        kept_rows.extend([row] if row is not None else [])
        used += cost

    return ContextBlock(
        matched_entities=[
            MatchedEntity(doc.name, doc.entity_type, score) for doc, score in matched
        ],
        evidence=kept_rows,
        rendered="\n".join(kept),
    )


def build_context(
    query: str,
    index: VectorIndex,
    embedder: Embedder,
    store: GraphStore,
    spec: OntologySpec,
    cfg: RetrievalConfig = RetrievalConfig(),
) -> ContextBlock:
    matched = match_entities(query, index, embedder, cfg)
    evidence = gather_relations(matched, store, spec, cfg)
    return render_context(matched, evidence, cfg)
