"""Normalize entity names, reconcile entity types, and drop degenerate relations.

Output relations are the clean set that enters the knowledge graph: canonical
lower-case names, one type per name, no self-relations, no duplicates on the
(relation, subject, object, publication) key.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError
from .extraction import ExtractionReport, ValidatedRelation
from .ontology import EntityType, OntologySpec, RelationType

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EntityRef:
    name: str
    type: EntityType


@dataclass(frozen=True)
class RefinedRelation:
    relation_type: RelationType
    subject: EntityRef
    object: EntityRef
    publication_id: str

    def __post_init__(self):
        if not self.subject.name or not self.object.name:
            raise ValueError("refined relation endpoints must have non-empty names")
        if self.subject.name == self.object.name:
            raise ValueError("self-relations are not representable")

    def key(self) -> tuple[str, str, str, str]:
        """Dedup key: relation label, canonical names, provenance."""
        return (
            self.relation_type.value,
            self.subject.name,
            self.object.name,
            self.publication_id,
        )


@dataclass(frozen=True)
class TypeResolution:
    chosen: EntityType
    observed: tuple[tuple[str, int], ...]  # (label, count), sorted for stable output


@dataclass
class RefinementStats:
    input_count: int = 0
    output_count: int = 0
    dropped_empty_name: int = 0
    dropped_self_relation: int = 0
    dropped_duplicate: int = 0

    def to_json_dict(self) -> dict:
        return dict(vars(self))


def normalize_entity_name(name: str, spec: OntologySpec) -> str:
    """Canonicalize an entity name; an empty result signals rejection.

    Lower-cases, trims, and single-spaces the name, then strips trailing
    tokens (repeatedly) and applies the synonym map to the whole string.
    Idempotent for any spec that passes load validation.
    """
    words = name.lower().split()
    while words and words[-1] in spec.trailing_tokens:
        words.pop()
    cleaned = " ".join(words)
    return spec.synonym_map.get(cleaned, cleaned)


def resolve_entity_types(
    relations: Sequence[ValidatedRelation], spec: OntologySpec
) -> tuple[dict[str, TypeResolution], list[ValidatedRelation]]:
    """Give every occurrence of a canonical name the same entity type.

    The chosen type is the most frequently observed one; ties go to the label
    listed earlier in ``spec.type_priority``. Names must already be normalized.
    """
    counts: dict[str, Counter] = {}
    for r in relations:
        counts.setdefault(r.entity1_name, Counter())[r.entity1_type] += 1
        counts.setdefault(r.entity2_name, Counter())[r.entity2_type] += 1

    resolution: dict[str, TypeResolution] = {}
    for name, observed in counts.items():
        chosen = min(observed, key=lambda t: (-observed[t], spec.priority_rank[t]))
        resolution[name] = TypeResolution(
            chosen=EntityType(chosen),
            observed=tuple(sorted(observed.items())),
        )

    rewritten = [
        ValidatedRelation(
            relation_type=r.relation_type,
            entity1_type=resolution[r.entity1_name].chosen.value,
            entity1_name=r.entity1_name,
            entity2_type=resolution[r.entity2_name].chosen.value,
            entity2_name=r.entity2_name,
            publication_id=r.publication_id,
        )
        for r in relations
    ]
    return resolution, rewritten


def dedupe_and_filter(relations: Iterable[ValidatedRelation]) -> list[RefinedRelation]:
    """Drop self-relations and duplicates; first occurrence wins, order kept."""
    seen: set[tuple[str, str, str, str]] = set()
    out: list[RefinedRelation] = []
    for r in relations:
        if r.entity1_name == r.entity2_name:
            continue
        key = (r.relation_type, r.entity1_name, r.entity2_name, r.publication_id)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            RefinedRelation(
                relation_type=RelationType(r.relation_type),
                subject=EntityRef(r.entity1_name, EntityType(r.entity1_type)),
                object=EntityRef(r.entity2_name, EntityType(r.entity2_type)),
                publication_id=r.publication_id,
            )
        )
    return out


def refine(
    raw: ExtractionReport | Sequence[ValidatedRelation], spec: OntologySpec
) -> tuple[list[RefinedRelation], RefinementStats]:
    """Full refinement pass: normalize, resolve types, dedupe, filter.

    Accounting invariant: input_count == output_count + all drop counters.
    """
    relations = list(raw.relations) if isinstance(raw, ExtractionReport) else list(raw)
    stats = RefinementStats(input_count=len(relations))

    normalized: list[ValidatedRelation] = []
    for r in relations:
        name1 = normalize_entity_name(r.entity1_name, spec)
        name2 = normalize_entity_name(r.entity2_name, spec)
        if not name1 or not name2:
            stats.dropped_empty_name += 1
            log.info("dropping relation with empty normalized name: %s", r)
            continue
        normalized.append(
            ValidatedRelation(
                relation_type=r.relation_type,
                entity1_type=r.entity1_type,
                entity1_name=name1,
                entity2_type=r.entity2_type,
                entity2_name=name2,
                publication_id=r.publication_id,
            )
        )

    _, rewritten = resolve_entity_types(normalized, spec)
    stats.dropped_self_relation = sum(
        1 for r in rewritten if r.entity1_name == r.entity2_name
    )
    refined = dedupe_and_filter(rewritten)
    stats.dropped_duplicate = (
        len(rewritten) - stats.dropped_self_relation - len(refined)
    )
    stats.output_count = len(refined)
    return refined, stats


# --- persistence --------------------------------------------------------------


def relation_to_json_dict(r: RefinedRelation) -> dict:
    return {
        "relation_type": r.relation_type.value,
        "subject": {"name": r.subject.name, "type": r.subject.type.value},
        "object": {"name": r.object.name, "type": r.object.type.value},
        "publication_id": r.publication_id,
    }


def write_refined(relations: Sequence[RefinedRelation], path: str | Path) -> None:
    """Persist refined relations, one JSON object per line."""
    with Path(path).open("w", encoding="utf-8") as f:
        for r in relations:
            f.write(json.dumps(relation_to_json_dict(r), ensure_ascii=False) + "\n")


def load_refined(path: str | Path) -> list[RefinedRelation]:
    relations = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            relations.append(
                RefinedRelation(
                    relation_type=RelationType(obj["relation_type"]),
                    subject=EntityRef(obj["subject"]["name"], EntityType(obj["subject"]["type"])),
                    object=EntityRef(obj["object"]["name"], EntityType(obj["object"]["type"])),
                    publication_id=obj["publication_id"],
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}:{lineno}: bad refined relation: {exc}") from exc
    return relations
