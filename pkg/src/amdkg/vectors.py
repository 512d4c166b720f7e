"""Embeddings, document classes, and exact cosine top-k search.

Search is a full scan: at this corpus scale exactness is cheap and it keeps
the brute-force test oracle meaningful. The hashing embedder gives the whole
system a deterministic, network-free embedding path; an HTTP client covers a
real embedding service.

Snapshot file layout (little-endian):
    magic  b"KGV1"
    u32    dim
    u32    doc count
    per doc:
        u8   class tag (1=entity, 2=relation, 3=publication)
        str  id                         (str = u32 byte length + UTF-8 bytes)
        strs class fields: entity -> name, entity_type
                           relation -> predicate, subject, object, publication_ref
                           publication -> publication_id
        f32*dim vector
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np
import requests

from .errors import InputError, TransportError
from .graph import (
    GraphStore,
    GraphVocabulary,
    Iri,
    Literal,
    PROV_WAS_DERIVED_FROM,
    RDF_TYPE,
    RDFS_LABEL,
    relation_row,
)
from .ontology import OntologySpec

DEFAULT_DIM = 384
SNAPSHOT_MAGIC = b"KGV1"


class DocClass(str, enum.Enum):
    ENTITY = "entity"
    RELATION = "relation"
    PUBLICATION = "publication"


_CLASS_TAGS = {DocClass.ENTITY: 1, DocClass.RELATION: 2, DocClass.PUBLICATION: 3}
_TAG_CLASSES = {v: k for k, v in _CLASS_TAGS.items()}


@dataclass(frozen=True)
class EntityDoc:
    id: str
    name: str
    entity_type: str
    vector: np.ndarray

    doc_class = DocClass.ENTITY

    def embed_text(self) -> str:
        return f"{self.name} ({self.entity_type})"


@dataclass(frozen=True)
class RelationDoc:
    id: str
    predicate: str
    subject: str
    object: str
    publication_ref: str
    vector: np.ndarray

    doc_class = DocClass.RELATION

    def embed_text(self) -> str:
        return f"{self.subject} {self.predicate} {self.object}"


@dataclass(frozen=True)
class PublicationDoc:
    id: str
    publication_id: str
    vector: np.ndarray

    doc_class = DocClass.PUBLICATION

    def embed_text(self) -> str:
        return self.publication_id


Doc = EntityDoc | RelationDoc | PublicationDoc


@dataclass(frozen=True)
class SearchHit:
    id: str
    score: float
    doc_class: DocClass


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a| |b|), clamped to [-1, 1].

    Raises ValueError on dimension mismatch and on zero vectors; the two
    contract violations are reported with distinct messages.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    score = float(np.dot(a, b) / (norm_a * norm_b))
    return max(-1.0, min(1.0, score))


# --- embedders -----------------------------------------------------------------


class Embedder:
    """Contract: text -> fixed-dimension vector, same text -> same vector."""

    dim: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class HashingEmbedder(Embedder):
    """Deterministic offline embedder: hashed character trigrams, L2-normalized.

    The text is lower-cased and padded with one space on each side, so any
    non-empty text produces at least one trigram and a unit-norm vector.
    Needs no network and is stable across processes and platforms.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float64)
        if text:
            padded = f" {text.lower()} "
            for i in range(len(padded) - 2):
                gram = padded[i : i + 3]
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=5).digest()
                bucket = int.from_bytes(digest[:4], "little") % self.dim
                sign = 1.0 if digest[4] & 1 else -1.0
                v[bucket] += sign
        norm = np.linalg.norm(v)
        if norm > 0:
            v /= norm
        return v.astype(np.float32)


class HttpEmbedder(Embedder):
    """Client for an embedding service: POST {"text": ...} -> {"vector": [...]}."""

    def __init__(self, url: str, dim: int = DEFAULT_DIM, timeout: float = 30.0):
        self.url = url
        self.dim = dim
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        try:
            resp = requests.post(self.url, json={"text": text}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"embedding service unreachable: {exc}") from exc
        if resp.status_code >= 400:
            raise TransportError(
                f"embedding service returned {resp.status_code}", status=resp.status_code
            )
        try:
            vector = np.asarray(resp.json()["vector"], dtype=np.float32)
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"malformed embedding response: {exc}") from exc
        if vector.shape != (self.dim,):
            raise TransportError(
                f"embedding service returned dim {vector.shape}, expected ({self.dim},)"
            )
        return vector


# --- the index -----------------------------------------------------------------


class VectorIndex:
    """Exact-search vector index over entity/relation/publication documents."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._docs: dict[str, Doc] = {}  # insertion-ordered

    def __len__(self) -> int:
        return len(self._docs)

    def get(self, doc_id: str) -> Doc | None:
        return self._docs.get(doc_id)

    def docs(self) -> list[Doc]:
        return list(self._docs.values())

    def add(self, doc: Doc) -> str:
        """Insert a document; an existing id is replaced."""
        vector = np.asarray(doc.vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise ValueError(f"vector dim {vector.shape} does not match index dim ({self.dim},)")
        if not np.all(np.isfinite(vector)):
            raise ValueError("vector components must be finite")
        if not vector.any():
            raise ValueError("zero vectors cannot be indexed (cosine undefined)")
        self._docs[doc.id] = replace(doc, vector=vector)
        return doc.id

    def validate_refs(self) -> None:
        """Check that every RelationDoc's publication ref is indexed."""
        pub_ids = {d.id for d in self._docs.values() if isinstance(d, PublicationDoc)}
        for doc in self._docs.values():
            if isinstance(doc, RelationDoc) and doc.publication_ref not in pub_ids:
                raise ValueError(
                    f"relation {doc.id} references unindexed publication "
                    f"{doc.publication_ref!r}"
                )

    def search(
        self, query: np.ndarray, k: int, doc_class: DocClass | None = None
    ) -> list[SearchHit]:
        """The k highest-cosine documents, full scan, ties broken by id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        query = np.asarray(query, dtype=np.float64)
        hits = [
            SearchHit(
                id=doc.id,
                score=cosine_similarity(query, doc.vector),
                doc_class=doc.doc_class,
            )
            for doc in self._docs.values()
            if doc_class is None or doc.doc_class == doc_class
        ]
        hits.sort(key=lambda h: (-h.score, h.id))
        return hits[:k]

    # --- snapshot io ---

    def save(self, path: str | Path) -> None:
        buf = bytearray()
        buf += SNAPSHOT_MAGIC
        buf += struct.pack("<II", self.dim, len(self._docs))
        for doc in self._docs.values():
            buf += struct.pack("<B", _CLASS_TAGS[doc.doc_class])
            for text in self._doc_strings(doc):
                raw = text.encode("utf-8")
                buf += struct.pack("<I", len(raw)) + raw
            buf += np.asarray(doc.vector, dtype="<f4").tobytes()
        Path(path).write_bytes(bytes(buf))

    @staticmethod
    def _doc_strings(doc: Doc) -> list[str]:
        if isinstance(doc, EntityDoc):
            return [doc.id, doc.name, doc.entity_type]
        if isinstance(doc, RelationDoc):
            return [doc.id, doc.predicate, doc.subject, doc.object, doc.publication_ref]
        return [doc.id, doc.publication_id]

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        data = Path(path).read_bytes()
        view = memoryview(data)
        if bytes(view[:4]) != SNAPSHOT_MAGIC:
            raise InputError(f"{path}: not an index snapshot (bad magic)")
        dim, count = struct.unpack_from("<II", view, 4)
        index = cls(dim=dim)
        offset = 12

        def read_str() -> str:
            nonlocal offset
            (length,) = struct.unpack_from("<I", view, offset)
            offset += 4
            raw = bytes(view[offset : offset + length])
            offset += length
            return raw.decode("utf-8")

        try:
            for _ in range(count):
                (tag,) = struct.unpack_from("<B", view, offset)
                offset += 1
                doc_class = _TAG_CLASSES.get(tag)
                if doc_class is None:
                    raise InputError(f"{path}: unknown doc class tag {tag}")
                if doc_class == DocClass.ENTITY:
                    fields = [read_str() for _ in range(3)]
                elif doc_class == DocClass.RELATION:
                    fields = [read_str() for _ in range(5)]
                else:
                    fields = [read_str() for _ in range(2)]
                vector = np.frombuffer(view, dtype="<f4", count=dim, offset=offset).copy()
                offset += 4 * dim
                if doc_class == DocClass.ENTITY:
                    index.add(EntityDoc(fields[0], fields[1], fields[2], vector))
                elif doc_class == DocClass.RELATION:
                    index.add(RelationDoc(fields[0], fields[1], fields[2], fields[3], fields[4], vector))
                else:
                    index.add(PublicationDoc(fields[0], fields[1], vector))
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise InputError(f"{path}: corrupt index snapshot: {exc}") from exc
        index.validate_refs()
        return index


def build_index(docs: Iterable[Doc], dim: int = DEFAULT_DIM) -> VectorIndex:
    index = VectorIndex(dim=dim)
    for doc in docs:
        index.add(doc)
    return index


def embed_and_index_graph(
    store: GraphStore,
    embedder: Embedder,
    spec: OntologySpec,
    dim: int | None = None,
) -> VectorIndex:
    """Mirror the graph into the index: one doc per publication, entity, relation.

    Embedded texts: entity "name (type)", relation "subject predicate object",
    publication its identifier. Nodes are visited in sorted-IRI order so runs
    with a deterministic embedder produce byte-identical snapshots.
    """
    vocab = GraphVocabulary.from_spec(spec)
    index = VectorIndex(dim=dim or embedder.dim)

    pubs = sorted({t.object for t in store.triples(p=PROV_WAS_DERIVED_FROM)
                   if isinstance(t.object, Iri)})
    for pub in pubs:
        pub_id = _label(store, pub)
        doc = PublicationDoc(id=str(pub), publication_id=pub_id, vector=np.empty(0))
        index.add(replace(doc, vector=embedder.embed(doc.embed_text())))

    entities = sorted({
        t.subject
        for t in store.triples(p=RDF_TYPE)
        if t.object in vocab.class_labels
    })
    for node in entities:
        type_iri = next(
            t.object for t in store.triples(s=node, p=RDF_TYPE)
            if t.object in vocab.class_labels
        )
        doc = EntityDoc(
            id=str(node),
            name=_label(store, node),
            entity_type=vocab.class_labels[type_iri],
            vector=np.empty(0),
        )
        index.add(replace(doc, vector=embedder.embed(doc.embed_text())))

    relations = sorted(
        t.subject for t in store.triples(p=RDF_TYPE, o=vocab.relation_class)
    )
    for rel in relations:
        row = relation_row(store, rel, spec)
        doc = RelationDoc(
            id=str(rel),
            predicate=row.predicate,
            subject=row.subject,
            object=row.object,
            publication_ref=_pub_ref(store, rel),
            vector=np.empty(0),
        )
        index.add(replace(doc, vector=embedder.embed(doc.embed_text())))
    index.validate_refs()
    return index


def _label(store: GraphStore, node: Iri) -> str:
    for t in store.triples(s=node, p=RDFS_LABEL):
        if isinstance(t.object, Literal):
            return t.object.value
    return str(node)


def _pub_ref(store: GraphStore, rel: Iri) -> str:
    for t in store.triples(s=rel, p=PROV_WAS_DERIVED_FROM):
        if isinstance(t.object, Iri):
            return str(t.object)
    return ""
