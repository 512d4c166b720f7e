"""RDF triples with provenance, an in-process indexed store, and SPARQL updates.

Each refined relation is reified as a relation node so the provenance link
to its publication (prov:wasDerivedFrom) can attach to the statement itself. All
identifiers are minted deterministically: entity and publication IRIs embed
the percent-encoded canonical name, relation IRIs embed a content hash, so
re-ingesting the same corpus can never duplicate anything.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator
from urllib.parse import quote

import requests

from .errors import InputError, SealedStoreError, TransportError
from .ontology import ENTITY_LABELS, OntologySpec
from .refine import RefinedRelation

RDF_TYPE_IRI = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDFS_LABEL_IRI = "http://www.w3.org/2000/01/rdf-schema#label"
PROV_WAS_DERIVED_FROM_IRI = "http://www.w3.org/ns/prov#wasDerivedFrom"

_IRI_FORBIDDEN = set(' <>"{}|\\^`') | {chr(c) for c in range(0x21)}
_SCHEME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")


class Iri(str):
    """An absolute IRI. Construction validates the syntax."""

    def __new__(cls, value: str):
        if not _SCHEME_RE.match(value):
            raise ValueError(f"not an absolute IRI (missing scheme): {value!r}")
        bad = set(value) & _IRI_FORBIDDEN
        if bad:
            raise ValueError(f"IRI contains forbidden character {bad.pop()!r}: {value!r}")
        return super().__new__(cls, value)


RDF_TYPE = Iri(RDF_TYPE_IRI)
RDFS_LABEL = Iri(RDFS_LABEL_IRI)
PROV_WAS_DERIVED_FROM = Iri(PROV_WAS_DERIVED_FROM_IRI)


@dataclass(frozen=True)
class Literal:
    value: str
    datatype: Iri | None = None
    lang: str | None = None


@dataclass(frozen=True)
class Triple:
    subject: Iri
    predicate: Iri
    object: Iri | Literal


def _camel(label: str) -> str:
    return "".join(part.capitalize() for part in label.split("_"))


@dataclass(frozen=True)
class GraphVocabulary:
    """The ontology IRIs minted under a spec's base IRI."""

    relation_class: Iri
    has_subject: Iri
    has_object: Iri
    predicate_label: Iri
    entity_classes: dict[str, Iri]
    class_labels: dict[Iri, str]

    @classmethod
    def from_spec(cls, spec: OntologySpec) -> "GraphVocabulary":
        base = spec.base_iri + "ontology/"
        classes = {label: Iri(base + _camel(label)) for label in ENTITY_LABELS}
        return cls(
            relation_class=Iri(base + "Relation"),
            has_subject=Iri(base + "hasSubject"),
            has_object=Iri(base + "hasObject"),
            predicate_label=Iri(base + "predicateLabel"),
            entity_classes=classes,
            class_labels={iri: label for label, iri in classes.items()},
        )


# --- identifier minting --------------------------------------------------------


def mint_entity_iri(canonical_name: str, spec: OntologySpec) -> Iri:
    return Iri(spec.base_iri + "entity/" + quote(canonical_name, safe=""))


def mint_publication_iri(publication_id: str, spec: OntologySpec) -> Iri:
    return Iri(spec.base_iri + "publication/" + quote(publication_id, safe=""))


def mint_relation_iri(r: RefinedRelation, spec: OntologySpec) -> Iri:
    """Content-addressed relation identifier.

    The canonical serialization is the four key fields joined with newlines:
    ``relation_type\\nsubject_name\\nobject_name\\npublication_id``, UTF-8
    encoded and hashed with SHA-256; the hex digest is appended to
    ``base_iri + "relation/"``. Equal relations always mint the same IRI.
    """
    canonical = "\n".join(
        (r.relation_type.value, r.subject.name, r.object.name, r.publication_id)
    )
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return Iri(spec.base_iri + "relation/" + digest)


def relation_to_triples(r: RefinedRelation, spec: OntologySpec) -> list[Triple]:
    """Emit the reified pattern for one relation: exactly ten triples.

    One relation-node typing triple, the three links (subject, predicate
    label, object), typing and label for both entity nodes, the provenance
    link, and the publication label. Entity/publication node triples repeat
    across relations and collapse under the store's set semantics.
    """
    vocab = GraphVocabulary.from_spec(spec)
    rel = mint_relation_iri(r, spec)
    subj = mint_entity_iri(r.subject.name, spec)
    obj = mint_entity_iri(r.object.name, spec)
    pub = mint_publication_iri(r.publication_id, spec)
    return [
        Triple(rel, RDF_TYPE, vocab.relation_class),
        Triple(rel, vocab.has_subject, subj),
        Triple(rel, vocab.predicate_label, Literal(r.relation_type.value)),
        Triple(rel, vocab.has_object, obj),
        Triple(subj, RDF_TYPE, vocab.entity_classes[r.subject.type.value]),
        Triple(subj, RDFS_LABEL, Literal(r.subject.name)),
        Triple(obj, RDF_TYPE, vocab.entity_classes[r.object.type.value]),
        Triple(obj, RDFS_LABEL, Literal(r.object.name)),
        Triple(rel, PROV_WAS_DERIVED_FROM, pub),
        Triple(pub, RDFS_LABEL, Literal(r.publication_id)),
    ]


# --- the store -----------------------------------------------------------------


class GraphStore:
    """Set-semantics triple store with subject/predicate/object indexes.

    Writes are serialized by a lock; ``seal()`` switches the store to
    read-only for the serving phase, after which reads need no locking.
    """

    def __init__(self):
        self._triples: set[Triple] = set()
        self._by_subject: dict[Iri, set[Triple]] = {}
        self._by_predicate: dict[Iri, set[Triple]] = {}
        self._by_object: dict[object, set[Triple]] = {}
        self._sealed = False
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphStore):
            return NotImplemented
        return self._triples == other._triples

    @property
    def sealed(self) -> bool:
        return self._sealed

    def seal(self) -> "GraphStore":
        self._sealed = True
        return self

    def add(self, triple: Triple) -> bool:
        """Insert a triple; returns False if it was already present."""
        with self._lock:
            if self._sealed:
                raise SealedStoreError("store is sealed for serving")
            if triple in self._triples:
                return False
            self._triples.add(triple)
            self._by_subject.setdefault(triple.subject, set()).add(triple)
            self._by_predicate.setdefault(triple.predicate, set()).add(triple)
            self._by_object.setdefault(triple.object, set()).add(triple)
            return True

    def add_all(self, triples: Iterable[Triple]) -> int:
        return sum(1 for t in triples if self.add(t))

    def triples(self, s=None, p=None, o=None) -> list[Triple]:
        """Match by any fixed positions; None is a wildcard."""
        candidates: set[Triple] | None = None
        if s is not None:
            candidates = self._by_subject.get(s, set())
        if p is not None:
            by_p = self._by_predicate.get(p, set())
            candidates = by_p if candidates is None else candidates & by_p
        if o is not None:
            by_o = self._by_object.get(o, set())
            candidates = by_o if candidates is None else candidates & by_o
        if candidates is None:
            candidates = self._triples
        return list(candidates)


def load_relations(relations: Iterable[RefinedRelation], spec: OntologySpec) -> GraphStore:
    """Build a store holding the full triple pattern for every relation."""
    store = GraphStore()
    for r in relations:
        store.add_all(relation_to_triples(r, spec))
    return store


# --- serialization -------------------------------------------------------------

_ECHAR = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t",
          "\b": "\\b", "\f": "\\f"}


def _escape_string(value: str) -> str:
    out = []
    for ch in value:
        if ch in _ECHAR:
            out.append(_ECHAR[ch])
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _term(obj: Iri | Literal) -> str:
    if isinstance(obj, Literal):
        text = f'"{_escape_string(obj.value)}"'
        if obj.lang:
            return f"{text}@{obj.lang}"
        if obj.datatype:
            return f"{text}^^<{obj.datatype}>"
        return text
    return f"<{obj}>"


def triple_line(t: Triple) -> str:
    return f"<{t.subject}> <{t.predicate}> {_term(t.object)} ."


def serialize_ntriples(store: GraphStore | Iterable[Triple]) -> str:
    """Canonical N-Triples: one triple per line, lexicographically sorted."""
    lines = sorted(triple_line(t) for t in store)
    return "\n".join(lines) + "\n" if lines else ""


def to_sparql_insert(triples: Iterable[Triple]) -> str:
    """One SPARQL 1.1 ``INSERT DATA`` update covering all the triples."""
    lines = [f"  {triple_line(t)}" for t in triples]
    if not lines:
        return "INSERT DATA { }"
    return "INSERT DATA {\n" + "\n".join(lines) + "\n}"


_UNESCAPE = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t",
             "b": "\b", "f": "\f", "'": "'"}


def _unescape_string(raw: str, where: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(raw):
            raise InputError(f"{where}: dangling escape")
        nxt = raw[i + 1]
        if nxt in _UNESCAPE:
            out.append(_UNESCAPE[nxt])
            i += 2
        elif nxt == "u" and i + 6 <= len(raw):
            out.append(chr(int(raw[i + 2 : i + 6], 16)))
            i += 6
        elif nxt == "U" and i + 10 <= len(raw):
            out.append(chr(int(raw[i + 2 : i + 10], 16)))
            i += 10
        else:
            raise InputError(f"{where}: bad escape \\{nxt}")
    return "".join(out)


def _parse_object(token: str, where: str) -> Iri | Literal:
    if token.startswith("<") and token.endswith(">"):
        return Iri(token[1:-1])
    if not token.startswith('"'):
        raise InputError(f"{where}: unparseable object term: {token!r}")
    i = 1
    while i < len(token):
        if token[i] == "\\":
            i += 2
            continue
        if token[i] == '"':
            break
        i += 1
    else:
        raise InputError(f"{where}: unterminated literal")
    value = _unescape_string(token[1:i], where)
    rest = token[i + 1 :]
    if not rest:
        return Literal(value)
    if rest.startswith("^^<") and rest.endswith(">"):
        return Literal(value, datatype=Iri(rest[3:-1]))
    if rest.startswith("@"):
        return Literal(value, lang=rest[1:])
    raise InputError(f"{where}: bad literal suffix: {rest!r}")


_NT_LINE = re.compile(r"^<([^>]*)>\s+<([^>]*)>\s+(.+?)\s*\.$")


def parse_ntriples(text: str, origin: str = "<string>") -> list[Triple]:
    """Parse canonical N-Triples text back into triples."""
    triples = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{origin}:{lineno}"
        m = _NT_LINE.match(line)
        if not m:
            raise InputError(f"{where}: not an N-Triples statement: {line!r}")
        try:
            triples.append(
                Triple(Iri(m.group(1)), Iri(m.group(2)), _parse_object(m.group(3), where))
            )
        except ValueError as exc:
            raise InputError(f"{where}: {exc}") from exc
    return triples


def load_ntriples(path: str | Path) -> GraphStore:
    store = GraphStore()
    store.add_all(parse_ntriples(Path(path).read_text(encoding="utf-8"), origin=str(path)))
    return store


# --- retrieval query -----------------------------------------------------------


@dataclass(frozen=True)
class RelationRow:
    """One relation as the retrieval layer consumes it."""

    relation_iri: Iri
    predicate: str
    subject: str
    object: str
    publication_id: str


def _label_of(store: GraphStore, node: Iri) -> str:
    for t in store.triples(s=node, p=RDFS_LABEL):
        if isinstance(t.object, Literal):
            return t.object.value
    return str(node)


def _first_object(store: GraphStore, s: Iri, p: Iri) -> Iri | Literal | None:
    matches = store.triples(s=s, p=p)
    return matches[0].object if matches else None


def relation_row(store: GraphStore, rel: Iri, spec: OntologySpec) -> RelationRow:
    vocab = GraphVocabulary.from_spec(spec)
    subj = _first_object(store, rel, vocab.has_subject)
    obj = _first_object(store, rel, vocab.has_object)
    pred = _first_object(store, rel, vocab.predicate_label)
    pub = _first_object(store, rel, PROV_WAS_DERIVED_FROM)
    return RelationRow(
        relation_iri=rel,
        predicate=pred.value if isinstance(pred, Literal) else "",
        subject=_label_of(store, subj) if isinstance(subj, Iri) else "",
        object=_label_of(store, obj) if isinstance(obj, Iri) else "",
        publication_id=_label_of(store, pub) if isinstance(pub, Iri) else "",
    )


def query_relations_for_entity(
    store: GraphStore,
    canonical_name: str,
    spec: OntologySpec,
    limit: int | None = None,
) -> list[RelationRow]:
    """All relations in which the named entity is subject or object.

    Results are ordered by relation IRI so they are deterministic; an unknown
    entity yields an empty list.
    """
    vocab = GraphVocabulary.from_spec(spec)
    nodes = {
        t.subject
        for t in store.triples(p=RDFS_LABEL, o=Literal(canonical_name))
    }
    rel_iris: set[Iri] = set()
    for node in nodes:
        for t in store.triples(p=vocab.has_subject, o=node):
            rel_iris.add(t.subject)
        for t in store.triples(p=vocab.has_object, o=node):
            rel_iris.add(t.subject)
    rows = []
    for rel in sorted(rel_iris):
        rows.append(relation_row(store, rel, spec))
        if limit is not None and len(rows) >= limit:
            break
    return rows


def all_relation_iris(store: GraphStore, spec: OntologySpec) -> list[Iri]:
    vocab = GraphVocabulary.from_spec(spec)
    return sorted(
        t.subject for t in store.triples(p=RDF_TYPE, o=vocab.relation_class)
    )


# --- external endpoint ----------------------------------------------------------


def push_to_endpoint(
    update: str,
    url: str,
    username: str | None = None,
    password: str | None = None,
    timeout: float = 30.0,
) -> None:
    """POST a SPARQL update to an external SPARQL 1.1 endpoint.

    Raises TransportError (with the HTTP status when one arrived) on any
    failure; the local store is never touched.
    """
    auth = (username, password) if username else None
    try:
        resp = requests.post(
            url,
            data=update.encode("utf-8"),
            headers={"Content-Type": "application/sparql-update"},
            auth=auth,
            timeout=timeout,
        )
    except requests.RequestException as exc:
        raise TransportError(f"SPARQL endpoint unreachable: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise TransportError(
            f"SPARQL endpoint returned {resp.status_code}", status=resp.status_code
        )
