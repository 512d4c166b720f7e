"""Drive the extraction prompt against a chat endpoint and parse the output.

The parser is total: any byte string yields a list of relations plus a list
of parse failures, never an exception. Lines may use single or double quotes
(the canonical serializer emits single quotes), and one line may carry several
brace groups.
"""

from __future__ import annotations

import ast
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import InputError, TransportError
from .llm import ChatCompletionClient
from .ontology import ENTITY_LABELS, RELATION_LABELS, OntologySpec, PromptMode, build_extraction_prompt

EXPECTED_KEYS = (
    "relation_type",
    "entity1_type",
    "entity1_name",
    "entity2_type",
    "entity2_name",
)

_BRACE_GROUP = re.compile(r"\{[^{}]*\}")

DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_S = 1.0
DEFAULT_WORKERS = 4


@dataclass(frozen=True)
class AbstractRecord:
    """One corpus document: an abstract plus the identifier that carries provenance."""

    publication_id: str
    text: str
    source_url: str | None = None

    def __post_init__(self):
        if not self.publication_id:
            raise ValueError("publication_id must be non-empty")
        if not self.text:
            raise ValueError("text must be non-empty")


@dataclass(frozen=True)
class RawRelation:
    """One extracted causal statement, exactly as the model emitted it."""

    relation_type: str
    entity1_type: str
    entity1_name: str
    entity2_type: str
    entity2_name: str
    publication_id: str


@dataclass(frozen=True)
class ValidatedRelation:
    """A RawRelation whose three labels are known members of the ontology sets."""

    relation_type: str
    entity1_type: str
    entity1_name: str
    entity2_type: str
    entity2_name: str
    publication_id: str

    def __post_init__(self):
        if self.relation_type not in RELATION_LABELS:
            raise ValueError(f"invalid relation_type: {self.relation_type!r}")
        if self.entity1_type not in ENTITY_LABELS:
            raise ValueError(f"invalid entity1_type: {self.entity1_type!r}")
        if self.entity2_type not in ENTITY_LABELS:
            raise ValueError(f"invalid entity2_type: {self.entity2_type!r}")


@dataclass(frozen=True)
class Rejection:
    """Validation rejection, naming the field that failed."""

    field: str
    value: str


@dataclass(frozen=True)
class ParseFailure:
    line: str
    reason: str
    publication_id: str = ""


@dataclass(frozen=True)
class AbstractOutcome:
    publication_id: str
    attempts: int
    error: str | None = None  # None means the abstract was processed


@dataclass
class ExtractionReport:
    """Everything one extraction run produced, failures included."""

    relations: list[ValidatedRelation] = field(default_factory=list)
    parse_failures: list[ParseFailure] = field(default_factory=list)
    outcomes: list[AbstractOutcome] = field(default_factory=list)
    abstract_count: int = 0

    @property
    def relation_count(self) -> int:
        return len(self.relations)

    @property
    def failed_abstracts(self) -> list[AbstractOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def merge(self, other: "ExtractionReport") -> None:
        self.relations.extend(other.relations)
        self.parse_failures.extend(other.parse_failures)
        self.outcomes.extend(other.outcomes)
        self.abstract_count += other.abstract_count

    def to_json_dict(self) -> dict:
        return {
            "abstract_count": self.abstract_count,
            "relation_count": self.relation_count,
            "relations": [vars(r) for r in self.relations],
            "parse_failures": [vars(f) for f in self.parse_failures],
            "outcomes": [vars(o) for o in self.outcomes],
        }


# Control characters and the unicode line separators must be escaped: the
# format is line-oriented, and literal_eval source cannot carry NUL bytes.
_UNICODE_BREAKS = "\x85  "


def _quote(value: str) -> str:
    out = []
    for ch in value:
        if ch == "\\":
            out.append("\\\\")
        elif ch == "'":
            out.append("\\'")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20 or ch in _UNICODE_BREAKS or ch in "{}":
            # Braces are escaped so the brace-group scanner never sees them
            # inside a value; every name round-trips.
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return "'" + "".join(out) + "'"


def serialize_relation(r: RawRelation | ValidatedRelation) -> str:
    """Render a relation in the canonical single-quoted brace format.

    Quotes, backslashes, and line-breaking characters in values are escaped;
    the result is a single line that re-parses to an equal relation.
    """
    parts = ", ".join(f"{_quote(k)}: {_quote(getattr(r, k))}" for k in EXPECTED_KEYS)
    return "{" + parts + "}"


def _parse_group(group: str) -> dict[str, str] | str:
    """Parse one brace group; returns the field dict or a failure reason."""
    try:
        obj = ast.literal_eval(group)
    except Exception:  # totality: any malformed literal is a data failure
        return "not a parseable key/value group"
    if not isinstance(obj, dict):
        return "not a key/value group"
    keys = set(obj)
    expected = set(EXPECTED_KEYS)
    extra = keys - expected
    if extra:
        return f"unexpected key: {sorted(repr(k) for k in extra)[0]}"
    missing = expected - keys
    if missing:
        return f"missing key: {sorted(missing)[0]!r}"
    for k, v in obj.items():
        if not isinstance(v, str):
            return f"value for {k!r} is not a string"
        if not v:
            return f"empty value for {k!r}"
    return {k: obj[k] for k in EXPECTED_KEYS}


def parse_relation_output(
    completion_text: str, publication_id: str
) -> tuple[list[RawRelation], list[ParseFailure]]:
    """Parse model output into relations; never raises on any input.

    Every brace group with exactly the five expected keys (any key order,
    single- or double-quoted) becomes one RawRelation stamped with
    ``publication_id``; all other non-blank lines are recorded as failures.
    """
    relations: list[RawRelation] = []
    failures: list[ParseFailure] = []
    if not isinstance(completion_text, str):
        completion_text = str(completion_text)
    for line in completion_text.splitlines():
        if not line.strip():
            continue
        groups = _BRACE_GROUP.findall(line)
        if not groups:
            failures.append(ParseFailure(line, "no relation pattern found", publication_id))
            continue
        for group in groups:
            parsed = _parse_group(group)
            if isinstance(parsed, str):
                failures.append(ParseFailure(group, parsed, publication_id))
            else:
                relations.append(RawRelation(publication_id=publication_id, **parsed))
    return relations, failures


def validate_relation(r: RawRelation, spec: OntologySpec) -> ValidatedRelation | Rejection:
    """Accept iff all three labels are members of the spec's label sets."""
    if r.relation_type not in spec.relation_defs:
        return Rejection("relation_type", r.relation_type)
    if r.entity1_type not in spec.entity_defs:
        return Rejection("entity1_type", r.entity1_type)
    if r.entity2_type not in spec.entity_defs:
        return Rejection("entity2_type", r.entity2_type)
    return ValidatedRelation(**vars(r))


def extract_from_abstract(
    abstract: AbstractRecord,
    client: ChatCompletionClient,
    spec: OntologySpec,
    mode: PromptMode = PromptMode.FEW_SHOT,
    model: str = "gpt-4o-mini",
    max_retries: int = DEFAULT_MAX_RETRIES,
    backoff_s: float = DEFAULT_BACKOFF_S,
    _sleep: Callable[[float], None] = time.sleep,
) -> ExtractionReport:
    """Run the extraction prompt over one abstract.

    Transport errors are retried with exponential backoff; after
    ``max_retries`` attempts the abstract is marked failed in the report and
    processing continues.
    """
    report = ExtractionReport(abstract_count=1)
    messages = [
        {"role": "system", "content": build_extraction_prompt(spec, mode)},
        {"role": "user", "content": abstract.text},
    ]
    attempts = 0
    completion = None
    while True:
        attempts += 1
        try:
            completion = client.complete(messages, model=model, stream=False)
            break
        except TransportError as exc:
            if attempts >= max_retries:
                report.outcomes.append(
                    AbstractOutcome(abstract.publication_id, attempts, error=str(exc))
                )
                return report
            _sleep(backoff_s * 2 ** (attempts - 1))

    relations, failures = parse_relation_output(completion, abstract.publication_id)
    report.parse_failures.extend(failures)
    for raw in relations:
        result = validate_relation(raw, spec)
        if isinstance(result, Rejection):
            report.parse_failures.append(
                ParseFailure(
                    serialize_relation(raw),
                    f"label not in ontology ({result.field}): {result.value!r}",
                    abstract.publication_id,
                )
            )
        else:
            report.relations.append(result)
    report.outcomes.append(AbstractOutcome(abstract.publication_id, attempts))
    return report


def extract_corpus(
    corpus: Sequence[AbstractRecord],
    client: ChatCompletionClient,
    spec: OntologySpec,
    mode: PromptMode = PromptMode.FEW_SHOT,
    model: str = "gpt-4o-mini",
    max_retries: int = DEFAULT_MAX_RETRIES,
    backoff_s: float = DEFAULT_BACKOFF_S,
    workers: int = DEFAULT_WORKERS,
    _sleep: Callable[[float], None] = time.sleep,
) -> ExtractionReport:
    """Extract over a whole corpus with a bounded worker pool.

    The merged report lists relations in corpus order then completion order,
    so runs with a deterministic client are reproducible. Per-abstract
    failures are recorded and never abort the corpus.
    """
    merged = ExtractionReport()
    corpus = list(corpus)
    if not corpus:
        return merged

    def job(abstract: AbstractRecord) -> ExtractionReport:
        return extract_from_abstract(
            abstract, client, spec, mode=mode, model=model,
            max_retries=max_retries, backoff_s=backoff_s, _sleep=_sleep,
        )

    if workers <= 1:
        reports = [job(a) for a in corpus]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(job, corpus))
    for report in reports:
        merged.merge(report)
    return merged


# --- corpus and report files -------------------------------------------------


def load_corpus(path: str | Path) -> list[AbstractRecord]:
    """Read a corpus file: one JSON object per line with publication_id/text."""
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(
                AbstractRecord(
                    publication_id=obj["publication_id"],
                    text=obj["text"],
                    source_url=obj.get("source_url"),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}:{lineno}: bad corpus record: {exc}") from exc
    return records


def write_report(report: ExtractionReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_json_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_report(path: str | Path) -> ExtractionReport:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        report = ExtractionReport(abstract_count=data.get("abstract_count", 0))
        report.relations = [ValidatedRelation(**r) for r in data.get("relations", [])]
        report.parse_failures = [ParseFailure(**f) for f in data.get("parse_failures", [])]
        report.outcomes = [AbstractOutcome(**o) for o in data.get("outcomes", [])]
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"{path}: bad extraction report: {exc}") from exc
    return report
