"""Taxonomy of entity/relation labels, the loadable ontology spec, and prompt generation.

The extraction prompt is generated from a loaded :class:`OntologySpec`, so the
label lists the prompt advertises and the label sets the validator accepts come
from the same object and cannot drift apart.
"""

from __future__ import annotations

import configparser
import enum
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import OntologyError

__all__ = [
    "EntityType",
    "RelationType",
    "PromptMode",
    "OntologySpec",
    "ENTITY_LABELS",
    "RELATION_LABELS",
    "load_ontology_spec",
    "parse_ontology_spec",
    "default_ontology_text",
    "build_extraction_prompt",
    "prompt_label_sets",
]


class EntityType(str, enum.Enum):
    """The twelve entity labels. No other label is constructible."""

    DISEASE = "disease"
    SYMPTOM = "symptom"
    TREATMENT = "treatment"
    RISK_FACTOR = "risk_factor"
    TEST = "test"
    GENE = "gene"
    BIOMARKER = "biomarker"
    COMPLICATION = "complication"
    PROGNOSIS = "prognosis"
    COMORBIDITY = "comorbidity"
    PROGRESSION = "progression"
    BODY_PART = "body_part"


class RelationType(str, enum.Enum):
    """The eight causal relation labels."""

    CAUSE = "cause"
    TREAT = "treat"
    PRESENT = "present"
    DIAGNOSE = "diagnose"
    AGGRAVATE = "aggravate"
    PREVENT = "prevent"
    IMPROVE = "improve"
    AFFECT = "affect"


ENTITY_LABELS: tuple[str, ...] = tuple(e.value for e in EntityType)
RELATION_LABELS: tuple[str, ...] = tuple(r.value for r in RelationType)


class PromptMode(str, enum.Enum):
    """How many worked examples the extraction prompt carries."""

    ZERO_SHOT = "zero_shot"
    SINGLE_SHOT = "single_shot"
    FEW_SHOT = "few_shot"  # default; carries all three worked examples


_EXAMPLE_COUNT = {
    PromptMode.ZERO_SHOT: 0,
    PromptMode.SINGLE_SHOT: 1,
    PromptMode.FEW_SHOT: 3,
}

_SPEC_SECTIONS = (
    "entities",
    "relations",
    "synonyms",
    "trailing_tokens",
    "type_priority",
    "iri",
)


@dataclass(frozen=True)
class OntologySpec:
    """Validated, immutable ontology document.

    Safe to share across threads; every field is read-only after load.
    """

    entity_defs: dict[str, str]
    relation_defs: dict[str, str]
    synonym_map: dict[str, str]
    trailing_tokens: frozenset[str]
    type_priority: tuple[str, ...]
    base_iri: str
    # Position of each label in type_priority, for O(1) tie-breaking.
    priority_rank: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "priority_rank", {t: i for i, t in enumerate(self.type_priority)}
        )


def _is_normalized(text: str) -> bool:
    return text == " ".join(text.lower().split()) and text != ""


def parse_ontology_spec(text: str, origin: str = "<string>") -> OntologySpec:
    """Parse and validate an ontology spec document from its text.

    Raises OntologyError naming the location (section and label, or parser
    line number) of the first problem found.
    """
    parser = configparser.ConfigParser(
        delimiters=("=",),
        comment_prefixes=("#",),
        allow_no_value=True,
        interpolation=None,
        strict=True,
    )
    parser.optionxform = str  # keep label case so "Disease" is caught as unknown
    try:
        parser.read_file(io.StringIO(text), source=origin)
    except configparser.Error as exc:
        raise OntologyError(f"{origin}: malformed spec document: {exc}") from exc

    present = set(parser.sections())
    for section in _SPEC_SECTIONS:
        if section not in present:
            raise OntologyError(f"{origin}: missing required section [{section}]")
    for section in present - set(_SPEC_SECTIONS):
        raise OntologyError(f"{origin}: unknown section [{section}]")

    entity_defs = _read_defs(parser, "entities", ENTITY_LABELS, origin)
    relation_defs = _read_defs(parser, "relations", RELATION_LABELS, origin)

    synonym_map: dict[str, str] = {}
    for key, value in parser.items("synonyms"):
        if not _is_normalized(key):
            raise OntologyError(
                f"{origin}: [synonyms] synonym key not normalized: {key!r} "
                "(keys must be lower-case and single-spaced)"
            )
        if value is None or not _is_normalized(value):
            raise OntologyError(
                f"{origin}: [synonyms] value for {key!r} not normalized: {value!r}"
            )
        synonym_map[key] = value

    trailing_tokens = set()
    for token, value in parser.items("trailing_tokens"):
        if value is not None:
            raise OntologyError(
                f"{origin}: [trailing_tokens] entry {token!r} must be a bare token"
            )
        if not _is_normalized(token) or " " in token:
            raise OntologyError(
                f"{origin}: [trailing_tokens] token not a lower-case word: {token!r}"
            )
        trailing_tokens.add(token)

    # A synonym value must be a fixpoint of normalization, otherwise repeated
    # normalization would keep rewriting it (idempotence would break).
    for key, value in synonym_map.items():
        last = value.split()[-1]
        if last in trailing_tokens:
            raise OntologyError(
                f"{origin}: [synonyms] value for {key!r} ends with trailing token "
                f"{last!r}; strip it in the spec file"
            )
        if value in synonym_map and synonym_map[value] != value and value != key:
            raise OntologyError(
                f"{origin}: [synonyms] value {value!r} (for key {key!r}) is itself "
                "mapped to something else; chains are not allowed"
            )

    priority = tuple(label for label, _ in parser.items("type_priority"))
    unknown = [t for t in priority if t not in ENTITY_LABELS]
    if unknown:
        raise OntologyError(
            f"{origin}: [type_priority] unknown entity label: {unknown[0]!r}"
        )
    missing = [t for t in ENTITY_LABELS if t not in priority]
    if missing:
        raise OntologyError(
            f"{origin}: [type_priority] incomplete: missing {missing[0]!r}"
        )
    if len(priority) != len(ENTITY_LABELS):
        raise OntologyError(f"{origin}: [type_priority] contains duplicates")

    base_iri = parser.get("iri", "base_iri", fallback=None)
    if not base_iri:
        raise OntologyError(f"{origin}: [iri] missing base_iri")
    if "://" not in base_iri or any(c in base_iri for c in ' <>"{}|\\^`'):
        raise OntologyError(f"{origin}: [iri] base_iri is not an absolute IRI: {base_iri!r}")
    if not base_iri.endswith(("/", "#")):
        raise OntologyError(
            f"{origin}: [iri] base_iri must end with '/' or '#': {base_iri!r}"
        )

    return OntologySpec(
        entity_defs=entity_defs,
        relation_defs=relation_defs,
        synonym_map=synonym_map,
        trailing_tokens=frozenset(trailing_tokens),
        type_priority=priority,
        base_iri=base_iri,
    )


def _read_defs(parser, section: str, labels: tuple[str, ...], origin: str) -> dict[str, str]:
    defs: dict[str, str] = {}
    for key, value in parser.items(section):
        if key not in labels:
            raise OntologyError(f"{origin}: [{section}] unknown label: {key!r}")
        if not value:
            raise OntologyError(f"{origin}: [{section}] empty definition for {key!r}")
        defs[key] = value
    for label in labels:
        if label not in defs:
            raise OntologyError(f"{origin}: [{section}] missing definition for {label!r}")
    return defs


def load_ontology_spec(path: str | Path) -> OntologySpec:
    """Load and validate an ontology spec file (UTF-8)."""
    p = Path(path)
    return parse_ontology_spec(p.read_text(encoding="utf-8"), origin=str(p))


def default_ontology_text() -> str:
    """Text of the ontology spec bundled with the package."""
    return resources.files("amdkg.data").joinpath("ontology.txt").read_text("utf-8")


def load_default_ontology() -> OntologySpec:
    return parse_ontology_spec(default_ontology_text(), origin="<bundled ontology>")


# --- prompt generation -------------------------------------------------------

# Worked extraction examples shown to the model. The output lines are in the
# exact single-quoted format the parser expects; a test cross-checks that each
# line round-trips through the parser.
WORKED_EXAMPLES: tuple[tuple[str, tuple[str, ...]], ...] = (
    (
        "AMD affects the retina and causes vision loss.",
        (
            "{'relation_type': 'affect', 'entity1_type': 'disease', 'entity1_name': 'AMD', "
            "'entity2_type': 'body_part', 'entity2_name': 'retina'}",
            "{'relation_type': 'cause', 'entity1_type': 'disease', 'entity1_name': 'AMD', "
            "'entity2_type': 'symptom', 'entity2_name': 'vision loss'}",
        ),
    ),
    (
        "Smoking is a risk factor that aggravates AMD progression.",
        (
            "{'relation_type': 'aggravate', 'entity1_type': 'risk_factor', "
            "'entity1_name': 'Smoking', 'entity2_type': 'progression', "
            "'entity2_name': 'AMD progression'}",
        ),
    ),
    (
        "Anti-VEGF therapy treats wet AMD and improves vision.",
        (
            "{'relation_type': 'treat', 'entity1_type': 'treatment', "
            "'entity1_name': 'Anti-VEGF therapy', 'entity2_type': 'disease', "
            "'entity2_name': 'wet AMD'}",
            "{'relation_type': 'improve', 'entity1_type': 'treatment', "
            "'entity1_name': 'Anti-VEGF therapy', 'entity2_type': 'symptom', "
            "'entity2_name': 'vision'}",
        ),
    ),
)

OUTPUT_FORMAT_LINE = (
    "{'relation_type': 'relation_type_value', 'entity1_type': 'entity1_type_value', "
    "'entity1_name': 'entity1_name_value', 'entity2_type': 'entity2_type_value', "
    "'entity2_name': 'entity2_name_value'}"
)


def _bold_list(labels) -> str:
    return ", ".join(f"**{label}**" for label in labels)


def build_extraction_prompt(spec: OntologySpec, mode: PromptMode = PromptMode.FEW_SHOT) -> str:
    """Generate the relation-extraction prompt from a loaded spec.

    Deterministic: the same spec and mode always produce byte-identical text.
    Every label list and definition is read from ``spec``, so editing the spec
    file and reloading is enough to change the prompt.
    """
    mode = PromptMode(mode)
    entity_labels = tuple(spec.entity_defs)
    relation_labels = tuple(spec.relation_defs)

    lines: list[str] = []
    lines.append("You are an AI language model tasked with:")
    lines.append("1. **Entity Identification**:")
    lines.append("- Identify entities in the text labeled **only** as:")
    lines.append(f" - {_bold_list(entity_labels)}")
    lines.append("- **Use these exact labels; do not introduce new labels or synonyms.**")
    lines.append("**Entity Type Definitions**:")
    for label in entity_labels:
        lines.append(f"- **{label}**: {spec.entity_defs[label]}")
    lines.append("2. **Relationship Extraction**:")
    lines.append("- Extract relationships among these entities based on the relations **only**:")
    lines.append(f" - {_bold_list(relation_labels)}")
    lines.append("- **Use these exact labels; do not introduce new labels or synonyms.**")
    lines.append("**Relation Type Definitions**:")
    for label in relation_labels:
        lines.append(f"- **{label}**: {spec.relation_defs[label]}")
    lines.append("**Instructions**:")
    lines.append(
        "- **Consistency Rule**: Assign the same entity type to an entity whenever "
        "it appears, based on the definitions provided."
    )
    lines.append(
        "- **Ambiguous Entities**: If an entity could belong to multiple types, refer "
        "to the definitions and choose the most appropriate type based on context."
    )
    lines.append(
        "- **Important**: Use **only** the specified labels for entity and relation "
        "types. Do not use synonyms, variations, or introduce new labels."
    )
    lines.append("**Output Format**:")
    lines.append(
        "Present each relationship in the following exact format "
        "(including single quotes and braces):"
    )
    lines.append(OUTPUT_FORMAT_LINE)

    count = _EXAMPLE_COUNT[mode]
    if count:
        lines.append("**Examples**:")
        for text, outputs in WORKED_EXAMPLES[:count]:
            lines.append(f'Text: "{text}"')
            lines.append("Output:")
            lines.extend(outputs)

    return "\n".join(lines) + "\n"


def prompt_label_sets(prompt_text: str) -> tuple[set[str], set[str]]:
    """Extract the (entity, relation) label sets a generated prompt advertises.

    Reads the two ``" - **a**, **b**, ..."`` list lines, in order. Used to test
    that prompt and validator can never disagree about the label sets.
    """
    lists = []
    for line in prompt_text.splitlines():
        if line.startswith(" - **"):
            lists.append({part.strip().strip("*") for part in line.lstrip(" -").split(",")})
    if len(lists) != 2:
        raise ValueError(f"expected 2 label list lines, found {len(lists)}")
    return lists[0], lists[1]
