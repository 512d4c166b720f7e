import json
from pathlib import Path

import pytest

from amdkg.extraction import extract_corpus, load_corpus
from amdkg.graph import load_relations
from amdkg.llm import MockChatClient
from amdkg.ontology import load_default_ontology
from amdkg.refine import refine
from amdkg.vectors import HashingEmbedder, embed_and_index_graph

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES_DIR = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def spec():
    return load_default_ontology()


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(FIXTURES_DIR / "corpus.jsonl")


@pytest.fixture()
def mock_llm():
    return MockChatClient.from_script(FIXTURES_DIR / "mock_llm.json")


@pytest.fixture(scope="session")
def extraction_report(spec, corpus):
    client = MockChatClient.from_script(FIXTURES_DIR / "mock_llm.json")
    return extract_corpus(corpus, client, spec, workers=1)


@pytest.fixture(scope="session")
def refined_relations(extraction_report, spec):
    relations, _stats = refine(extraction_report, spec)
    return relations


@pytest.fixture(scope="session")
def sealed_store(refined_relations, spec):
    """The fixture graph, sealed; shared by read-only tests."""
    return load_relations(refined_relations, spec).seal()


@pytest.fixture(scope="session")
def embedder():
    return HashingEmbedder(dim=384)


@pytest.fixture(scope="session")
def fixture_index(sealed_store, embedder, spec):
    return embed_and_index_graph(sealed_store, embedder, spec)


@pytest.fixture()
def mock_chat_script():
    return json.loads((FIXTURES_DIR / "mock_chat.json").read_text(encoding="utf-8"))
