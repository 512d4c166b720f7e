"""Acceptance suite: one test per criterion, offline, mock backends only.

Run with ``pytest tests/test_acceptance.py -v`` for the per-criterion
pass/fail lines.
"""

import json
import random
import re
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import requests
from click.testing import CliRunner

from amdkg.chat import ChatDeps, ChatSession, ChunkEvent, DoneEvent, chat, linkify_trial_ids
from amdkg.cli import main
from amdkg.context import NO_RELATIONS_LINE, RetrievalConfig, build_context
from amdkg.extraction import RawRelation, ValidatedRelation, parse_relation_output, serialize_relation
from amdkg.graph import all_relation_iris, parse_ntriples
from amdkg.llm import MockChatClient
from amdkg.ontology import ENTITY_LABELS, RELATION_LABELS
from amdkg.refine import normalize_entity_name, refine
from amdkg.vectors import EntityDoc, HashingEmbedder, VectorIndex, cosine_similarity

from sparql_grammar import parse_insert_data
from test_vectors import brute_force_cosine

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"
GOLDEN = Path(__file__).parent / "golden" / "prompt_few_shot.txt"

LONG_FORM = "age-related macular degeneration"


def _ok(n, message):
    print(f"[PASS] criterion {n}: {message}")


# -- 1 ---------------------------------------------------------------------------


def test_criterion_1_prompt_fidelity():
    runner = CliRunner()
    outputs = [
        runner.invoke(main, ["prompt", "--mode", "few"], catch_exceptions=False).output
        for _ in range(2)
    ]
    assert outputs[0] == outputs[1], "prompt not byte-identical across runs"
    assert outputs[0] == GOLDEN.read_text(encoding="utf-8"), "prompt differs from golden file"
    for label in ENTITY_LABELS + RELATION_LABELS:
        assert f"**{label}**" in outputs[0], f"label missing from prompt: {label}"
    for example in [
        "AMD affects the retina and causes vision loss.",
        "Smoking is a risk factor that aggravates AMD progression.",
        "Anti-VEGF therapy treats wet AMD and improves vision.",
    ]:
        assert example in outputs[0], f"example text missing: {example}"
    _ok(1, "prompt carries all 20 labels + 3 worked examples, golden byte-exact")


# -- 2 ---------------------------------------------------------------------------


def test_criterion_2_parser_totality_and_round_trip():
    rng = random.Random(0xC0FFEE)
    for _ in range(10_000):
        raw = bytes(rng.randrange(256) for _ in range(rng.randrange(200)))
        text = raw.decode("utf-8", errors="replace")
        relations, failures = parse_relation_output(text, "FUZZ")
        assert isinstance(relations, list) and isinstance(failures, list)

    def random_name():
        length = rng.randrange(1, 30)
        return "".join(chr(rng.randrange(32, 0x2FA0)) for _ in range(length))

    for _ in range(1_000):
        original = RawRelation(
            rng.choice(RELATION_LABELS),
            rng.choice(ENTITY_LABELS),
            random_name(),
            rng.choice(ENTITY_LABELS),
            random_name(),
            "PUBF",
        )
        parsed, failures = parse_relation_output(serialize_relation(original), "PUBF")
        assert failures == [], f"round-trip produced failures: {failures}"
        assert parsed == [original], "round-trip mismatch"
    _ok(2, "10,000 fuzz inputs parsed without crash; 1,000 relations round-tripped")


# -- 3 ---------------------------------------------------------------------------


def test_criterion_3_refinement_invariants(spec):
    rng = random.Random(33)
    amd_variants = ["AMD", "amd", " Amd ", "AMD cnv", "age-related  macular degeneration",
                    "ARMD", "amd ga", "Age Related Macular Degeneration"]
    other_names = ["retina", "Vision  Loss", "smoking", "drusen cnv", "CFH",
                   "anti-vegf therapy", "optical coherence tomography"]
    relations = []
    while len(relations) < 172:
        e1 = rng.choice(amd_variants + other_names)
        e2 = rng.choice(amd_variants + other_names)
        relations.append(ValidatedRelation(
            rng.choice(RELATION_LABELS),
            rng.choice(ENTITY_LABELS),
            e1,
            rng.choice(ENTITY_LABELS),
            e2,
            rng.choice(["NCT01291121", "NCT00466076"]),
        ))
    relations.extend(relations[:20])  # byte-identical duplicates
    for variant in amd_variants:  # guaranteed self-relations across variants
        relations.append(ValidatedRelation(
            "cause", "disease", variant, "disease", variant.lower(), "NCT01291121"))
    assert len(relations) >= 200

    refined, stats = refine(relations, spec)

    keys = [r.key() for r in refined]
    assert len(keys) == len(set(keys)), "duplicate 4-tuples in output"
    assert all(r.subject.name != r.object.name for r in refined), "self-relation survived"

    types_by_name = {}
    for r in refined:
        for ref in (r.subject, r.object):
            assert types_by_name.setdefault(ref.name, ref.type) == ref.type, \
                f"name {ref.name} carries two types"

    names = set(types_by_name)
    for variant in amd_variants:
        assert normalize_entity_name(variant, spec) == LONG_FORM, variant
    assert LONG_FORM in names
    assert not any("amd" == n or n.startswith("amd ") for n in names), \
        "an un-mapped amd variant survived"

    as_validated = [
        ValidatedRelation(r.relation_type.value, r.subject.type.value, r.subject.name,
                          r.object.type.value, r.object.name, r.publication_id)
        for r in refined
    ]
    twice, stats2 = refine(as_validated, spec)
    assert twice == refined, "refinement not idempotent"
    assert stats2.output_count == stats2.input_count
    assert stats.input_count == (stats.output_count + stats.dropped_empty_name
                                 + stats.dropped_self_relation + stats.dropped_duplicate)
    _ok(3, f"{stats.input_count}-relation synthetic set: no dups, no self-relations, "
           "single type per name, idempotent, amd variants map to the long form")


# -- 4 ---------------------------------------------------------------------------


def _run_pipeline(tmp_path: Path, tag: str) -> dict[str, Path]:
    runner = CliRunner()
    paths = {
        "report": tmp_path / f"report-{tag}.json",
        "refined": tmp_path / f"refined-{tag}.jsonl",
        "graph": tmp_path / f"graph-{tag}.nt",
        "snapshot": tmp_path / f"index-{tag}.kgv",
    }
    steps = [
        ["extract", "--corpus", str(FIXTURES / "corpus.jsonl"), "--out", str(paths["report"]),
         "--mock", "--fixtures", str(FIXTURES)],
        ["refine", "--in", str(paths["report"]), "--out", str(paths["refined"])],
        ["load", "--in", str(paths["refined"]), "--export", str(paths["graph"])],
        ["index", "--graph", str(paths["graph"]), "--snapshot", str(paths["snapshot"]),
         "--fallback-embedder"],
    ]
    for args in steps:
        result = runner.invoke(main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
    return paths


def test_criterion_4_graph_determinism_and_integrity(tmp_path, spec):
    first = _run_pipeline(tmp_path, "a")
    second = _run_pipeline(tmp_path, "b")
    export_a = first["graph"].read_bytes()
    assert export_a == second["graph"].read_bytes(), "exports differ across runs"

    from amdkg.graph import GraphStore, GraphVocabulary, PROV_WAS_DERIVED_FROM, RDF_TYPE, to_sparql_insert

    store = GraphStore()
    store.add_all(parse_ntriples(export_a.decode("utf-8")))
    vocab = GraphVocabulary.from_spec(spec)
    rel_nodes = [t.subject for t in store.triples(p=RDF_TYPE, o=vocab.relation_class)]
    assert rel_nodes, "no relation nodes in export"
    for rel in rel_nodes:
        assert len(store.triples(s=rel, p=vocab.has_subject)) == 1
        assert len(store.triples(s=rel, p=vocab.has_object)) == 1
        assert len(store.triples(s=rel, p=vocab.predicate_label)) == 1
        assert len(store.triples(s=rel, p=PROV_WAS_DERIVED_FROM)) >= 1

    update = to_sparql_insert(sorted(store, key=str))
    parsed = parse_insert_data(update)  # raises on any grammar violation
    assert len(parsed) == len(store)
    _ok(4, f"two runs byte-identical ({len(store)} triples); reified pattern intact; "
           "INSERT DATA parses under the SPARQL 1.1 grammar")


# -- 5 ---------------------------------------------------------------------------


def test_criterion_5_retrieval_oracle():
    rng = random.Random(5050)
    embedder = HashingEmbedder(dim=384)
    words = ["amd", "retina", "gene", "therapy", "drusen", "vision", "smoking",
             "macula", "fluid", "injection", "trial", "risk"]

    for round_no in range(50):
        size = rng.randrange(5, 1001)
        texts = {
            f"doc {i}: " + " ".join(rng.choice(words) for _ in range(rng.randrange(1, 6)))
            for i in range(size)
        }
        docs = [
            EntityDoc(id=f"http://x/e/{i:04d}", name=text, entity_type="disease",
                      vector=embedder.embed(text))
            for i, text in enumerate(sorted(texts))
        ]
        index = VectorIndex(dim=384)
        for doc in docs:
            index.add(doc)
        query = embedder.embed("query " + " ".join(rng.choice(words) for _ in range(3)))
        query64 = query.astype(np.float64)
        for k in (1, 5, 20):
            hits = index.search(query, k=k)
            expected = sorted(
                ((brute_force_cosine(query64, d.vector), d.id) for d in docs),
                key=lambda pair: (-pair[0], pair[1]),
            )[:k]
            assert [h.id for h in hits] == [doc_id for _, doc_id in expected], \
                f"round {round_no}, k={k}: ids/order differ from brute force"

    v = embedder.embed("self similarity probe")
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-6)
    rng_np = np.random.default_rng(55)
    for _ in range(100):
        a = rng_np.normal(size=384)
        b = rng_np.normal(size=384)
        assert abs(cosine_similarity(a, b) - cosine_similarity(b, a)) <= 1e-9
        assert abs(cosine_similarity(3.7 * a, b) - cosine_similarity(a, b)) <= 1e-9
    _ok(5, "50 random indexes match brute-force top-k for k in {1,5,20}; "
           "self-similarity, symmetry, scale-invariance hold")


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_context_groundedness(sealed_store, fixture_index, embedder, spec):
    known_iris = set(all_relation_iris(sealed_store, spec))
    queries = [
        "what causes vision loss", "smoking and amd", "how is amd diagnosed",
        "anti-vegf therapy", "retina damage", "genetic risk for amd",
        "wet amd treatment", "optical coherence tomography", "cfh gene",
        "progression of macular degeneration", "symptoms of amd",
        "risk factors", "vision improvement", "macula", "drusen",
        "clinical trials for amd",
    ]
    rows_checked = 0
    for query in queries:
        block = build_context(query, fixture_index, embedder, sealed_store, spec)
        for row in block.evidence:
            assert row.relation_iri in known_iris, f"unknown relation for {query!r}"
            assert row.publication_id, f"empty publication id for {query!r}"
            rows_checked += 1
    assert rows_checked > 0

    empty_cfg = RetrievalConfig(min_score=0.9999)
    empty_queries = ["", "   ", "zxqy unrelated quasar flux", "seventeen bagpipes"]
    for query in empty_queries:
        block = build_context(query, fixture_index, embedder, sealed_store, spec, empty_cfg)
        assert block.evidence == []
        assert NO_RELATIONS_LINE in block.rendered, f"marker missing for {query!r}"
    assert len(queries) + len(empty_queries) == 20
    _ok(6, f"20 scripted queries: {rows_checked} evidence rows all resolve to store "
           "relation IRIs; empty matches render the no-references marker")


# -- 7 ---------------------------------------------------------------------------


def test_criterion_7_linkify(sealed_store, fixture_index, embedder, spec):
    assert linkify_trial_ids("NCT01291121") == (
        "[NCT01291121](https://app.dimensions.ai/details/clinical_trial/NCT01291121)"
    )

    rng = random.Random(777)
    pieces = ["NCT01291121", "NCT0129", "1121", " ", "[", "]", "(", ")",
              "https://app.dimensions.ai/details/clinical_trial/NCT01291121",
              "text", "\n", "NCT00466076."]
    for _ in range(1_000):
        text = "".join(rng.choice(pieces) for _ in range(rng.randrange(10)))
        once = linkify_trial_ids(text)
        assert linkify_trial_ids(once) == once, f"not idempotent on {text!r}"

    bare = re.compile(r"NCT\d{8}(?!\d)")
    for chunk_size in (1, 3, 5, 7):
        llm = MockChatClient(
            default="Trials NCT01291121 and NCT00466076 support this; see also NCT02248324.",
            chunk_size=chunk_size,
        )
        deps = ChatDeps(spec=spec, store=sealed_store, index=fixture_index,
                        embedder=embedder, llm=llm, llm_model="mock")
        events = list(chat(ChatSession(f"c7-{chunk_size}"), "anything", deps))
        done = events[-1]
        assert isinstance(done, DoneEvent)
        assert "".join(e.text for e in events if isinstance(e, ChunkEvent)) == done.full_text
        outside_links = re.sub(r"\[[^\]]*\]\([^)]*\)", "", done.full_text)
        assert not bare.search(outside_links), \
            f"bare id in terminal answer (chunk_size={chunk_size}): {done.full_text!r}"
    _ok(7, "exact link format; idempotent on 1,000 fuzzed strings; no bare ids "
           "in terminal answers even with ids split across chunks")


# -- 8 ---------------------------------------------------------------------------


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _parse_sse_stream(resp) -> list[tuple[str, dict]]:
    events = []
    for frame in resp.text.split("\n\n"):
        name, data = None, None
        for line in frame.splitlines():
            if line.startswith("event: "):
                name = line[len("event: "):]
            elif line.startswith("data: "):
                data = json.loads(line[len("data: "):])
        if name:
            events.append((name, data))
    return events


def test_criterion_8_end_to_end_offline(tmp_path, spec):
    paths = _run_pipeline(tmp_path, "e2e")
    capture = tmp_path / "capture.jsonl"
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "amdkg.cli", "serve",
         "--graph", str(paths["graph"]), "--snapshot", str(paths["snapshot"]),
         "--mock", "--fixtures", str(FIXTURES), "--fallback-embedder",
         "--bind", f"127.0.0.1:{port}", "--mock-capture", str(capture)],
        cwd=REPO, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 20
        while True:
            try:
                health = requests.get(f"{base}/api/health", timeout=1).json()
                break
            except requests.RequestException:
                if time.monotonic() > deadline:
                    raise AssertionError("server did not come up")
                time.sleep(0.2)

        triples = parse_ntriples(paths["graph"].read_text(encoding="utf-8"))
        assert health["triple_count"] == len(triples)  # independent scan of the export

        resp = requests.post(
            f"{base}/api/chat",
            json={"question": "Does smoking aggravate AMD?", "session_id": "e2e"},
            timeout=30,
        )
        assert resp.status_code == 200
        events = _parse_sse_stream(resp)
        assert events[-1][0] == "done"
        done = events[-1][1]
        chunks = "".join(d["text"] for n, d in events if n == "chunk")
        assert chunks == done["full_text"], "SSE chunks do not concatenate to done text"

        store_iris = {
            str(t.subject) for t in triples
            if str(t.predicate).endswith("hasSubject")
        }
        pub_ids = {
            t.object.value
            for t in triples
            if str(t.subject).startswith(spec.base_iri + "publication/")
            and hasattr(t.object, "value")
        }
        assert done["evidence"], "no evidence in done event"
        for row in done["evidence"]:
            assert row["relation_iri"] in store_iris, "evidence row not in store"
            assert row["publication_id"] in pub_ids

        second = requests.post(
            f"{base}/api/chat",
            json={"question": "And my second question please?", "session_id": "e2e"},
            timeout=30,
        )
        assert _parse_sse_stream(second)[-1][0] == "done"

        calls = [json.loads(line) for line in capture.read_text(encoding="utf-8").splitlines()]
        assert len(calls) == 2
        second_contents = [m["content"] for m in calls[1]["messages"]]
        assert "Does smoking aggravate AMD?" in second_contents, \
            "first question missing from second prompt"
        assert done["full_text"] in second_contents, \
            "first answer missing from second prompt"
    finally:
        proc.terminate()
        proc.wait(timeout=10)
    _ok(8, "pipeline + serve --mock: stream integrity, grounded evidence, "
           "two-turn history inside the second prompt")
