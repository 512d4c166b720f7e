"""Command-line driver for every pipeline stage.

Exit codes: 0 success, 2 usage error, 3 input error, 4 transport error.
Failures print one ``error: <kind>: <message>`` line to stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import __version__
from .chat import ChatDeps, ChatSession, DoneEvent, ErrorEvent, chat
from .config import load_config, resolve
from .context import RetrievalConfig
from .errors import AmdkgError, InputError, OntologyError, TransportError
from .extraction import extract_corpus, load_corpus, load_report, write_report
from .graph import load_ntriples, load_relations, push_to_endpoint, serialize_ntriples, to_sparql_insert
from .llm import MockChatClient, OpenAiChatClient
from .ontology import PromptMode, build_extraction_prompt, load_ontology_spec, parse_ontology_spec, default_ontology_text
from .refine import load_refined, refine, write_refined
from .vectors import HashingEmbedder, HttpEmbedder, VectorIndex, embed_and_index_graph

MODE_NAMES = {"zero": PromptMode.ZERO_SHOT, "single": PromptMode.SINGLE_SHOT, "few": PromptMode.FEW_SHOT}

EXIT_INPUT = 3
EXIT_TRANSPORT = 4


def _fail(kind: str, message: str, code: int):
    click.echo(f"error: {kind}: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TransportError as exc:
            _fail("transport", str(exc), EXIT_TRANSPORT)
        except (InputError, OntologyError, FileNotFoundError) as exc:
            _fail("input", str(exc), EXIT_INPUT)
        except AmdkgError as exc:
            _fail("input", str(exc), EXIT_INPUT)

    return wrapper


def _load_spec(ontology_path: str | None, config: dict):
    path = resolve(ontology_path, config, "ontology")
    if path:
        return load_ontology_spec(path)
    return parse_ontology_spec(default_ontology_text(), origin="<bundled ontology>")


def _embedder(config, fallback_flag, embed_url, dim):
    dim = int(resolve(dim, config, "dim", 384))
    use_fallback = resolve(fallback_flag or None, config, "fallback_embedder", False)
    url = resolve(embed_url, config, "embed_url")
    if url and not use_fallback:
        return HttpEmbedder(url, dim=dim)
    return HashingEmbedder(dim=dim)


def _chat_client(config, mock, fixtures, llm_url, mock_capture=None):
    if mock:
        fixtures_dir = Path(resolve(fixtures, config, "fixtures", "fixtures"))
        script = fixtures_dir / "mock_chat.json"
        if not script.exists():
            raise InputError(f"mock chat script not found: {script}")
        return MockChatClient.from_script(script, capture_path=mock_capture)
    url = resolve(llm_url, config, "llm_url", "http://127.0.0.1:11434/v1")
    return OpenAiChatClient(url)


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", envvar="CONFIG", default=None,
              help="YAML config file; flags and env vars override it.")
@click.pass_context
def main(ctx, config_path):
    """Causal knowledge-graph pipeline and grounded chat service."""
    try:
        ctx.obj = load_config(config_path)
    except AmdkgError as exc:
        _fail("input", str(exc), EXIT_INPUT)


@main.command("prompt")
@click.option("--mode", type=click.Choice(sorted(MODE_NAMES)), default="few",
              help="How many worked examples to include.")
@click.option("--ontology", default=None, help="Ontology spec file (default: bundled).")
@click.pass_obj
@handle_errors
def prompt_cmd(config, mode, ontology):
    """Print the generated extraction prompt."""
    spec = _load_spec(ontology, config)
    click.echo(build_extraction_prompt(spec, MODE_NAMES[mode]), nl=False)


@main.command("extract")
@click.option("--corpus", "corpus_path", required=True, help="Corpus file, one JSON record per line.")
@click.option("--out", "out_path", required=True, help="Extraction report output (JSON).")
@click.option("--ontology", default=None)
@click.option("--mode", type=click.Choice(sorted(MODE_NAMES)), default="few")
@click.option("--endpoint", "endpoint_url", envvar="ENDPOINT_URL", default=None,
              help="Chat-completions base URL for the extraction model.")
@click.option("--model", envvar="MODEL_NAME", default=None)
@click.option("--max-retries", envvar="MAX_RETRIES", type=int, default=None)
@click.option("--workers", envvar="WORKERS", type=int, default=None)
@click.option("--mock", is_flag=True, help="Use the scripted LLM from the fixtures directory.")
@click.option("--fixtures", default=None, help="Fixtures directory for --mock.")
@click.pass_obj
@handle_errors
def extract_cmd(config, corpus_path, out_path, ontology, mode, endpoint_url, model,
                max_retries, workers, mock, fixtures):
    """Extract causal relations from a corpus of abstracts."""
    spec = _load_spec(ontology, config)
    corpus = load_corpus(corpus_path)
    if mock:
        fixtures_dir = Path(resolve(fixtures, config, "fixtures", "fixtures"))
        script = fixtures_dir / "mock_llm.json"
        if not script.exists():
            raise InputError(f"mock extraction script not found: {script}")
        client = MockChatClient.from_script(script)
    else:
        url = resolve(endpoint_url, config, "endpoint_url")
        if not url:
            raise InputError("no extraction endpoint configured (--endpoint / ENDPOINT_URL)")
        client = OpenAiChatClient(url)
    report = extract_corpus(
        corpus,
        client,
        spec,
        mode=MODE_NAMES[mode],
        model=resolve(model, config, "model_name", "gpt-4o-mini"),
        max_retries=int(resolve(max_retries, config, "max_retries", 3)),
        workers=int(resolve(workers, config, "workers", 4)),
    )
    write_report(report, out_path)
    click.echo(
        f"extracted {report.relation_count} relations from {report.abstract_count} abstracts "
        f"({len(report.parse_failures)} parse failures, {len(report.failed_abstracts)} failed abstracts)"
    )


@main.command("refine")
@click.option("--in", "in_path", required=True, help="Extraction report (JSON).")
@click.option("--out", "out_path", required=True, help="Refined relations output (JSON lines).")
@click.option("--stats", "stats_path", default=None, help="Where to write the stats summary (JSON).")
@click.option("--ontology", default=None)
@click.pass_obj
@handle_errors
def refine_cmd(config, in_path, out_path, stats_path, ontology):
    """Normalize, deduplicate, and filter extracted relations."""
    spec = _load_spec(ontology, config)
    report = load_report(in_path)
    refined, stats = refine(report, spec)
    write_refined(refined, out_path)
    if stats_path:
        Path(stats_path).write_text(
            json.dumps(stats.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )
    click.echo(
        f"refined {stats.input_count} -> {stats.output_count} relations "
        f"(dropped: {stats.dropped_empty_name} empty, {stats.dropped_self_relation} self, "
        f"{stats.dropped_duplicate} duplicate)"
    )


@main.command("load")
@click.option("--in", "in_path", required=True, help="Refined relations (JSON lines).")
@click.option("--export", "export_path", required=True, help="N-Triples export file.")
@click.option("--endpoint", "endpoint_url", default=None,
              help="Optional SPARQL 1.1 Update endpoint to push INSERTs to.")
@click.option("--endpoint-user", default=None)
@click.option("--endpoint-password", default=None)
@click.option("--ontology", default=None)
@click.pass_obj
@handle_errors
def load_cmd(config, in_path, export_path, endpoint_url, endpoint_user,
             endpoint_password, ontology):
    """Build the knowledge graph and export it as canonical N-Triples."""
    spec = _load_spec(ontology, config)
    relations = load_refined(in_path)
    store = load_relations(relations, spec)
    Path(export_path).write_text(serialize_ntriples(store), encoding="utf-8")
    url = resolve(endpoint_url, config, "sparql_endpoint")
    if url:
        update = to_sparql_insert(sorted(store, key=lambda t: str(t)))
        push_to_endpoint(update, url, username=endpoint_user, password=endpoint_password)
        click.echo(f"pushed {len(store)} triples to {url}")
    click.echo(f"loaded {len(relations)} relations into {len(store)} triples -> {export_path}")


@main.command("index")
@click.option("--graph", "graph_path", required=True, help="N-Triples export to index.")
@click.option("--snapshot", "snapshot_path", required=True, help="Index snapshot output file.")
@click.option("--fallback-embedder", is_flag=True, envvar="FALLBACK_EMBEDDER",
              help="Use the deterministic offline embedder.")
@click.option("--embed-url", envvar="EMBED_URL", default=None,
              help="Embedding service URL (POST {'text': ...}).")
@click.option("--dim", type=int, default=None)
@click.option("--ontology", default=None)
@click.pass_obj
@handle_errors
def index_cmd(config, graph_path, snapshot_path, fallback_embedder, embed_url, dim, ontology):
    """Embed the graph's entities, relations, and publications into a vector index."""
    spec = _load_spec(ontology, config)
    store = load_ntriples(graph_path)
    embedder = _embedder(config, fallback_embedder, embed_url, dim)
    index = embed_and_index_graph(store, embedder, spec)
    index.save(snapshot_path)
    click.echo(f"indexed {len(index)} documents (dim {index.dim}) -> {snapshot_path}")


def _serving_deps(config, ontology, graph_path, snapshot_path, fallback_embedder,
                  embed_url, dim, mock, fixtures, llm_url, llm_model,
                  k_entities, k_relations, mock_capture=None):
    spec = _load_spec(ontology, config)
    graph_path = resolve(graph_path, config, "graph_export")
    snapshot_path = resolve(snapshot_path, config, "index_snapshot")
    if not graph_path or not snapshot_path:
        raise InputError("both --graph and --snapshot are required")
    store = load_ntriples(graph_path).seal()
    index = VectorIndex.load(snapshot_path)
    retrieval = RetrievalConfig(
        k_entities=int(resolve(k_entities, config, "k_entities", 5)),
        k_relations=int(resolve(k_relations, config, "k_relations", 10)),
        min_score=float(resolve(None, config, "min_score", 0.0)),
        max_context_chars=int(resolve(None, config, "max_context_chars", 4000)),
    )
    return ChatDeps(
        spec=spec,
        store=store,
        index=index,
        embedder=_embedder(config, fallback_embedder, embed_url, dim),
        llm=_chat_client(config, mock, fixtures, llm_url, mock_capture=mock_capture),
        llm_model=resolve(llm_model, config, "llm_model", "deepseek-r1:7b"),
        retrieval=retrieval,
    )


_serving_options = [
    click.option("--graph", "graph_path", default=None, help="N-Triples export to serve."),
    click.option("--snapshot", "snapshot_path", default=None, help="Index snapshot to serve."),
    click.option("--ontology", default=None),
    click.option("--fallback-embedder", is_flag=True, envvar="FALLBACK_EMBEDDER"),
    click.option("--embed-url", envvar="EMBED_URL", default=None),
    click.option("--dim", type=int, default=None),
    click.option("--mock", is_flag=True, help="Use scripted LLM/embedder fixtures (offline)."),
    click.option("--fixtures", default=None),
    click.option("--llm-url", envvar="LLM_URL", default=None),
    click.option("--llm-model", envvar="LLM_MODEL", default=None),
    click.option("--k-entities", envvar="K_ENTITIES", type=int, default=None),
    click.option("--k-relations", envvar="K_RELATIONS", type=int, default=None),
]


def serving_options(fn):
    for option in reversed(_serving_options):
        fn = option(fn)
    return fn


@main.command("ask")
@click.option("--question", required=True)
@serving_options
@click.option("--mock-capture", default=None, help="File capturing the prompts the mock receives.")
@click.pass_obj
@handle_errors
def ask_cmd(config, question, mock_capture, **kwargs):
    """One-shot question answering against the loaded graph (non-streaming)."""
    deps = _serving_deps(config, mock_capture=mock_capture, **kwargs)
    session = ChatSession(session_id="cli")
    answer = None
    for event in chat(session, question, deps):
        if isinstance(event, ErrorEvent):
            raise TransportError(event.message)
        if isinstance(event, DoneEvent):
            answer = event
    click.echo(answer.full_text)
    if answer.evidence:
        click.echo("\nSources:")
        for row in answer.evidence:
            click.echo(f"- {row.subject} {row.predicate} {row.object} ({row.publication_id})")


@main.command("serve")
@serving_options
@click.option("--bind", envvar="BIND_ADDR", default=None, help="host:port (default 127.0.0.1:8080).")
@click.option("--session-dir", default=None, help="Directory for file-backed session persistence.")
@click.option("--mock-capture", default=None, help="File capturing the prompts the mock receives.")
@click.pass_obj
@handle_errors
def serve_cmd(config, bind, session_dir, mock_capture, **kwargs):
    """Start the HTTP chat service (SSE streaming)."""
    from .chat import SessionStore
    from .server import ServingState, run_server

    deps = _serving_deps(config, mock_capture=mock_capture, **kwargs)
    bind = resolve(bind, config, "bind_addr", "127.0.0.1:8080")
    host, _, port_text = bind.partition(":")
    try:
        port = int(port_text) if port_text else 8080
    except ValueError:
        raise InputError(f"bad --bind address: {bind!r}")
    sessions = SessionStore(persist_dir=resolve(session_dir, config, "session_dir"))
    state = ServingState(deps=deps, sessions=sessions)
    if kwargs.get("mock"):
        # Mock servers also script the ingest path so CI stays offline.
        fixtures_dir = Path(resolve(kwargs.get("fixtures"), config, "fixtures", "fixtures"))
        script = fixtures_dir / "mock_llm.json"
        if script.exists():
            state.extract_client = MockChatClient.from_script(script)
    click.echo(f"serving on http://{host or '127.0.0.1'}:{port}")
    run_server(state, host=host or "127.0.0.1", port=port)


@main.command("report")
@click.option("--in", "in_path", required=True, help="Refined relations (JSON lines).")
@click.option("--stats", "stats_path", default=None, help="Refinement stats JSON to include.")
@click.option("--out-dir", required=True, help="Directory for summary.csv and figures.")
@click.pass_obj
@handle_errors
def report_cmd(config, in_path, stats_path, out_dir):
    """Render a summary table and distribution figures for a refined set."""
    from .report import write_summary_report

    relations = load_refined(in_path)
    stats = None
    if stats_path:
        try:
            stats = json.loads(Path(stats_path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputError(f"bad stats file {stats_path}: {exc}")
    written = write_summary_report(relations, out_dir, stats=stats)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
