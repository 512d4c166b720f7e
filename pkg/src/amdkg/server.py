"""HTTP serving layer: SSE chat, health, session history, optional ingest."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .chat import ChatDeps, ChunkEvent, DoneEvent, ErrorEvent, SessionStore, chat
from .errors import AmdkgError
from .extraction import AbstractRecord, extract_corpus
from .graph import load_relations
from .llm import ChatCompletionClient
from .ontology import PromptMode
from .refine import refine
from .vectors import embed_and_index_graph

log = logging.getLogger(__name__)


@dataclass
class ServingState:
    """Shared state behind the API; store sealed and index frozen at startup."""

    deps: ChatDeps
    sessions: SessionStore = field(default_factory=SessionStore)
    # Optional backend for /api/ingest; None disables the endpoint.
    extract_client: ChatCompletionClient | None = None
    extract_model: str = "gpt-4o-mini"
    extract_mode: PromptMode = PromptMode.FEW_SHOT


def _sse(event: str, data: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(data, ensure_ascii=False)}\n\n"


def _evidence_json(rows) -> list[dict]:
    return [
        {
            "relation_iri": str(r.relation_iri),
            "predicate": r.predicate,
            "subject": r.subject,
            "object": r.object,
            "publication_id": r.publication_id,
        }
        for r in rows
    ]


def create_app(state: ServingState) -> FastAPI:
    app = FastAPI(title="amdkg", docs_url=None, redoc_url=None)

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "index_size": len(state.deps.index),
            "triple_count": len(state.deps.store),
        }

    @app.get("/api/session/{session_id}")
    def get_session(session_id: str):
        session = state.sessions.get(session_id)
        if session is None:
            return JSONResponse({"error": f"unknown session: {session_id}"}, status_code=404)
        return session.to_json_dict()

    @app.post("/api/chat")
    async def post_chat(request: Request):
        try:
            body = json.loads(await request.body())
        except ValueError:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        if not isinstance(body, dict) or not isinstance(body.get("question"), str) \
                or not body["question"].strip():
            return JSONResponse(
                {"error": "body must be a JSON object with a non-empty 'question'"},
                status_code=400,
            )
        session_id = body.get("session_id")
        if session_id is not None and not isinstance(session_id, str):
            return JSONResponse({"error": "'session_id' must be a string"}, status_code=400)

        session = state.sessions.get_or_create(session_id)
        if not state.sessions.try_begin(session.session_id):
            return JSONResponse(
                {"error": f"session busy: {session.session_id}"}, status_code=409
            )

        def stream():
            try:
                for event in chat(session, body["question"], state.deps):
                    if isinstance(event, ChunkEvent):
                        yield _sse("chunk", {"text": event.text})
                    elif isinstance(event, DoneEvent):
                        state.sessions.save(session)
                        yield _sse(
                            "done",
                            {
                                "session_id": session.session_id,
                                "full_text": event.full_text,
                                "evidence": _evidence_json(event.evidence),
                                "elapsed_s": event.elapsed_s,
                            },
                        )
                    elif isinstance(event, ErrorEvent):
                        state.sessions.save(session)
                        yield _sse("error", {"message": event.message})
            finally:
                state.sessions.end(session.session_id)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/api/ingest")
    async def post_ingest(request: Request):
        if state.extract_client is None:
            return JSONResponse(
                {"error": "ingest is not enabled on this server"}, status_code=503
            )
        try:
            body = json.loads(await request.body())
            corpus = [
                AbstractRecord(
                    publication_id=rec["publication_id"],
                    text=rec["text"],
                    source_url=rec.get("source_url"),
                )
                for rec in body["corpus"]
            ]
        except (ValueError, KeyError, TypeError) as exc:
            return JSONResponse({"error": f"bad ingest body: {exc}"}, status_code=400)

        try:
            report = extract_corpus(
                corpus, state.extract_client, state.deps.spec,
                mode=state.extract_mode, model=state.extract_model,
            )
            refined, stats = refine(report, state.deps.spec)
            store = load_relations(refined, state.deps.spec).seal()
            index = embed_and_index_graph(store, state.deps.embedder, state.deps.spec)
        except AmdkgError as exc:
            return JSONResponse({"error": str(exc)}, status_code=500)

        state.deps.store = store
        state.deps.index = index
        log.info("ingest replaced serving state: %d triples, %d docs", len(store), len(index))
        return {
            "abstracts": report.abstract_count,
            "relations_extracted": report.relation_count,
            "relations_refined": stats.output_count,
            "triples": len(store),
            "documents": len(index),
        }

    return app


def run_server(state: ServingState, host: str = "127.0.0.1", port: int = 8080) -> None:
    import uvicorn

    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")
