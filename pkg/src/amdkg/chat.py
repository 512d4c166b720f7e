"""Grounded chat: prompt assembly, citation linkification, streaming answers.

The system prompt wraps the retrieved evidence context; clinical-trial IDs in
the answer are turned into markdown links server-side, buffered at whitespace
boundaries so an ID split across two model chunks is still caught.
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .context import ContextBlock, NO_RELATIONS_LINE, RetrievalConfig, build_context
from .errors import TransportError
from .graph import GraphStore, RelationRow
from .llm import ChatCompletionClient, Message
from .ontology import OntologySpec
from .vectors import Embedder, VectorIndex

TRIAL_URL_PREFIX = "https://app.dimensions.ai/details/clinical_trial/"

DEFAULT_LLM_MODEL = "deepseek-r1:7b"

HISTORY_MAX_TURNS = 8
HISTORY_CHAR_BUDGET = 2000

RAG_SYSTEM_TEMPLATE = """You are a highly knowledgeable and trusted medical research assistant specializing in age-related macular degeneration (AMD). You have access to the following additional relevant data:
{context}
Your task is to provide thorough, accurate, and detailed answers about AMD research. Please follow these guidelines precisely:
1. **Incorporate and Format Available References:**
   - Examine the provided data carefully. If you encounter any clinical trial IDs or reference numbers (e.g., NCT01291121), include them in your response.
   - Always present these references as markdown hyperlinks using the following format:
     [NCT01291121](https://app.dimensions.ai/details/clinical_trial/NCT01291121)
   - If the additional data contains reference IDs, ensure they are clearly integrated into your answer using this format.
2. **Indicate When Reference Data Is Missing:**
   - If no reference data or clinical trial IDs are available in the provided context, explicitly mention that no additional references were found.
3. **Express Uncertainty When Necessary:**
   - If you do not have enough information to answer confidently, clearly state the limitations and specify what extra details or data would be needed.
4. **Maintain Accuracy and Integrity:**
   - Do not fabricate any references or information. Base your answer solely on verified data and the provided context.
5. **Communicate Professionally and Clearly:**
   - Deliver your response in a clear, well-organized, and professional tone, ensuring that complex information is accessible and understandable.
Please begin your response below."""


# --- sessions ------------------------------------------------------------------


@dataclass
class Turn:
    role: str  # "user" | "assistant"
    text: str
    timestamp: float


@dataclass
class ChatSession:
    session_id: str
    created_at: float = field(default_factory=time.time)
    history: list[Turn] = field(default_factory=list)

    def append_user(self, text: str) -> None:
        # A failed chat leaves a trailing user turn; the next question may
        # legitimately follow it, so only assistant turns are gated.
        self.history.append(Turn("user", text, time.time()))

    def append_assistant(self, text: str) -> None:
        if not self.history or self.history[-1].role != "user":
            raise ValueError("assistant turn must follow a user turn")
        self.history.append(Turn("assistant", text, time.time()))

    def to_json_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "history": [vars(t) for t in self.history],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ChatSession":
        session = cls(session_id=data["session_id"], created_at=data["created_at"])
        session.history = [Turn(**t) for t in data["history"]]
        return session


class SessionStore:
    """In-memory sessions with optional per-session JSON persistence.

    ``try_begin``/``end`` implement the one-in-flight-chat-per-session rule.
    """

    def __init__(self, persist_dir: str | Path | None = None):
        self._sessions: dict[str, ChatSession] = {}
        self._busy: set[str] = set()
        self._lock = threading.Lock()
        self.persist_dir = Path(persist_dir) if persist_dir else None
        if self.persist_dir:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
            for path in self.persist_dir.glob("*.json"):
                try:
                    session = ChatSession.from_json_dict(
                        json.loads(path.read_text(encoding="utf-8"))
                    )
                    self._sessions[session.session_id] = session
                except (ValueError, KeyError, TypeError):
                    continue  # ignore unreadable session files

    def get(self, session_id: str) -> ChatSession | None:
        with self._lock:
            return self._sessions.get(session_id)

    def get_or_create(self, session_id: str | None) -> ChatSession:
        with self._lock:
            if session_id and session_id in self._sessions:
                return self._sessions[session_id]
            session = ChatSession(session_id=session_id or uuid.uuid4().hex)
            self._sessions[session.session_id] = session
            return session

    def try_begin(self, session_id: str) -> bool:
        with self._lock:
            if session_id in self._busy:
                return False
            self._busy.add(session_id)
            return True

    def end(self, session_id: str) -> None:
        with self._lock:
            self._busy.discard(session_id)

    def save(self, session: ChatSession) -> None:
        if not self.persist_dir:
            return
        path = self.persist_dir / f"{session.session_id}.json"
        path.write_text(
            json.dumps(session.to_json_dict(), ensure_ascii=False, indent=2),
            encoding="utf-8",
        )


# --- prompt assembly -----------------------------------------------------------


@dataclass(frozen=True)
class RagPrompt:
    system: str
    messages: list[Message]


def _truncate_history(history: list[Turn]) -> list[Turn]:
    kept = list(history[-HISTORY_MAX_TURNS:])
    while kept and sum(len(t.text) for t in kept) > HISTORY_CHAR_BUDGET:
        kept = kept[2:]  # evict the oldest pair first
    return kept


def build_rag_prompt(context: ContextBlock, session: ChatSession, question: str) -> RagPrompt:
    """Substitute the rendered context into the system template.

    With no evidence the substituted block carries the explicit no-references
    marker so the model can disclose that nothing was found. The current
    question is appended after the (truncated) conversation history.
    """
    rendered = context.rendered
    if not context.evidence and NO_RELATIONS_LINE not in rendered:
        rendered = (rendered + "\n" if rendered else "") + NO_RELATIONS_LINE
    system = RAG_SYSTEM_TEMPLATE.replace("{context}", rendered)
    messages: list[Message] = [
        {"role": t.role, "content": t.text} for t in _truncate_history(session.history)
    ]
    messages.append({"role": "user", "content": question})
    return RagPrompt(system=system, messages=messages)


# --- linkification -------------------------------------------------------------

_NCT_RE = re.compile(r"NCT\d{8}(?!\d)")
_MD_LINK_RE = re.compile(r"\[[^\]]*\]\([^)]*\)")


def _link_bare_ids(text: str) -> str:
    return _NCT_RE.sub(lambda m: f"[{m.group(0)}]({TRIAL_URL_PREFIX}{m.group(0)})", text)


def linkify_trial_ids(text: str) -> str:
    """Turn every bare NCT + 8 digit trial ID into a markdown hyperlink.

    IDs already inside a markdown link (text or URL part) are left alone, so
    the function is idempotent.
    """
    out = []
    pos = 0
    for m in _MD_LINK_RE.finditer(text):
        out.append(_link_bare_ids(text[pos : m.start()]))
        out.append(m.group(0))
        pos = m.end()
    out.append(_link_bare_ids(text[pos:]))
    return "".join(out)


def linkify_stream(chunks) -> Iterator[str]:
    """Linkify a chunk stream, holding back partial words at chunk boundaries.

    The trailing non-whitespace run is buffered until more text (or the end
    of the stream) arrives, so a trial ID split across chunks is linked once
    it is complete.
    """
    buffer = ""
    for chunk in chunks:
        buffer += chunk
        m = re.search(r"\s\S*$", buffer)
        if m is None:
            continue
        flush, buffer = buffer[: m.start() + 1], buffer[m.start() + 1 :]
        if flush:
            yield linkify_trial_ids(flush)
    if buffer:
        yield linkify_trial_ids(buffer)


# --- the chat pipeline ----------------------------------------------------------


@dataclass(frozen=True)
class ChunkEvent:
    text: str


@dataclass(frozen=True)
class DoneEvent:
    full_text: str
    evidence: list[RelationRow]
    elapsed_s: float


@dataclass(frozen=True)
class ErrorEvent:
    message: str


ChatEvent = ChunkEvent | DoneEvent | ErrorEvent


@dataclass
class ChatDeps:
    """Everything a chat turn needs; store sealed and index frozen at serve time."""

    spec: OntologySpec
    store: GraphStore
    index: VectorIndex
    embedder: Embedder
    llm: ChatCompletionClient
    llm_model: str = DEFAULT_LLM_MODEL
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)


def chat(session: ChatSession, question: str, deps: ChatDeps) -> Iterator[ChatEvent]:
    """One grounded chat turn as a stream of events.

    Yields ChunkEvents whose concatenation equals the DoneEvent's full text,
    byte for byte. On a transport failure the terminal event is an ErrorEvent
    and the session keeps the user turn but gains no assistant turn.
    """
    started = time.monotonic()
    context = build_context(
        question, deps.index, deps.embedder, deps.store, deps.spec, deps.retrieval
    )
    prompt = build_rag_prompt(context, session, question)
    session.append_user(question)
    messages = [{"role": "system", "content": prompt.system}, *prompt.messages]

    parts: list[str] = []
    try:
        stream = deps.llm.complete(messages, model=deps.llm_model, stream=True)
        for piece in linkify_stream(stream):
            parts.append(piece)
            yield ChunkEvent(piece)
    except TransportError as exc:
        yield ErrorEvent(str(exc))
        return

    full_text = "".join(parts)
    session.append_assistant(full_text)
    yield DoneEvent(
        full_text=full_text,
        evidence=list(context.evidence),
        elapsed_s=time.monotonic() - started,
    )
