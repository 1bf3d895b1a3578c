"""HTTP consultation service with file-backed session persistence.

Sessions are stored as JSON files under the data directory and reloaded on
demand, so the service can be stopped and restarted mid-consultation
without losing state.  Each session is pinned to the knowledge-base
version it started on; settings amendments only affect sessions started
afterwards.  Per-session requests are serialized with a lock; knowledge
base snapshot reads are lock-free.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .admin import KbSnapshot, KbStore, ReloadError, validate_all
from .consultation import (
    BinaryViolationError,
    ConsultationError,
    Decision,
    NoDecisionError,
    QueryPrompt,
    Session,
    SessionDecidedError,
    StaleQueryError,
    UnknownTopicError,
    explanation,
    session_from_dict,
    session_to_dict,
    start_session,
    submit_answer,
    trace_to_json,
)
from .knowledge import KnowledgeError, kb_stats


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, extra: dict | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.extra = extra or {}
        super().__init__(message)

    def response(self) -> JSONResponse:
        body = {"code": self.code, "message": self.message}
        body.update(self.extra)
        return JSONResponse(status_code=self.status, content=body)


_ERROR_STATUS = {
    UnknownTopicError: 404,
    BinaryViolationError: 400,
    StaleQueryError: 409,
    SessionDecidedError: 409,
    NoDecisionError: 500,
}


def _to_api_error(exc: ConsultationError) -> ApiError:
    status = _ERROR_STATUS.get(type(exc), 400)
    return ApiError(status, exc.code, str(exc))


class SessionStore:
    """Directory-backed session map; every mutation is written through."""

    def __init__(self, data_dir: Path, kb_store: KbStore):
        self.sessions_dir = Path(data_dir) / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.kb_store = kb_store
        self._cache: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    def _path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.json"

    def snapshot_for(self, session: Session) -> KbSnapshot:
        pinned = self.kb_store.get_version(session.kb_version)
        return pinned if pinned is not None else self.kb_store.current

    def save(self, session: Session):
        path = self._path(session.id)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps(session_to_dict(session), ensure_ascii=False), encoding="utf-8"
        )
        tmp.replace(path)
        self._cache[session.id] = session

    def load(self, session_id: str) -> Session:
        if session_id in self._cache:
            return self._cache[session_id]
        path = self._path(session_id)
        if not path.exists():
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        data = json.loads(path.read_text(encoding="utf-8"))
        pinned = self.kb_store.get_version(data["kb_version"])
        snapshot = pinned if pinned is not None else self.kb_store.current
        session = session_from_dict(data, snapshot.kb, snapshot.catalogue)
        self._cache[session_id] = session
        return session

    def open_session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.sessions_dir.glob("*.json"))


class CreateSessionBody(BaseModel):
    topic_id: str


class AnswerBody(BaseModel):
    query_id: str
    answer: str


class SettingsBody(BaseModel):
    changes: dict


def _step_payload(step) -> dict:
    if isinstance(step, QueryPrompt):
        return {
            "prompt": {
                "query_id": step.query_id,
                "text": step.text,
                "options": list(step.options),
            }
        }
    assert isinstance(step, Decision)
    return {"decision": step.to_dict()}


def _session_payload(session: Session) -> dict:
    payload = {
        "session_id": session.id,
        "topic_id": session.topic_id,
        "kb_version": session.kb_version,
        "status": session.status.kind,
        "answer_log": [list(pair) for pair in session.answer_log],
    }
    if session.status.kind == "awaiting_answer":
        payload["awaiting"] = session.status.query_id
    return payload


def create_app(kb_dir: Path, data_dir: Path, ui_dir: Path | None = None) -> FastAPI:
    """Build the service; raises ReloadError when the knowledge base does
    not validate."""
    store = KbStore(kb_dir)
    store.reload()
    sessions = SessionStore(Path(data_dir), store)

    app = FastAPI(title="advisor", version="0.1.0")
    app.state.kb_store = store
    app.state.sessions = sessions

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "bad_request", "message": "malformed request body"},
        )

    @app.exception_handler(json.JSONDecodeError)
    async def on_json_error(request: Request, exc: json.JSONDecodeError):
        return JSONResponse(
            status_code=400,
            content={"code": "bad_request", "message": "request body is not valid JSON"},
        )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "kb_version": store.current.version}

    @app.get("/api/catalogue")
    def catalogue():
        snapshot = store.current
        data = snapshot.catalogue.to_json()
        return {
            "kb_version": snapshot.version,
            "regulations": data["regulations"],
            "topics": data["topics"],
            "settings": data["settings"],
        }

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        snapshot = store.current
        try:
            session, step = start_session(
                snapshot.catalogue, snapshot.kb, body.topic_id, kb_version=snapshot.version
            )
        except ConsultationError as exc:
            raise _to_api_error(exc)
        sessions.save(session)
        payload = {"session_id": session.id, "kb_version": session.kb_version}
        payload.update(_step_payload(step))
        return payload

    @app.post("/api/sessions/{session_id}/answers")
    def answer(session_id: str, body: AnswerBody):
        with sessions.lock_for(session_id):
            session = sessions.load(session_id)
            snapshot = sessions.snapshot_for(session)
            try:
                step = submit_answer(session, snapshot.catalogue, body.query_id, body.answer)
            except ConsultationError as exc:
                raise _to_api_error(exc)
            sessions.save(session)
            return _step_payload(step)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        with sessions.lock_for(session_id):
            session = sessions.load(session_id)
            payload = _session_payload(session)
            if session.status.kind == "awaiting_answer":
                snapshot = sessions.snapshot_for(session)
                topic = snapshot.catalogue.topic(session.topic_id)
                qid = session.status.query_id
                payload.update(
                    _step_payload(QueryPrompt(qid, topic.queries[qid]))
                )
            elif session.status.kind == "decided":
                from .consultation import extract_decision

                payload.update(_step_payload(extract_decision(session.engine)))
            return payload

    @app.get("/api/sessions/{session_id}/explanation")
    def get_explanation(session_id: str):
        with sessions.lock_for(session_id):
            session = sessions.load(session_id)
            return {"trace": trace_to_json(explanation(session))}

    @app.post("/api/kb/reload")
    def reload_kb():
        try:
            snapshot = store.reload()
        except ReloadError as exc:
            raise ApiError(
                422, "validation_failed", str(exc), {"report": exc.report.to_json()}
            )
        return {"version": snapshot.version}

    @app.post("/api/kb/validate")
    def validate_kb():
        report = validate_all(store.current)
        return {"report": report.to_json()}

    @app.get("/api/kb/stats")
    def stats():
        snapshot = store.current
        return kb_stats(snapshot.catalogue, snapshot.kb)

    @app.put("/api/settings")
    def put_settings(body: SettingsBody):
        try:
            snapshot = store.apply_settings(body.changes)
        except KnowledgeError as exc:
            raise ApiError(422, "invalid_setting", str(exc))
        return {"version": snapshot.version}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
