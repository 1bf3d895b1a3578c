"""Interactive consultations: binary queries in, a cited decision out.

A session drives one engine.  Starting a session asserts a topic fact and
runs the engine; each `ask` suspension surfaces a yes/no prompt, each
answer is asserted as an `(Answer <query-id> <yes|no>)` fact and the run
resumes.  When the engine goes quiescent the decision is read off the
Final_Decision instance: a tri-state code (0 none, 1 approve, 2 deny),
the causes text, and pipe-separated law texts and law links.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

from .arl import KBAst, Symbol
from .engine import Engine, Quiescent, Suspended
from .knowledge import Catalogue

DECISION_CLASS = "Final_Decision"
ANSWER_HEAD = "Answer"
TOPIC_HEAD = "Topic"
EXCEPTION_HEAD = "Exception"
BINARY_OPTIONS = ("yes", "no")


class ConsultationError(Exception):
    code = "consultation_error"


class UnknownTopicError(ConsultationError):
    code = "unknown_topic"


class BinaryViolationError(ConsultationError):
    code = "binary_violation"


class StaleQueryError(ConsultationError):
    code = "stale_query"


class SessionDecidedError(ConsultationError):
    code = "session_decided"


class NoDecisionError(ConsultationError):
    code = "no_decision"


@dataclass(frozen=True)
class QueryPrompt:
    query_id: str
    text: str
    options: tuple[str, str] = BINARY_OPTIONS


@dataclass(frozen=True)
class Decision:
    ok_code: int
    causes: str
    law_texts: tuple[str, ...]
    law_links: tuple[str, ...]
    exceptions: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "ok_code": self.ok_code,
            "causes": self.causes,
            "law_texts": list(self.law_texts),
            "law_links": list(self.law_links),
            "exceptions": list(self.exceptions),
        }


@dataclass(frozen=True)
class TraceEntry:
    rule: str
    module: str
    salience: int
    bindings: dict
    facts: tuple[str, ...]

    def to_dict(self) -> dict:
        from .engine import _atom_to_json

        return {
            "rule": self.rule,
            "module": self.module,
            "salience": self.salience,
            "bindings": {k: _atom_to_json(v) for k, v in self.bindings.items()},
            "facts": list(self.facts),
        }


@dataclass
class Status:
    kind: str  # awaiting_answer | decided | abandoned
    query_id: str | None = None


@dataclass
class Session:
    id: str
    topic_id: str
    kb_version: int
    engine: Engine
    answer_log: list[tuple[str, str]] = field(default_factory=list)
    status: Status = field(default_factory=lambda: Status("abandoned"))


def _split_piped(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split("|") if part.strip())


def extract_decision(engine: Engine, catalogue: Catalogue | None = None) -> Decision:
    """Read the decision off the engine's Final_Decision instance."""
    decision_obj = None
    for inst in engine.instances.values():
        if inst.class_name == DECISION_CLASS:
            decision_obj = inst
    if decision_obj is None:
        raise NoDecisionError("no decision instance exists")
    slots = decision_obj.slot_values
    exceptions = []
    for fact in sorted(engine.facts.values(), key=lambda f: f.id):
        if fact.head == EXCEPTION_HEAD:
            exceptions.extend(
                arg if isinstance(arg, str) else str(arg) for arg in fact.args
            )
    return Decision(
        ok_code=slots.get("Decision_OK", 0),
        causes=slots.get("Decision_Causes", ""),
        law_texts=_split_piped(slots.get("Decision_Law_Text", "")),
        law_links=_split_piped(slots.get("Decision_Law_Link", "")),
        exceptions=tuple(exceptions),
    )


def _outcome_to_step(session: Session, catalogue: Catalogue, outcome) -> QueryPrompt | Decision:
    topic = catalogue.topic(session.topic_id)
    if isinstance(outcome, Suspended):
        text = topic.queries.get(outcome.query_id)
        if text is None:
            raise ConsultationError(
                f"engine asked {outcome.query_id!r}, which is not in the topic's query table"
            )
        if any(qid == outcome.query_id for qid, _ in session.answer_log):
            raise ConsultationError(f"query {outcome.query_id!r} was asked twice")
        session.status = Status("awaiting_answer", outcome.query_id)
        return QueryPrompt(outcome.query_id, text)
    assert isinstance(outcome, Quiescent)
    decision = extract_decision(session.engine, catalogue)
    session.status = Status("decided")
    return decision


def start_session(
    catalogue: Catalogue,
    kb: KBAst,
    topic_id: str,
    kb_version: int = 1,
    session_id: str | None = None,
) -> tuple[Session, QueryPrompt | Decision]:
    """Open a consultation on a topic and run it to the first prompt or,
    for zero-query topics, straight to the decision."""
    topic = catalogue.topic(topic_id)
    if topic is None:
        raise UnknownTopicError(f"unknown topic {topic_id!r}")
    engine = Engine(kb, settings=catalogue.settings, validate=False)
    session = Session(
        id=session_id or uuid.uuid4().hex,
        topic_id=topic_id,
        kb_version=kb_version,
        engine=engine,
    )
    engine.assert_fact(TOPIC_HEAD, [Symbol(topic_id)])
    outcome = engine.run()
    return session, _outcome_to_step(session, catalogue, outcome)


def submit_answer(
    session: Session,
    catalogue: Catalogue,
    query_id: str,
    answer: str,
) -> QueryPrompt | Decision:
    """Feed one yes/no answer to the awaited query and resume the run."""
    if session.status.kind == "decided":
        raise SessionDecidedError("session is already decided")
    if session.status.kind != "awaiting_answer":
        raise ConsultationError("session is not awaiting an answer")
    if answer not in BINARY_OPTIONS:
        raise BinaryViolationError(f"answer must be yes or no, got {answer!r}")
    if query_id != session.status.query_id:
        raise StaleQueryError(
            f"awaiting {session.status.query_id!r}, got answer for {query_id!r}"
        )
    session.engine.assert_fact(ANSWER_HEAD, [Symbol(query_id), Symbol(answer)])
    session.answer_log.append((query_id, answer))
    outcome = session.engine.run()
    return _outcome_to_step(session, catalogue, outcome)


def explanation(session: Session) -> list[TraceEntry]:
    """The fired-rule trace justifying the session's state, in firing order."""
    return [
        TraceEntry(
            rule=e.rule,
            module=e.module,
            salience=e.salience,
            bindings=dict(e.bindings),
            facts=tuple(e.facts),
        )
        for e in session.engine.fired_log
    ]


def trace_to_json(entries: list[TraceEntry]) -> list[dict]:
    return [e.to_dict() for e in entries]


# ---------------------------------------------------------------------------
# Session persistence

def session_to_dict(session: Session) -> dict:
    return {
        "id": session.id,
        "topic_id": session.topic_id,
        "kb_version": session.kb_version,
        "status": {"kind": session.status.kind, "query_id": session.status.query_id},
        "answer_log": [list(pair) for pair in session.answer_log],
        "engine": session.engine.snapshot(),
    }


def session_from_dict(data: dict, kb: KBAst, catalogue: Catalogue) -> Session:
    engine = Engine.from_snapshot(kb, data["engine"], settings=catalogue.settings)
    session = Session(
        id=data["id"],
        topic_id=data["topic_id"],
        kb_version=data["kb_version"],
        engine=engine,
        answer_log=[tuple(pair) for pair in data["answer_log"]],
        status=Status(data["status"]["kind"], data["status"]["query_id"]),
    )
    return session
