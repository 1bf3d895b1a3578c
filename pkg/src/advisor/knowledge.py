"""Declarative knowledge: frames, the derived semantic network, the
regulation catalogue with citable law articles, consultation topics and
mutable settings.

Frames live in frames.json, everything else in catalogue.json.  Catalogue
values are immutable after load; settings changes go through
Settings.with_changes which returns a new value.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .arl import GlobalRef, KBAst, StrCat, Symbol, Var
from .validation import ValidationReport, rule_law_link_ids

LAW_ID_RE = re.compile(r"\d+(-\d+)*\Z")


class KnowledgeError(Exception):
    pass


class UnknownLawLinkError(KnowledgeError):
    def __init__(self, link_id: str):
        self.link_id = link_id
        super().__init__(f"unknown law link {link_id!r}")


# ---------------------------------------------------------------------------
# Frames and the semantic network

@dataclass(frozen=True)
class SlotValue:
    kind: str  # "frame" | "literal"
    text: str


@dataclass(frozen=True)
class FrameSlot:
    relation: str
    value: SlotValue


@dataclass(frozen=True)
class Frame:
    name: str
    slots: tuple[FrameSlot, ...] = ()


@dataclass(frozen=True)
class SemanticNetwork:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str, str]]  # (from, label, to)


def build_network(frames: list[Frame]) -> SemanticNetwork:
    """Derive the semantic network: one node per frame name or frame-ref
    target, one labeled edge per frame-ref slot.  Literal slot values
    produce no edges."""
    nodes = set()
    edges = set()
    for frame in frames:
        nodes.add(frame.name)
        for slot in frame.slots:
            if slot.value.kind == "frame":
                nodes.add(slot.value.text)
                edges.add((frame.name, slot.relation, slot.value.text))
    return SemanticNetwork(frozenset(nodes), frozenset(edges))


def frames_from_json(data: list) -> list[Frame]:
    frames = []
    for entry in data:
        slots = []
        seen = set()
        for s in entry.get("slots", []):
            value = SlotValue(s["value"]["kind"], s["value"]["text"])
            if value.kind not in ("frame", "literal"):
                raise KnowledgeError(f"frame {entry['name']!r}: bad slot value kind {value.kind!r}")
            key = (s["relation"], value)
            if key in seen:
                raise KnowledgeError(f"frame {entry['name']!r}: duplicate slot {s['relation']!r}")
            seen.add(key)
            slots.append(FrameSlot(s["relation"], value))
        frames.append(Frame(entry["name"], tuple(slots)))
    return frames


def frames_to_json(frames: list[Frame]) -> list:
    return [
        {
            "name": f.name,
            "slots": [
                {"relation": s.relation, "value": {"kind": s.value.kind, "text": s.value.text}}
                for s in f.slots
            ],
        }
        for f in frames
    ]


# ---------------------------------------------------------------------------
# Settings

@dataclass(frozen=True)
class IntSetting:
    value: int

    kind = "integer"

    def to_json(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class IntSetSetting:
    values: tuple[int, ...]

    kind = "integer-set"

    def to_json(self):
        return {"kind": self.kind, "values": list(self.values)}


@dataclass(frozen=True)
class OrdinalScaleSetting:
    values: tuple[str, ...]  # ordered low to high

    kind = "ordinal-scale"

    def to_json(self):
        return {"kind": self.kind, "values": list(self.values)}


@dataclass(frozen=True)
class OrdinalThresholdSetting:
    scale: str  # name of an ordinal-scale setting
    value: str

    kind = "ordinal-threshold"

    def to_json(self):
        return {"kind": self.kind, "scale": self.scale, "value": self.value}


SettingValue = IntSetting | IntSetSetting | OrdinalScaleSetting | OrdinalThresholdSetting


@dataclass(frozen=True)
class Settings:
    entries: tuple[tuple[str, SettingValue], ...] = ()

    def get(self, name: str) -> SettingValue | None:
        for key, value in self.entries:
            if key == name:
                return value
        return None

    def names(self):
        return [key for key, _ in self.entries]

    def scale_values(self, name: str) -> tuple[str, ...] | None:
        value = self.get(name)
        if isinstance(value, OrdinalScaleSetting):
            return value.values
        return None

    def validate(self):
        for name, value in self.entries:
            if isinstance(value, OrdinalThresholdSetting):
                scale = self.scale_values(value.scale)
                if scale is None:
                    raise KnowledgeError(
                        f"setting {name!r}: unknown ordinal scale {value.scale!r}")
                if value.value not in scale:
                    raise KnowledgeError(
                        f"setting {name!r}: {value.value!r} is not on scale {value.scale!r}")

    def with_changes(self, changes: dict) -> "Settings":
        """Apply a name -> new-value delta; values keep their declared kind.

        Shorthand values are accepted: an int for integer settings, a list
        of ints for integer sets, a list of strings for ordinal scales and
        a string for ordinal thresholds.
        """
        current = dict(self.entries)
        for name, raw in changes.items():
            if name not in current:
                raise KnowledgeError(f"unknown setting {name!r}")
            current[name] = _coerce_setting(name, current[name], raw)
        updated = Settings(tuple((k, current[k]) for k, _ in self.entries))
        updated.validate()
        return updated

    def to_json(self) -> dict:
        return {name: value.to_json() for name, value in self.entries}


def _coerce_setting(name: str, old: SettingValue, raw) -> SettingValue:
    if isinstance(raw, dict):
        new = _setting_from_json(name, raw)
        if new.kind != old.kind:
            raise KnowledgeError(f"setting {name!r}: cannot change kind {old.kind!r} to {new.kind!r}")
        return new
    if isinstance(old, IntSetting):
        if not isinstance(raw, int) or isinstance(raw, bool):
            raise KnowledgeError(f"setting {name!r}: expected an integer")
        return IntSetting(raw)
    if isinstance(old, IntSetSetting):
        if not isinstance(raw, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
            raise KnowledgeError(f"setting {name!r}: expected a list of integers")
        return IntSetSetting(tuple(raw))
    if isinstance(old, OrdinalScaleSetting):
        if not isinstance(raw, list) or not all(isinstance(v, str) for v in raw):
            raise KnowledgeError(f"setting {name!r}: expected a list of symbols")
        return OrdinalScaleSetting(tuple(raw))
    if isinstance(old, OrdinalThresholdSetting):
        if not isinstance(raw, str):
            raise KnowledgeError(f"setting {name!r}: expected a symbol")
        return OrdinalThresholdSetting(old.scale, raw)
    raise KnowledgeError(f"setting {name!r}: unsupported value")


def _setting_from_json(name: str, data: dict) -> SettingValue:
    kind = data.get("kind")
    if kind == "integer":
        return IntSetting(data["value"])
    if kind == "integer-set":
        return IntSetSetting(tuple(data["values"]))
    if kind == "ordinal-scale":
        return OrdinalScaleSetting(tuple(data["values"]))
    if kind == "ordinal-threshold":
        return OrdinalThresholdSetting(data["scale"], data["value"])
    raise KnowledgeError(f"setting {name!r}: unknown kind {kind!r}")


def settings_from_json(data: dict) -> Settings:
    settings = Settings(tuple((name, _setting_from_json(name, v)) for name, v in data.items()))
    settings.validate()
    return settings


# ---------------------------------------------------------------------------
# Catalogue

@dataclass(frozen=True)
class Regulation:
    id: str
    name: str
    declared_rule_count: int


@dataclass(frozen=True)
class LawArticle:
    id: str
    regulation_id: str
    text: str


@dataclass(frozen=True)
class TopicDef:
    id: str
    title: str
    regulation_id: str
    entry_module: str
    queries: dict  # query id -> question text, in display order


@dataclass(frozen=True)
class Catalogue:
    regulations: tuple[Regulation, ...] = ()
    articles: tuple[LawArticle, ...] = ()
    topics: tuple[TopicDef, ...] = ()
    settings: Settings = field(default_factory=Settings)

    def topic(self, topic_id: str) -> TopicDef | None:
        for t in self.topics:
            if t.id == topic_id:
                return t
        return None

    def regulation(self, reg_id: str) -> Regulation | None:
        for r in self.regulations:
            if r.id == reg_id:
                return r
        return None

    def with_settings(self, settings: Settings) -> "Catalogue":
        return replace(self, settings=settings)

    def to_json(self) -> dict:
        return {
            "regulations": [
                {"id": r.id, "name": r.name, "declared_rule_count": r.declared_rule_count}
                for r in self.regulations
            ],
            "articles": [
                {"id": a.id, "regulation_id": a.regulation_id, "text": a.text}
                for a in self.articles
            ],
            "topics": [
                {
                    "id": t.id,
                    "title": t.title,
                    "regulation_id": t.regulation_id,
                    "entry_module": t.entry_module,
                    "queries": dict(t.queries),
                }
                for t in self.topics
            ],
            "settings": self.settings.to_json(),
        }


def catalogue_from_json(data: dict) -> Catalogue:
    regulations = tuple(
        Regulation(r["id"], r["name"], int(r["declared_rule_count"]))
        for r in data.get("regulations", [])
    )
    ids = [r.id for r in regulations]
    if len(ids) != len(set(ids)):
        raise KnowledgeError("duplicate regulation ids")
    articles = tuple(
        LawArticle(a["id"], a["regulation_id"], a["text"])
        for a in data.get("articles", [])
    )
    aids = [a.id for a in articles]
    if len(aids) != len(set(aids)):
        raise KnowledgeError("duplicate article ids")
    for a in articles:
        if not LAW_ID_RE.match(a.id):
            raise KnowledgeError(f"article id {a.id!r} is not a dotted-dash identifier")
    topics = tuple(
        TopicDef(t["id"], t["title"], t["regulation_id"], t["entry_module"], dict(t.get("queries", {})))
        for t in data.get("topics", [])
    )
    settings = settings_from_json(data.get("settings", {}))
    return Catalogue(regulations, articles, topics, settings)


def load_catalogue(path: Path) -> Catalogue:
    with open(path, encoding="utf-8") as fh:
        return catalogue_from_json(json.load(fh))


def load_frames(path: Path) -> list[Frame]:
    with open(path, encoding="utf-8") as fh:
        return frames_from_json(json.load(fh))


def resolve_law_link(catalogue: Catalogue, link_id: str) -> LawArticle:
    for article in catalogue.articles:
        if article.id == link_id:
            return article
    raise UnknownLawLinkError(link_id)


# ---------------------------------------------------------------------------
# Consistency checking

def _guard_setting_refs(ast: KBAst):
    """Yield (rule, expr-position, symbol-name, op) for every plain symbol
    operand of a Test guard."""
    for rule in ast.rules:
        for pat in rule.patterns:
            if pat.guard is None:
                continue
            test = pat.guard
            operands = [test.lhs]
            if not isinstance(test.rhs, list):
                operands.append(test.rhs)
            for expr in operands:
                if isinstance(expr, Symbol):
                    yield rule, expr.name, test.op
                elif isinstance(expr, (Var, GlobalRef, StrCat)):
                    continue


def check_consistency(catalogue: Catalogue, frames: list[Frame], ast: KBAst) -> ValidationReport:
    """Cross-reference check over the whole knowledge bundle.

    Empty iff every frame-ref resolves, every statically visible law link
    resolves to an article, every topic entry module exists, and every
    settings name used in a Test guard resolves.
    """
    report = ValidationReport()
    frame_names = {f.name for f in frames}
    article_ids = {a.id for a in catalogue.articles}
    regulation_ids = {r.id for r in catalogue.regulations}
    modules = ast.module_names()

    for frame in frames:
        for slot in frame.slots:
            if slot.value.kind == "frame" and slot.value.text not in frame_names:
                report.add(
                    "error", frame.name,
                    f"slot {slot.relation!r} references undeclared frame {slot.value.text!r}",
                )

    for article in catalogue.articles:
        if article.regulation_id not in regulation_ids:
            report.add("error", article.id, f"article cites unknown regulation {article.regulation_id!r}")

    for topic in catalogue.topics:
        if topic.regulation_id not in regulation_ids:
            report.add("error", topic.id, f"topic cites unknown regulation {topic.regulation_id!r}")
        if topic.entry_module not in modules:
            report.add("error", topic.id, f"topic entry module {topic.entry_module!r} is not declared")
        for qid, text in topic.queries.items():
            if not text:
                report.add("error", topic.id, f"query {qid!r} has empty text")

    for rule in ast.rules:
        for link_id in rule_law_link_ids(rule):
            if link_id not in article_ids:
                report.add(
                    "error", rule.qualified,
                    f"law link {link_id!r} does not resolve to a catalogue article",
                    ast.source_map,
                )

    scale_members = set()
    for name in catalogue.settings.names():
        value = catalogue.settings.get(name)
        if isinstance(value, OrdinalScaleSetting):
            scale_members.update(value.values)
    setting_names = set(catalogue.settings.names())
    for rule, symbol_name, op in _guard_setting_refs(ast):
        if op == "member":
            if symbol_name not in setting_names:
                report.add(
                    "error", rule.qualified,
                    f"guard references unknown setting {symbol_name!r}",
                    ast.source_map,
                )
        elif op in ("gte", "lte"):
            if symbol_name not in setting_names and symbol_name not in scale_members:
                report.add(
                    "error", rule.qualified,
                    f"guard symbol {symbol_name!r} is neither a setting nor an ordinal value",
                    ast.source_map,
                )

    return report


# ---------------------------------------------------------------------------
# Statistics

def topic_module_closure(ast: KBAst, entry_module: str) -> set[str]:
    """Modules reachable from entry_module through focus actions."""
    from .arl import Focus
    from .validation import _walk_actions

    closure = {entry_module}
    changed = True
    while changed:
        changed = False
        for rule in ast.rules:
            if rule.module not in closure:
                continue
            for action in _walk_actions(rule.actions):
                if isinstance(action, Focus) and action.module not in closure:
                    closure.add(action.module)
                    changed = True
    return closure


def kb_stats(catalogue: Catalogue, ast: KBAst) -> dict:
    """Per-regulation declared counts, the declared total and the number of
    implemented rules per topic (rules in the topic's module closure)."""
    regulations = [
        {"id": r.id, "name": r.name, "declared_rule_count": r.declared_rule_count}
        for r in catalogue.regulations
    ]
    declared_counts = {r.name: r.declared_rule_count for r in catalogue.regulations}
    total = sum(r.declared_rule_count for r in catalogue.regulations)
    topics = {}
    for topic in catalogue.topics:
        closure = topic_module_closure(ast, topic.entry_module)
        topics[topic.id] = sum(1 for rule in ast.rules if rule.module in closure)
    return {
        "regulations": regulations,
        "declared_counts": declared_counts,
        "total_declared": total,
        "topics": topics,
    }
