"""Knowledge-base administration: versioned snapshots, atomic reload,
settings amendment, aggregate validation and the modularity report.

A snapshot bundles the parsed rules, catalogue and frames under one
version number.  Publication is a single reference swap, so readers see
either the old snapshot or the new one in full.  A failed reload leaves
the published snapshot untouched.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from .arl import ArlError, Focus, KBAst, MakeInstance, merge_kbs, parse_kb
from .knowledge import (
    Catalogue,
    Frame,
    KnowledgeError,
    check_consistency,
    load_catalogue,
    load_frames,
    topic_module_closure,
)
from .validation import ValidationReport, _walk_actions, validate_ast

CATALOGUE_FILE = "catalogue.json"
FRAMES_FILE = "frames.json"
DECISION_CLASS = "Final_Decision"


class ReloadError(Exception):
    def __init__(self, message: str, report: ValidationReport | None = None):
        self.report = report if report is not None else ValidationReport()
        super().__init__(message)


@dataclass(frozen=True)
class KbSnapshot:
    version: int
    kb: KBAst
    catalogue: Catalogue
    frames: tuple[Frame, ...]
    loaded_at: str  # RFC 3339

    def with_catalogue(self, catalogue: Catalogue) -> "KbSnapshot":
        return replace(
            self,
            version=self.version + 1,
            catalogue=catalogue,
            loaded_at=_now(),
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def load_kb_dir(kb_dir: Path) -> tuple[KBAst, Catalogue, tuple[Frame, ...]]:
    """Parse every .arl file (lexicographic order) plus catalogue.json and
    frames.json from a knowledge-base directory."""
    kb_dir = Path(kb_dir)
    if not kb_dir.is_dir():
        raise ReloadError(f"knowledge base directory {kb_dir} does not exist")
    asts = []
    for path in sorted(kb_dir.glob("*.arl")):
        source = path.read_text(encoding="utf-8")
        asts.append(parse_kb(source, filename=path.name))
    kb = merge_kbs(asts)
    catalogue_path = kb_dir / CATALOGUE_FILE
    frames_path = kb_dir / FRAMES_FILE
    if not catalogue_path.exists():
        raise ReloadError(f"missing {CATALOGUE_FILE} in {kb_dir}")
    catalogue = load_catalogue(catalogue_path)
    frames = tuple(load_frames(frames_path)) if frames_path.exists() else ()
    return kb, catalogue, frames


def validate_all(snapshot: KbSnapshot) -> ValidationReport:
    """Aggregate validation: AST checks, cross-reference consistency, then
    topic reachability (each topic's module closure must contain a rule
    that creates a Final_Decision instance)."""
    report = ValidationReport()
    report.extend(validate_ast(snapshot.kb, snapshot.catalogue))
    report.extend(check_consistency(snapshot.catalogue, list(snapshot.frames), snapshot.kb))
    for topic in snapshot.catalogue.topics:
        closure = topic_module_closure(snapshot.kb, topic.entry_module)
        creates_decision = False
        for rule in snapshot.kb.rules:
            if rule.module not in closure:
                continue
            for action in _walk_actions(rule.actions):
                if isinstance(action, MakeInstance) and action.class_name == DECISION_CLASS:
                    creates_decision = True
        if not creates_decision:
            report.add(
                "error", topic.id,
                f"no rule in the module closure of {topic.entry_module!r} creates a {DECISION_CLASS} instance",
            )
    return report


@dataclass(frozen=True)
class ModularityReport:
    modules: tuple[str, ...]
    edges: tuple[tuple[str, str, str], ...]  # (from, to, kind) kind in {import, focus}
    cycles: tuple[tuple[str, ...], ...]

    def to_json(self) -> dict:
        return {
            "modules": list(self.modules),
            "edges": [{"from": a, "to": b, "kind": k} for a, b, k in self.edges],
            "cycles": [list(c) for c in self.cycles],
        }


def modularity_report(snapshot: KbSnapshot) -> ModularityReport:
    """Module graph: import edges from declarations, focus edges from rule
    actions.  Cycles are reported over the focus edges."""
    kb = snapshot.kb
    modules = tuple(m.name for m in kb.modules)
    edges = []
    for mod in kb.modules:
        for imp in mod.imports:
            edge = (mod.name, imp, "import")
            if edge not in edges:
                edges.append(edge)
    focus_adj: dict[str, list[str]] = {}
    for rule in kb.rules:
        for action in _walk_actions(rule.actions):
            if isinstance(action, Focus):
                edge = (rule.module, action.module, "focus")
                if edge not in edges:
                    edges.append(edge)
                focus_adj.setdefault(rule.module, [])
                if action.module not in focus_adj[rule.module]:
                    focus_adj[rule.module].append(action.module)
    cycles = _focus_cycles(modules, focus_adj)
    return ModularityReport(modules, tuple(edges), tuple(cycles))


def _focus_cycles(modules, adj: dict) -> list[tuple[str, ...]]:
    """Strongly connected components of the focus graph with more than one
    node (or a self-loop), each reported as a sorted module list."""
    index = {}
    lowlink = {}
    on_stack = set()
    stack = []
    counter = [0]
    cycles = []

    def strongconnect(node):
        index[node] = lowlink[node] = counter[0]
        counter[0] += 1
        stack.append(node)
        on_stack.add(node)
        for neigh in adj.get(node, []):
            if neigh not in index:
                strongconnect(neigh)
                lowlink[node] = min(lowlink[node], lowlink[neigh])
            elif neigh in on_stack:
                lowlink[node] = min(lowlink[node], index[neigh])
        if lowlink[node] == index[node]:
            component = []
            while True:
                member = stack.pop()
                on_stack.discard(member)
                component.append(member)
                if member == node:
                    break
            if len(component) > 1 or node in adj.get(node, []):
                cycles.append(tuple(sorted(component)))

    for module in modules:
        if module not in index:
            strongconnect(module)
    return sorted(cycles)


class KbStore:
    """One writer, many readers.  The current snapshot is published by a
    single attribute swap; superseded snapshots stay reachable by version
    so in-flight sessions keep their pinned knowledge base."""

    def __init__(self, kb_dir: Path):
        self.kb_dir = Path(kb_dir)
        self._lock = threading.Lock()
        self._current: KbSnapshot | None = None
        self._versions: dict[int, KbSnapshot] = {}

    @property
    def current(self) -> KbSnapshot:
        snapshot = self._current
        if snapshot is None:
            raise ReloadError("no knowledge base loaded")
        return snapshot

    def get_version(self, version: int) -> KbSnapshot | None:
        return self._versions.get(version)

    def _publish(self, snapshot: KbSnapshot):
        self._versions[snapshot.version] = snapshot
        self._current = snapshot

    def reload(self) -> KbSnapshot:
        """Parse and validate the directory; publish on success only."""
        with self._lock:
            next_version = self._current.version + 1 if self._current else 1
            try:
                kb, catalogue, frames = load_kb_dir(self.kb_dir)
            except (ArlError, KnowledgeError, OSError, ValueError) as exc:
                report = ValidationReport()
                report.add("error", "load", str(exc))
                raise ReloadError(str(exc), report) from exc
            snapshot = KbSnapshot(next_version, kb, catalogue, frames, _now())
            report = validate_all(snapshot)
            if not report.ok:
                raise ReloadError("knowledge base failed validation", report)
            self._publish(snapshot)
            return snapshot

    def apply_settings(self, changes: dict) -> KbSnapshot:
        """Publish a new snapshot differing only in settings (version + 1)."""
        with self._lock:
            current = self.current
            new_settings = current.catalogue.settings.with_changes(changes)
            snapshot = current.with_catalogue(current.catalogue.with_settings(new_settings))
            self._publish(snapshot)
            return snapshot


def reload_kb(store: KbStore) -> KbSnapshot:
    return store.reload()


def apply_settings(snapshot: KbSnapshot, changes: dict) -> KbSnapshot:
    """Pure form: a snapshot with amended settings and a bumped version."""
    new_settings = snapshot.catalogue.settings.with_changes(changes)
    return snapshot.with_catalogue(snapshot.catalogue.with_settings(new_settings))
