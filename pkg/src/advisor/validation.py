"""Structural validation of parsed knowledge bases.

validate_ast checks the references a parser cannot: focus targets, module
imports, class names in make-instance, variable binding in actions, switch
case uniqueness and ask placement.  Results come back as a ValidationReport
rather than exceptions so callers can aggregate reports from several
checkers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .arl import (
    AskAction,
    AssertAction,
    BindAction,
    Focus,
    GlobalRef,
    KBAst,
    MakeInstance,
    Pattern,
    RetractAction,
    RuleDef,
    StrCat,
    Switch,
    Var,
)


@dataclass
class Diagnostic:
    severity: str      # "error" | "warning"
    where: str         # definition name the finding is about
    message: str
    file: str | None = None
    line: int | None = None

    def to_dict(self) -> dict:
        d = {"severity": self.severity, "where": self.where, "message": self.message}
        if self.file is not None:
            d["file"] = self.file
            d["line"] = self.line
        return d

    def __str__(self) -> str:
        loc = f" ({self.file}:{self.line})" if self.file else ""
        return f"{self.severity}: {self.where}: {self.message}{loc}"


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    def add(self, severity: str, where: str, message: str, source_map: dict | None = None):
        file = line = None
        if source_map and where in source_map:
            file, line = source_map[where]
        self.diagnostics.append(Diagnostic(severity, where, message, file, line))

    def extend(self, other: "ValidationReport"):
        self.diagnostics.extend(other.diagnostics)

    def to_json(self) -> list[dict]:
        return [d.to_dict() for d in self.diagnostics]

    def __len__(self) -> int:
        return len(self.diagnostics)


def _walk_actions(actions):
    """Yield every action, descending into switch cases and defaults."""
    for action in actions:
        yield action
        if isinstance(action, Switch):
            for case in action.cases:
                yield from _walk_actions([case.action])
            if action.default is not None:
                yield from _walk_actions([action.default])


def _expr_vars(expr):
    if isinstance(expr, Var):
        yield expr.name
    elif isinstance(expr, StrCat):
        for part in expr.parts:
            yield from _expr_vars(part)


def _expr_globals(expr):
    if isinstance(expr, GlobalRef):
        yield expr.name
    elif isinstance(expr, StrCat):
        for part in expr.parts:
            yield from _expr_globals(part)


def _action_exprs(action):
    if isinstance(action, AssertAction):
        yield from action.args
    elif isinstance(action, BindAction):
        yield action.value
    elif isinstance(action, MakeInstance):
        for assign in action.slots:
            yield assign.value
    elif isinstance(action, Switch):
        yield action.scrutinee


def pattern_vars(pattern: Pattern):
    """Variables bound by one pattern, including its fact binder."""
    names = []
    if pattern.binder is not None:
        names.append(pattern.binder)
    for arg in pattern.args:
        if isinstance(arg, Var):
            names.append(arg.name)
    return names


def bound_vars(rule: RuleDef) -> set[str]:
    out: set[str] = set()
    for pat in rule.patterns:
        out.update(pattern_vars(pat))
    return out


def rule_law_link_ids(rule: RuleDef) -> list[str]:
    """Law-article ids cited by this rule.

    By convention a rule cites articles by binding a pipe-separated id
    string to the Decision_Law_Link global or instance slot; only string
    literals (including str-cat literal operands) can be read statically.
    """
    texts: list[str] = []

    def literal_strings(expr):
        if isinstance(expr, str):
            texts.append(expr)
        elif isinstance(expr, StrCat):
            for part in expr.parts:
                literal_strings(part)

    for action in _walk_actions(rule.actions):
        if isinstance(action, BindAction) and action.target == "Decision_Law_Link":
            literal_strings(action.value)
        elif isinstance(action, MakeInstance):
            for assign in action.slots:
                if assign.slot == "Decision_Law_Link":
                    literal_strings(assign.value)
    ids = []
    for text in texts:
        for part in text.split("|"):
            part = part.strip()
            if part:
                ids.append(part)
    return ids


def validate_ast(ast: KBAst, catalogue=None) -> ValidationReport:
    """Validate cross-references within a knowledge base.

    With a catalogue supplied, ask query ids are also checked against the
    union of the topics' query tables.
    """
    report = ValidationReport()
    smap = ast.source_map
    modules = ast.module_names()
    globals_declared = ast.global_names()
    class_names = {c.name for c in ast.classes}

    for mod in ast.modules:
        for imp in mod.imports:
            if imp not in modules:
                report.add("error", mod.name, f"import of undeclared module {imp!r}", smap)

    for cls in ast.classes:
        if cls.module not in modules:
            report.add("error", cls.qualified, f"class declared in unknown module {cls.module!r}", smap)

    known_queries = None
    if catalogue is not None:
        known_queries = set()
        for topic in catalogue.topics:
            known_queries.update(topic.queries.keys())

    seen_rules = set()
    for rule in ast.rules:
        where = rule.qualified
        if where in seen_rules:
            report.add("error", where, "duplicate rule name within module", smap)
        seen_rules.add(where)
        if rule.module not in modules:
            report.add("error", where, f"rule declared in unknown module {rule.module!r}", smap)

        # variables must be bound left to right; guards may only use
        # variables from their own or earlier patterns
        bound: set[str] = set()
        for pat in rule.patterns:
            bound.update(pattern_vars(pat))
            if pat.guard is not None:
                for expr in (pat.guard.lhs, pat.guard.rhs):
                    if isinstance(expr, list):
                        continue
                    for name in _expr_vars(expr):
                        if name not in bound:
                            report.add(
                                "error", where,
                                f"guard variable ?{name} is not bound by a preceding pattern",
                                smap,
                            )

        binders = {p.binder for p in rule.patterns if p.binder is not None}
        actions = list(_walk_actions(rule.actions))
        for action in actions:
            for expr in _action_exprs(action):
                for name in _expr_vars(expr):
                    if name not in bound:
                        report.add("error", where, f"unbound variable ?{name} in actions", smap)
                for gname in _expr_globals(expr):
                    if gname not in globals_declared:
                        report.add("error", where, f"reference to undeclared global ?*{gname}*", smap)
            if isinstance(action, Focus):
                if action.module not in modules:
                    report.add("error", where, f"focus on undeclared module {action.module!r}", smap)
            elif isinstance(action, BindAction):
                if action.target not in globals_declared:
                    report.add("error", where, f"bind to undeclared global ?*{action.target}*", smap)
            elif isinstance(action, RetractAction):
                if action.var not in binders:
                    report.add(
                        "error", where,
                        f"retract of ?{action.var}, which is not a fact binder",
                        smap,
                    )
            elif isinstance(action, MakeInstance):
                if action.class_name not in class_names:
                    report.add("error", where, f"make-instance of undeclared class {action.class_name!r}", smap)
                else:
                    cls = ast.class_by_name(action.class_name)
                    declared_slots = {s.name for s in cls.slots}
                    for assign in action.slots:
                        if assign.slot not in declared_slots:
                            report.add("error", where, f"unknown slot {assign.slot!r} of class {action.class_name!r}", smap)
            elif isinstance(action, Switch):
                seen_cases = []
                for case in action.cases:
                    if case.value in seen_cases:
                        from .arl import render_atom
                        report.add("error", where, f"duplicate switch case {render_atom(case.value)}", smap)
                    seen_cases.append(case.value)
            elif isinstance(action, AskAction) and known_queries is not None:
                if action.query_id not in known_queries:
                    report.add("error", where, f"ask of unknown query id {action.query_id!r}", smap)

        # ask placement: at most one, and only as the final top-level action
        ask_count = sum(1 for a in actions if isinstance(a, AskAction))
        if ask_count > 1:
            report.add("error", where, "more than one (ask ...) action", smap)
        elif ask_count == 1:
            top = rule.actions
            if not top or not isinstance(top[-1], AskAction):
                report.add("error", where, "(ask ...) must be the final action", smap)

    return report
