"""Forward-chaining inference engine over an ARL knowledge base.

Working memory holds ordered facts with monotonically increasing recency
ids.  Matching is naive and incremental: every assert enumerates the new
rule activations whose support includes the new fact, in rule-declaration
then fact-id order, so runs are fully deterministic.  Conflict resolution
picks, among the activations of the module on top of the focus stack, the
highest salience, then the highest recency (max support id), then the most
recently created activation.  A fired (rule, support) pair never fires
again (refraction).

An `ask` action suspends the run and surfaces a query id; the caller
asserts the answer as a fact and resumes with run().
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .arl import (
    AskAction,
    AssertAction,
    Atom,
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
    Symbol,
    Test,
    Var,
    WILDCARD,
    render_atom,
)
from .knowledge import (
    IntSetSetting,
    IntSetting,
    OrdinalScaleSetting,
    OrdinalThresholdSetting,
    Settings,
)
from .validation import validate_ast

MAIN_MODULE = "MAIN"
DEFAULT_STEP_BUDGET = 10_000


class EngineError(Exception):
    pass


@dataclass(frozen=True)
class Quiescent:
    pass


@dataclass(frozen=True)
class Suspended:
    query_id: str


RunOutcome = Quiescent | Suspended


@dataclass
class Fact:
    id: int
    head: str
    args: tuple

    def render(self) -> str:
        parts = [self.head] + [render_atom(a) for a in self.args]
        return "(" + " ".join(parts) + ")"


@dataclass
class InstanceObj:
    name: str
    class_name: str
    slot_values: dict


@dataclass
class Activation:
    rule: RuleDef
    bindings: dict           # variable name -> atom (fact binders bind ids)
    support: tuple[int, ...]  # one fact id per pattern, in pattern order
    seq: int

    @property
    def qualified(self) -> str:
        return self.rule.qualified

    @property
    def salience(self) -> int:
        return self.rule.salience

    @property
    def recency(self) -> int:
        return max(self.support)

    @property
    def key(self):
        return (self.rule.qualified, self.support)


@dataclass
class FiredEntry:
    rule: str
    module: str
    salience: int
    bindings: dict
    support: tuple[int, ...]
    facts: list[str]  # support facts rendered at firing time


# ---------------------------------------------------------------------------
# Expressions and guards

def eval_expr(expr, bindings: dict, globals_env: dict) -> Atom:
    """Evaluate an expression: literals self-evaluate, variables and globals
    look up their bindings, str-cat concatenates rendered operands."""
    if isinstance(expr, Var):
        if expr.name not in bindings:
            raise EngineError(f"unbound variable ?{expr.name}")
        return bindings[expr.name]
    if isinstance(expr, GlobalRef):
        if expr.name not in globals_env:
            raise EngineError(f"undeclared global ?*{expr.name}*")
        return globals_env[expr.name]
    if isinstance(expr, StrCat):
        return "".join(_stringify(eval_expr(p, bindings, globals_env)) for p in expr.parts)
    return expr  # literal atom


def _stringify(value: Atom) -> str:
    if isinstance(value, Symbol):
        return value.name
    if isinstance(value, int):
        return str(value)
    return value


def _resolve_operand(expr, bindings: dict, globals_env: dict, settings: Settings):
    """Evaluate a guard operand; a plain symbol naming a setting resolves to
    the setting value."""
    value = eval_expr(expr, bindings, globals_env)
    if isinstance(value, Symbol):
        setting = settings.get(value.name)
        if setting is not None:
            return setting
    return value


def _ordinal_index(value, settings: Settings):
    """Map an operand to (scale, index); returns None when not ordinal."""
    if isinstance(value, OrdinalThresholdSetting):
        scale = settings.scale_values(value.scale)
        if scale is None or value.value not in scale:
            return None
        return scale, scale.index(value.value)
    if isinstance(value, Symbol):
        for name in settings.names():
            scale = settings.scale_values(name)
            if scale is not None and value.name in scale:
                return scale, scale.index(value.name)
    return None


def eval_test(test: Test, bindings: dict, globals_env: dict, settings: Settings) -> bool:
    """Evaluate a pattern guard.  Comparisons that cannot be interpreted
    (mixed kinds, values off every scale) simply fail the match."""
    lhs = _resolve_operand(test.lhs, bindings, globals_env, settings)

    if test.op == "member":
        if isinstance(test.rhs, list):
            return any(lhs == atom for atom in test.rhs)
        rhs = _resolve_operand(test.rhs, bindings, globals_env, settings)
        if isinstance(rhs, IntSetSetting):
            return isinstance(lhs, int) and lhs in rhs.values
        if isinstance(rhs, OrdinalScaleSetting):
            return isinstance(lhs, Symbol) and lhs.name in rhs.values
        return False

    rhs = _resolve_operand(test.rhs, bindings, globals_env, settings)

    if test.op in ("eq", "neq"):
        lhs_cmp = lhs.value if isinstance(lhs, IntSetting) else lhs
        rhs_cmp = rhs.value if isinstance(rhs, IntSetting) else rhs
        if isinstance(lhs_cmp, OrdinalThresholdSetting):
            lhs_cmp = Symbol(lhs_cmp.value)
        if isinstance(rhs_cmp, OrdinalThresholdSetting):
            rhs_cmp = Symbol(rhs_cmp.value)
        equal = lhs_cmp == rhs_cmp
        return equal if test.op == "eq" else not equal

    # gte / lte over integers or ordinal-scale values
    lhs_num = lhs.value if isinstance(lhs, IntSetting) else lhs
    rhs_num = rhs.value if isinstance(rhs, IntSetting) else rhs
    if isinstance(lhs_num, int) and isinstance(rhs_num, int):
        return lhs_num >= rhs_num if test.op == "gte" else lhs_num <= rhs_num

    lhs_ord = _ordinal_index(lhs, settings)
    rhs_ord = _ordinal_index(rhs, settings)
    if lhs_ord is None or rhs_ord is None:
        return False
    lhs_scale, lhs_idx = lhs_ord
    rhs_scale, rhs_idx = rhs_ord
    if lhs_scale != rhs_scale:
        return False
    return lhs_idx >= rhs_idx if test.op == "gte" else lhs_idx <= rhs_idx


# ---------------------------------------------------------------------------
# Engine

class Engine:
    """Executable state for one knowledge base run or consultation."""

    def __init__(self, kb: KBAst, settings: Settings | None = None, validate: bool = True):
        if validate:
            report = validate_ast(kb)
            if not report.ok:
                raise EngineError(
                    "invalid knowledge base: "
                    + "; ".join(str(d) for d in report.errors)
                )
        self.kb = kb
        self.settings = settings if settings is not None else Settings()
        self.facts: dict[int, Fact] = {}
        self._by_head: dict[str, list[int]] = {}
        self.globals_env: dict = {g.name: g.init for g in kb.globals}
        self.instances: dict[str, InstanceObj] = {}
        self.agenda: dict[str, list[Activation]] = {}
        self.focus_stack: list[str] = [MAIN_MODULE]
        self.fired_log: list[FiredEntry] = []
        self.refraction: set = set()
        self._queued: set = set()
        self._next_fact_id = 1
        self._next_seq = 1

    # -- working memory -----------------------------------------------------

    def assert_fact(self, head, args) -> Fact:
        if isinstance(head, Symbol):
            head = head.name
        fact = Fact(self._next_fact_id, head, tuple(args))
        self._next_fact_id += 1
        self.facts[fact.id] = fact
        self._by_head.setdefault(head, []).append(fact.id)
        self._activate_for_new_fact(fact.id)
        return fact

    def retract_fact(self, fact_id: int):
        if fact_id not in self.facts:
            raise EngineError(f"unknown fact id {fact_id}")
        fact = self.facts.pop(fact_id)
        self._by_head[fact.head].remove(fact_id)
        for module, bucket in self.agenda.items():
            keep = []
            for act in bucket:
                if fact_id in act.support:
                    self._queued.discard(act.key)
                else:
                    keep.append(act)
            self.agenda[module] = keep

    # -- matching -----------------------------------------------------------

    def _activate_for_new_fact(self, new_id: int):
        for rule in self.kb.rules:
            for support, bindings in self._match_rule(rule):
                if new_id not in support:
                    continue
                key = (rule.qualified, support)
                if key in self.refraction or key in self._queued:
                    continue
                act = Activation(rule, bindings, support, self._next_seq)
                self._next_seq += 1
                self.agenda.setdefault(rule.module, []).append(act)
                self._queued.add(key)

    def _match_rule(self, rule: RuleDef):
        """All (support, bindings) matches of a rule against working memory,
        in lexicographic fact-id order."""
        results = []

        def descend(idx: int, bindings: dict, support: tuple):
            if idx == len(rule.patterns):
                results.append((support, dict(bindings)))
                return
            pattern = rule.patterns[idx]
            for fact_id in self._by_head.get(pattern.head, []):
                fact = self.facts[fact_id]
                new_bindings = self._unify(pattern, fact, bindings)
                if new_bindings is None:
                    continue
                if pattern.guard is not None and not eval_test(
                    pattern.guard, new_bindings, self.globals_env, self.settings
                ):
                    continue
                descend(idx + 1, new_bindings, support + (fact_id,))

        descend(0, {}, ())
        return results

    @staticmethod
    def _unify(pattern: Pattern, fact: Fact, bindings: dict):
        if len(pattern.args) != len(fact.args):
            return None
        new = dict(bindings)
        for arg, value in zip(pattern.args, fact.args):
            if arg is WILDCARD:
                continue
            if isinstance(arg, Var):
                if arg.name in new:
                    if new[arg.name] != value:
                        return None
                else:
                    new[arg.name] = value
            elif arg != value:
                return None
        if pattern.binder is not None:
            if pattern.binder in new and new[pattern.binder] != fact.id:
                return None
            new[pattern.binder] = fact.id
        return new

    # -- conflict resolution --------------------------------------------------

    def select_next(self) -> Activation | None:
        """Pick the next activation from the focused module; pops modules
        whose agenda is exhausted."""
        while self.focus_stack:
            module = self.focus_stack[-1]
            bucket = self.agenda.get(module, [])
            if bucket:
                return max(bucket, key=lambda a: (a.salience, a.recency, a.seq))
            self.focus_stack.pop()
        return None

    # -- firing ----------------------------------------------------------------

    def fire(self, activation: Activation) -> RunOutcome | None:
        for fact_id in activation.support:
            if fact_id not in self.facts:
                raise EngineError(
                    f"stale activation of {activation.qualified}: fact {fact_id} was retracted"
                )
        bucket = self.agenda.get(activation.rule.module, [])
        if activation in bucket:
            bucket.remove(activation)
        self._queued.discard(activation.key)
        self.refraction.add(activation.key)
        self.fired_log.append(
            FiredEntry(
                rule=activation.qualified,
                module=activation.rule.module,
                salience=activation.salience,
                bindings=dict(activation.bindings),
                support=activation.support,
                facts=[self.facts[fid].render() for fid in activation.support],
            )
        )
        for action in activation.rule.actions:
            outcome = self._execute(action, activation)
            if outcome is not None:
                return outcome
        return None

    def _execute(self, action, activation: Activation) -> Suspended | None:
        bindings = activation.bindings
        if isinstance(action, Focus):
            self.focus_stack.append(action.module)
            return None
        if isinstance(action, AssertAction):
            args = [eval_expr(a, bindings, self.globals_env) for a in action.args]
            self.assert_fact(action.head, args)
            return None
        if isinstance(action, RetractAction):
            fact_id = bindings.get(action.var)
            if not isinstance(fact_id, int):
                raise EngineError(f"retract: ?{action.var} is not bound to a fact")
            self.retract_fact(fact_id)
            return None
        if isinstance(action, BindAction):
            if action.target not in self.globals_env:
                raise EngineError(f"bind to undeclared global ?*{action.target}*")
            self.globals_env[action.target] = eval_expr(action.value, bindings, self.globals_env)
            return None
        if isinstance(action, Switch):
            value = eval_expr(action.scrutinee, bindings, self.globals_env)
            for case in action.cases:
                if case.value == value:
                    return self._execute(case.action, activation)
            if action.default is not None:
                return self._execute(action.default, activation)
            return None
        if isinstance(action, MakeInstance):
            return self._make_instance(action, activation)
        if isinstance(action, AskAction):
            return Suspended(action.query_id)
        raise EngineError(f"unknown action {action!r}")

    def _make_instance(self, action: MakeInstance, activation: Activation) -> None:
        cls = self.kb.class_by_name(action.class_name)
        if cls is None:
            raise EngineError(f"make-instance of undeclared class {action.class_name!r}")
        kinds = {s.name: s.kind for s in cls.slots}
        values = {}
        for assign in action.slots:
            value = eval_expr(assign.value, activation.bindings, self.globals_env)
            kind = kinds.get(assign.slot)
            if kind is None:
                raise EngineError(
                    f"{activation.qualified}: unknown slot {assign.slot!r} of {action.class_name!r}"
                )
            if kind == "integer" and not isinstance(value, int):
                raise EngineError(
                    f"{activation.qualified}: slot {assign.slot!r} expects an integer"
                )
            if kind == "string" and not isinstance(value, str):
                raise EngineError(
                    f"{activation.qualified}: slot {assign.slot!r} expects a string"
                )
            values[assign.slot] = value
        self.instances[action.instance] = InstanceObj(action.instance, action.class_name, values)
        return None

    # -- the run loop ------------------------------------------------------------

    def run(self, budget: int = DEFAULT_STEP_BUDGET) -> RunOutcome:
        fired = 0
        while True:
            activation = self.select_next()
            if activation is None:
                # exhaustion popped the whole stack; park at the base module
                # so facts asserted later can still drive a new run
                self.focus_stack = [MAIN_MODULE]
                return Quiescent()
            if fired >= budget:
                raise EngineError(f"rule firing budget of {budget} exceeded; runaway knowledge base")
            outcome = self.fire(activation)
            fired += 1
            if isinstance(outcome, Suspended):
                return outcome

    # -- serialization -------------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "facts": [
                {"id": f.id, "head": f.head, "args": [_atom_to_json(a) for a in f.args]}
                for f in sorted(self.facts.values(), key=lambda f: f.id)
            ],
            "globals": {k: _atom_to_json(v) for k, v in self.globals_env.items()},
            "instances": [
                {
                    "name": inst.name,
                    "class": inst.class_name,
                    "slots": {k: _atom_to_json(v) for k, v in inst.slot_values.items()},
                }
                for inst in self.instances.values()
            ],
            "focus_stack": list(self.focus_stack),
            "fired_log": [
                {
                    "rule": e.rule,
                    "module": e.module,
                    "salience": e.salience,
                    "bindings": {k: _atom_to_json(v) for k, v in e.bindings.items()},
                    "support": list(e.support),
                    "facts": list(e.facts),
                }
                for e in self.fired_log
            ],
        }

    def snapshot_bytes(self) -> bytes:
        return json.dumps(self.snapshot(), ensure_ascii=False, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_snapshot(cls, kb: KBAst, snapshot: dict, settings: Settings | None = None) -> "Engine":
        """Rebuild an engine from a serialized snapshot.  The agenda is
        recomputed from working memory minus the fired refraction pairs."""
        engine = cls(kb, settings=settings, validate=False)
        for f in snapshot["facts"]:
            fact = Fact(f["id"], f["head"], tuple(_atom_from_json(a) for a in f["args"]))
            engine.facts[fact.id] = fact
            engine._by_head.setdefault(fact.head, []).append(fact.id)
        engine._next_fact_id = max(engine.facts, default=0) + 1
        engine.globals_env = {k: _atom_from_json(v) for k, v in snapshot["globals"].items()}
        for i in snapshot["instances"]:
            engine.instances[i["name"]] = InstanceObj(
                i["name"], i["class"], {k: _atom_from_json(v) for k, v in i["slots"].items()}
            )
        engine.focus_stack = list(snapshot["focus_stack"])
        for e in snapshot["fired_log"]:
            entry = FiredEntry(
                rule=e["rule"],
                module=e["module"],
                salience=e["salience"],
                bindings={k: _atom_from_json(v) for k, v in e["bindings"].items()},
                support=tuple(e["support"]),
                facts=list(e["facts"]),
            )
            engine.fired_log.append(entry)
            engine.refraction.add((entry.rule, entry.support))
        for rule in engine.kb.rules:
            for support, bindings in engine._match_rule(rule):
                key = (rule.qualified, support)
                if key in engine.refraction or key in engine._queued:
                    continue
                act = Activation(rule, bindings, support, engine._next_seq)
                engine._next_seq += 1
                engine.agenda.setdefault(rule.module, []).append(act)
                engine._queued.add(key)
        return engine


def _atom_to_json(value: Atom):
    if isinstance(value, Symbol):
        return {"sym": value.name}
    return value


def _atom_from_json(value):
    if isinstance(value, dict) and "sym" in value:
        return Symbol(value["sym"])
    return value
