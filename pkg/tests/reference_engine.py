"""Brute-force reference interpreter used as the engine's oracle.

Deliberately independent of advisor.engine: after every assert it rescans
all rules against all fact tuples (itertools.product in fact-id order)
instead of matching incrementally, and each cycle it recomputes the
runnable candidates from scratch.  Activation bookkeeping: a (rule,
support-tuple) key is evaluated exactly once, when the assert completing
the tuple happens; guard-passing keys get a creation sequence number,
guard-failing keys are remembered as dead.  Selection order is salience
desc, recency desc, sequence desc within the focused module, popping
exhausted modules.
"""

import itertools

from advisor.arl import (
    AssertAction,
    BindAction,
    Focus,
    GlobalRef,
    MakeInstance,
    RetractAction,
    StrCat,
    Switch,
    Symbol,
    Var,
    WILDCARD,
)


class RefEngine:
    def __init__(self, kb):
        self.kb = kb
        self.facts = {}    # id -> (head, args tuple)
        self.globals = {g.name: g.init for g in kb.globals}
        self.instances = {}
        self.focus_stack = ["MAIN"]
        self.fired = []    # qualified rule names in firing order
        self.fired_keys = set()
        self.seen = {}     # (qname, support) -> dict(passed, seq, bindings, rule)
        self.next_fact_id = 1
        self.next_seq = 1

    # -- working memory ------------------------------------------------------

    def assert_fact(self, head, args):
        fid = self.next_fact_id
        self.next_fact_id += 1
        self.facts[fid] = (head, tuple(args))
        self._rescan()
        return fid

    def retract_fact(self, fid):
        del self.facts[fid]

    # -- full rescan matching --------------------------------------------------

    def _rescan(self):
        for rule in self.kb.rules:
            candidate_lists = []
            for pattern in rule.patterns:
                ids = sorted(
                    fid
                    for fid, (head, args) in self.facts.items()
                    if head == pattern.head and len(args) == len(pattern.args)
                )
                candidate_lists.append(ids)
            for support in itertools.product(*candidate_lists):
                key = (rule.qualified, support)
                if key in self.seen:
                    continue
                bindings = self._unify_all(rule, support)
                if bindings is None:
                    continue
                passed = self._guards_pass(rule, support, bindings)
                info = {"passed": passed, "rule": rule, "bindings": bindings}
                if passed:
                    info["seq"] = self.next_seq
                    self.next_seq += 1
                self.seen[key] = info

    def _unify_all(self, rule, support):
        bindings = {}
        for pattern, fid in zip(rule.patterns, support):
            _head, args = self.facts[fid]
            for parg, value in zip(pattern.args, args):
                if parg is WILDCARD:
                    continue
                if isinstance(parg, Var):
                    if parg.name in bindings:
                        if bindings[parg.name] != value:
                            return None
                    else:
                        bindings[parg.name] = value
                elif parg != value:
                    return None
            if pattern.binder is not None:
                if pattern.binder in bindings and bindings[pattern.binder] != fid:
                    return None
                bindings[pattern.binder] = fid
        return bindings

    def _guards_pass(self, rule, support, bindings):
        for pattern in rule.patterns:
            if pattern.guard is None:
                continue
            if not self._eval_guard(pattern.guard, bindings):
                return False
        return True

    def _eval_guard(self, guard, bindings):
        lhs = self._eval(guard.lhs, bindings)
        if guard.op == "member":
            if isinstance(guard.rhs, list):
                return any(lhs == atom for atom in guard.rhs)
            return False
        rhs = self._eval(guard.rhs, bindings)
        if guard.op == "eq":
            return lhs == rhs
        if guard.op == "neq":
            return lhs != rhs
        if isinstance(lhs, int) and isinstance(rhs, int):
            return lhs >= rhs if guard.op == "gte" else lhs <= rhs
        return False

    # -- expression evaluation --------------------------------------------------

    def _eval(self, expr, bindings):
        if isinstance(expr, Var):
            return bindings[expr.name]
        if isinstance(expr, GlobalRef):
            return self.globals[expr.name]
        if isinstance(expr, StrCat):
            out = []
            for part in expr.parts:
                value = self._eval(part, bindings)
                if isinstance(value, Symbol):
                    out.append(value.name)
                elif isinstance(value, int):
                    out.append(str(value))
                else:
                    out.append(value)
            return "".join(out)
        return expr

    # -- control loop ---------------------------------------------------------

    def _candidates(self):
        out = []
        for (qname, support), info in self.seen.items():
            if not info["passed"]:
                continue
            if (qname, support) in self.fired_keys:
                continue
            if not all(fid in self.facts for fid in support):
                continue
            out.append((qname, support, info))
        return out

    def _select(self):
        while self.focus_stack:
            module = self.focus_stack[-1]
            best = None
            for qname, support, info in self._candidates():
                if info["rule"].module != module:
                    continue
                rank = (info["rule"].salience, max(support), info["seq"])
                if best is None or rank > best[0]:
                    best = (rank, qname, support, info)
            if best is not None:
                return best[1:]
            self.focus_stack.pop()
        return None

    def run(self, budget=10_000):
        steps = 0
        while True:
            selected = self._select()
            if selected is None:
                self.focus_stack = ["MAIN"]
                return
            if steps >= budget:
                raise RuntimeError("reference interpreter budget exceeded")
            qname, support, info = selected
            self.fired_keys.add((qname, support))
            self.fired.append(qname)
            for action in info["rule"].actions:
                self._do(action, info["bindings"])
            steps += 1

    def _do(self, action, bindings):
        if isinstance(action, Focus):
            self.focus_stack.append(action.module)
        elif isinstance(action, AssertAction):
            self.assert_fact(action.head, [self._eval(a, bindings) for a in action.args])
        elif isinstance(action, RetractAction):
            self.retract_fact(bindings[action.var])
        elif isinstance(action, BindAction):
            self.globals[action.target] = self._eval(action.value, bindings)
        elif isinstance(action, Switch):
            value = self._eval(action.scrutinee, bindings)
            for case in action.cases:
                if case.value == value:
                    self._do(case.action, bindings)
                    return
            if action.default is not None:
                self._do(action.default, bindings)
        elif isinstance(action, MakeInstance):
            values = {a.slot: self._eval(a.value, bindings) for a in action.slots}
            self.instances[action.instance] = (action.class_name, values)
        else:
            raise RuntimeError(f"unsupported action {action!r}")

    # -- comparison surface --------------------------------------------------------

    def wm_multiset(self):
        return sorted(
            (head, tuple(_key(a) for a in args)) for head, args in self.facts.values()
        )

    def globals_view(self):
        return dict(self.globals)


def _key(atom):
    if isinstance(atom, Symbol):
        return ("sym", atom.name)
    if isinstance(atom, int):
        return ("int", atom)
    return ("str", atom)
