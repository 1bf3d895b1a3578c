"""ARL, the advisory rule language: lexer, parser, AST types and renderer.

ARL is a small parenthesized rule language for forward-chaining advisory
knowledge bases.  A knowledge base is a sequence of top-level definitions:

    (defmodule MAIN (export ?ALL))
    (defglobal ?*Decision_OK* = 0)
    (defclass MAIN::Final_Decision (is-a USER) (slot Decision_OK (type INTEGER)))
    (defrule MAIN::Dispatch (declare (salience 10))
      (List 1 ?n)
      =>
      (switch ?n (case 1 then (focus LIST_01_01))))

Comments run from `;` to end of line.  `?name` is a variable, a bare `?`
is a wildcard, `?*name*` references a global.  Rule and class names are
qualified as MODULE::NAME.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# ---------------------------------------------------------------------------
# Errors

class ArlError(Exception):
    """Base error for ARL sources, carrying a source position."""

    def __init__(self, message: str, file: str = "<kb>", line: int = 0, col: int = 0):
        self.message = message
        self.file = file
        self.line = line
        self.col = col
        super().__init__(str(self))

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.message}"


class LexError(ArlError):
    pass


class ParseError(ArlError):
    pass


# ---------------------------------------------------------------------------
# Atoms

@dataclass(frozen=True)
class Symbol:
    """A bare name; distinct from a string literal with the same text."""

    name: str

    def __str__(self) -> str:
        return self.name


# An atom is an int, a str (string literal) or a Symbol.
Atom = int | str | Symbol


@dataclass(frozen=True)
class Var:
    """A `?name` variable occurring in a pattern or expression."""

    name: str

    def __str__(self) -> str:
        return "?" + self.name


@dataclass(frozen=True)
class GlobalRef:
    """A `?*name*` reference to a defglobal."""

    name: str

    def __str__(self) -> str:
        return f"?*{self.name}*"


class _WildcardType:
    """Singleton for the bare `?` pattern argument."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "WILDCARD"


WILDCARD = _WildcardType()


@dataclass(frozen=True)
class StrCat:
    """String concatenation expression: (str-cat a b ...)."""

    parts: tuple

    def __str__(self) -> str:
        return "(str-cat ...)"


# ---------------------------------------------------------------------------
# Tokens

TOKEN_KINDS = (
    "lparen", "rparen", "symbol", "variable", "global-ref",
    "wildcard", "integer", "string",
)

_DELIMS = set(" \t\r\n();\"")
_INT_RE = re.compile(r"-?[0-9]+\Z")
_VAR_RE = re.compile(r"\?[A-Za-z_][A-Za-z0-9_-]*\Z")
_GLOBAL_RE = re.compile(r"\?\*[A-Za-z_][A-Za-z0-9_-]*\*\Z")


@dataclass
class Token:
    kind: str
    text: str        # exact source lexeme, including quotes for strings
    line: int        # 1-based
    col: int         # 1-based
    value: object = None  # decoded value: int, str content, or bare name


def tokenize(source: str, filename: str = "<kb>") -> list[Token]:
    """Lex ARL source into tokens.

    Comments (`;` to end of line) produce no tokens.  Raises LexError on
    unterminated strings and on illegal (control) characters.
    """
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)

    def advance(ch):
        nonlocal line, col
        if ch == "\n":
            line += 1
            col = 1
        else:
            col += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(ch)
            i += 1
            continue
        if ch == ";":
            while i < n and source[i] != "\n":
                i += 1
                col += 1
            continue
        if ch == "(":
            tokens.append(Token("lparen", "(", line, col))
            i += 1
            col += 1
            continue
        if ch == ")":
            tokens.append(Token("rparen", ")", line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            j = i + 1
            buf = []
            advance('"')
            while True:
                if j >= n:
                    raise LexError("unterminated string", filename, start_line, start_col)
                c = source[j]
                if c == "\\":
                    if j + 1 >= n:
                        raise LexError("unterminated string", filename, start_line, start_col)
                    buf.append(source[j + 1])
                    advance(c)
                    advance(source[j + 1])
                    j += 2
                    continue
                if c == '"':
                    advance(c)
                    j += 1
                    break
                buf.append(c)
                advance(c)
                j += 1
            tokens.append(Token("string", source[i:j], start_line, start_col, "".join(buf)))
            i = j
            continue
        if ord(ch) < 32:
            raise LexError(f"illegal character {ch!r}", filename, line, col)
        # maximal run of non-delimiter characters
        start_line, start_col = line, col
        j = i
        while j < n and source[j] not in _DELIMS:
            if ord(source[j]) < 32:
                raise LexError(f"illegal character {source[j]!r}", filename, line, col)
            advance(source[j])
            j += 1
        text = source[i:j]
        i = j
        if _INT_RE.match(text):
            tokens.append(Token("integer", text, start_line, start_col, int(text)))
        elif text == "?":
            tokens.append(Token("wildcard", text, start_line, start_col))
        elif text.startswith("?*"):
            if not _GLOBAL_RE.match(text):
                raise LexError(f"malformed global reference {text!r}", filename, start_line, start_col)
            tokens.append(Token("global-ref", text, start_line, start_col, text[2:-1]))
        elif text.startswith("?"):
            if not _VAR_RE.match(text):
                raise LexError(f"malformed variable {text!r}", filename, start_line, start_col)
            tokens.append(Token("variable", text, start_line, start_col, text[1:]))
        else:
            tokens.append(Token("symbol", text, start_line, start_col, text))
    return tokens


# ---------------------------------------------------------------------------
# AST

@dataclass
class ModuleDef:
    name: str
    exports_all: bool = False
    imports: list[str] = field(default_factory=list)


@dataclass
class GlobalDef:
    name: str
    init: Atom = 0  # int or str literal


@dataclass
class ClassSlot:
    name: str
    kind: str  # "integer" | "string"


@dataclass
class ClassDef:
    module: str
    name: str
    slots: list[ClassSlot] = field(default_factory=list)
    concrete: bool = False
    reactive: bool = False

    @property
    def qualified(self) -> str:
        return f"{self.module}::{self.name}"


@dataclass
class Test:
    op: str          # eq | neq | member | gte | lte
    lhs: object      # expression
    rhs: object      # expression, or list of atoms for member


@dataclass
class Pattern:
    head: str
    args: list = field(default_factory=list)  # Atom | Var | WILDCARD
    guard: Test | None = None
    binder: str | None = None  # fact variable bound with `?f <- (...)`


@dataclass
class Focus:
    module: str


@dataclass
class SwitchCase:
    value: Atom
    action: object


@dataclass
class Switch:
    scrutinee: object
    cases: list[SwitchCase] = field(default_factory=list)
    default: object = None


@dataclass
class AssertAction:
    head: str
    args: list = field(default_factory=list)  # expressions


@dataclass
class RetractAction:
    var: str


@dataclass
class BindAction:
    target: str  # global name
    value: object


@dataclass
class SlotAssign:
    slot: str
    value: object


@dataclass
class MakeInstance:
    instance: str
    class_name: str
    slots: list[SlotAssign] = field(default_factory=list)


@dataclass
class AskAction:
    query_id: str


Action = Focus | Switch | AssertAction | RetractAction | BindAction | MakeInstance | AskAction


@dataclass
class RuleDef:
    module: str
    name: str
    salience: int = 0
    patterns: list[Pattern] = field(default_factory=list)
    actions: list = field(default_factory=list)

    @property
    def qualified(self) -> str:
        return f"{self.module}::{self.name}"


@dataclass
class KBAst:
    modules: list[ModuleDef] = field(default_factory=list)
    globals: list[GlobalDef] = field(default_factory=list)
    classes: list[ClassDef] = field(default_factory=list)
    rules: list[RuleDef] = field(default_factory=list)
    # def name -> (file, line); not part of structural equality
    source_map: dict = field(default_factory=dict, compare=False)

    def module_names(self) -> set[str]:
        return {m.name for m in self.modules}

    def global_names(self) -> set[str]:
        return {g.name for g in self.globals}

    def class_by_name(self, name: str) -> ClassDef | None:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def rules_in_module(self, module: str) -> list[RuleDef]:
        return [r for r in self.rules if r.module == module]


# ---------------------------------------------------------------------------
# S-expression reader

@dataclass
class _ListNode:
    items: list
    line: int
    col: int


def _read_forms(tokens: list[Token], filename: str) -> list[_ListNode]:
    forms = []
    pos = 0

    def read(_depth=0):
        nonlocal pos
        tok = tokens[pos]
        if tok.kind == "lparen":
            node = _ListNode([], tok.line, tok.col)
            pos += 1
            while True:
                if pos >= len(tokens):
                    raise ParseError("unbalanced parenthesis", filename, tok.line, tok.col)
                if tokens[pos].kind == "rparen":
                    pos += 1
                    return node
                node.items.append(read(_depth + 1))
        if tok.kind == "rparen":
            raise ParseError("unexpected `)`", filename, tok.line, tok.col)
        pos += 1
        return tok

    while pos < len(tokens):
        tok = tokens[pos]
        if tok.kind != "lparen":
            raise ParseError("expected a top-level `(`", filename, tok.line, tok.col)
        forms.append(read())
    return forms


def _is_sym(node, text: str | None = None) -> bool:
    return (
        isinstance(node, Token)
        and node.kind == "symbol"
        and (text is None or node.text == text)
    )


def _node_pos(node) -> tuple[int, int]:
    return (node.line, node.col)


# ---------------------------------------------------------------------------
# Parser

_TEST_OPS = ("eq", "neq", "member", "gte", "lte")


class _Parser:
    def __init__(self, filename: str):
        self.filename = filename

    def err(self, message: str, node) -> ParseError:
        line, col = _node_pos(node)
        return ParseError(message, self.filename, line, col)

    # -- small pieces -------------------------------------------------------

    def atom(self, node, what: str) -> Atom:
        if isinstance(node, Token):
            if node.kind == "integer":
                return node.value
            if node.kind == "string":
                return node.value
            if node.kind == "symbol":
                return Symbol(node.text)
        raise self.err(f"{what}: expected a literal atom", node)

    def symbol(self, node, what: str) -> str:
        if _is_sym(node):
            return node.text
        raise self.err(f"{what}: expected a symbol", node)

    def qualified_name(self, node, what: str) -> tuple[str, str]:
        text = self.symbol(node, what)
        if "::" not in text:
            raise self.err(f"{what}: expected MODULE::NAME", node)
        module, _, name = text.partition("::")
        if not module or not name:
            raise self.err(f"{what}: expected MODULE::NAME", node)
        return module, name

    def expr(self, node):
        if isinstance(node, Token):
            if node.kind == "integer":
                return node.value
            if node.kind == "string":
                return node.value
            if node.kind == "symbol":
                return Symbol(node.text)
            if node.kind == "variable":
                return Var(node.value)
            if node.kind == "global-ref":
                return GlobalRef(node.value)
            raise self.err("expected an expression", node)
        if node.items and _is_sym(node.items[0], "str-cat"):
            return StrCat(tuple(self.expr(item) for item in node.items[1:]))
        raise self.err("expected an expression (atom, ?var, ?*global* or (str-cat ...))", node)

    # -- top-level defs -----------------------------------------------------

    def defmodule(self, form: _ListNode) -> ModuleDef:
        if len(form.items) < 2:
            raise self.err("defmodule: expected a module name", form)
        mod = ModuleDef(self.symbol(form.items[1], "defmodule"))
        for clause in form.items[2:]:
            if not isinstance(clause, _ListNode) or not clause.items:
                raise self.err("defmodule: expected (export ?ALL) or (import <module> ?ALL)", clause)
            head = clause.items[0]
            if _is_sym(head, "export"):
                if len(clause.items) != 2 or not self._is_all(clause.items[1]):
                    raise self.err("defmodule: expected (export ?ALL)", clause)
                mod.exports_all = True
            elif _is_sym(head, "import"):
                if len(clause.items) != 3 or not self._is_all(clause.items[2]):
                    raise self.err("defmodule: expected (import <module> ?ALL)", clause)
                mod.imports.append(self.symbol(clause.items[1], "import"))
            else:
                raise self.err("defmodule: expected (export ?ALL) or (import <module> ?ALL)", clause)
        return mod

    @staticmethod
    def _is_all(node) -> bool:
        return isinstance(node, Token) and node.kind == "variable" and node.text == "?ALL"

    def defglobal(self, form: _ListNode) -> GlobalDef:
        if (
            len(form.items) != 4
            or not isinstance(form.items[1], Token)
            or form.items[1].kind != "global-ref"
            or not _is_sym(form.items[2], "=")
        ):
            raise self.err("defglobal: expected (defglobal ?*name* = <literal>)", form)
        init = form.items[3]
        if not (isinstance(init, Token) and init.kind in ("integer", "string")):
            raise self.err("defglobal: initializer must be an integer or string literal", form)
        return GlobalDef(form.items[1].value, init.value)

    def defclass(self, form: _ListNode) -> ClassDef:
        if len(form.items) < 3:
            raise self.err("defclass: expected (defclass MODULE::NAME (is-a USER) ...)", form)
        module, name = self.qualified_name(form.items[1], "defclass")
        isa = form.items[2]
        if (
            not isinstance(isa, _ListNode)
            or len(isa.items) != 2
            or not _is_sym(isa.items[0], "is-a")
            or not _is_sym(isa.items[1], "USER")
        ):
            raise self.err("defclass: expected (is-a USER)", form.items[2] if len(form.items) > 2 else form)
        cls = ClassDef(module, name)
        for clause in form.items[3:]:
            if not isinstance(clause, _ListNode) or not clause.items:
                raise self.err("defclass: expected a class option or slot", clause)
            head = clause.items[0]
            if _is_sym(head, "role"):
                if len(clause.items) != 2 or not _is_sym(clause.items[1], "concrete"):
                    raise self.err("defclass: expected (role concrete)", clause)
                cls.concrete = True
            elif _is_sym(head, "pattern-match"):
                if len(clause.items) != 2 or not _is_sym(clause.items[1], "reactive"):
                    raise self.err("defclass: expected (pattern-match reactive)", clause)
                cls.reactive = True
            elif _is_sym(head, "slot"):
                cls.slots.append(self.slot(clause))
            else:
                raise self.err("defclass: unknown class option", clause)
        seen = set()
        for slot in cls.slots:
            if slot.name in seen:
                raise self.err(f"defclass: duplicate slot {slot.name!r}", form)
            seen.add(slot.name)
        return cls

    def slot(self, clause: _ListNode) -> ClassSlot:
        if len(clause.items) < 2:
            raise self.err("slot: expected a slot name", clause)
        name = self.symbol(clause.items[1], "slot")
        kind = None
        for sub in clause.items[2:]:
            if not isinstance(sub, _ListNode) or not sub.items:
                raise self.err("slot: expected (type ...) or (create-accessor read-write)", sub)
            if _is_sym(sub.items[0], "create-accessor"):
                continue  # accepted, carries no semantics
            if _is_sym(sub.items[0], "type"):
                if len(sub.items) != 2:
                    raise self.err("slot: expected (type INTEGER) or (type STRING)", sub)
                tname = self.symbol(sub.items[1], "type")
                if tname == "INTEGER":
                    kind = "integer"
                elif tname == "STRING":
                    kind = "string"
                else:
                    raise self.err("slot: expected (type INTEGER) or (type STRING)", sub)
            else:
                raise self.err("slot: unknown slot facet", sub)
        if kind is None:
            raise self.err("slot: missing (type INTEGER) or (type STRING)", clause)
        return ClassSlot(name, kind)

    def defrule(self, form: _ListNode) -> RuleDef:
        if len(form.items) < 2:
            raise self.err("defrule: expected MODULE::NAME", form)
        name_tok = form.items[1]
        if isinstance(name_tok, Token) and name_tok.kind in ("symbol", "integer"):
            text = name_tok.text
        else:
            raise self.err("defrule: expected MODULE::NAME", name_tok)
        if "::" not in text:
            raise self.err("defrule: expected MODULE::NAME", name_tok)
        module, _, name = text.partition("::")
        if not module or not name:
            raise self.err("defrule: expected MODULE::NAME", name_tok)
        rule = RuleDef(module, name)

        body = form.items[2:]
        idx = 0
        if (
            idx < len(body)
            and isinstance(body[idx], _ListNode)
            and body[idx].items
            and _is_sym(body[idx].items[0], "declare")
        ):
            rule.salience = self.declare(body[idx])
            idx += 1

        # left-hand side until `=>`
        arrow_seen = False
        while idx < len(body):
            node = body[idx]
            if _is_sym(node, "=>"):
                arrow_seen = True
                idx += 1
                break
            if isinstance(node, Token) and node.kind == "variable":
                # `?f <- (pattern)` binds the matched fact
                if (
                    idx + 2 >= len(body) + 1
                    or idx + 2 > len(body)
                    or not _is_sym(body[idx + 1], "<-")
                    or not isinstance(body[idx + 2], _ListNode)
                ):
                    raise self.err("defrule: expected ?var <- (pattern)", node)
                pat = self.pattern(body[idx + 2])
                pat.binder = node.value
                rule.patterns.append(pat)
                idx += 3
                continue
            if isinstance(node, _ListNode) and node.items and _is_sym(node.items[0], "test"):
                if not rule.patterns:
                    raise self.err("defrule: (test ...) must follow a pattern", node)
                if rule.patterns[-1].guard is not None:
                    raise self.err("defrule: pattern already has a (test ...) guard", node)
                rule.patterns[-1].guard = self.test(node)
                idx += 1
                continue
            if isinstance(node, _ListNode):
                rule.patterns.append(self.pattern(node))
                idx += 1
                continue
            raise self.err("defrule: expected a pattern or `=>`", node)
        if not arrow_seen:
            raise self.err("defrule: missing `=>`", form)
        if not rule.patterns:
            raise self.err("defrule: at least one pattern is required", form)
        for node in body[idx:]:
            rule.actions.append(self.action(node))
        return rule

    def declare(self, node: _ListNode) -> int:
        if (
            len(node.items) == 2
            and isinstance(node.items[1], _ListNode)
            and len(node.items[1].items) == 2
            and _is_sym(node.items[1].items[0], "salience")
            and isinstance(node.items[1].items[1], Token)
            and node.items[1].items[1].kind == "integer"
        ):
            return node.items[1].items[1].value
        raise self.err("declare: expected (declare (salience <integer>))", node)

    def pattern(self, node: _ListNode) -> Pattern:
        if not node.items:
            raise self.err("pattern: may not be empty", node)
        head_tok = node.items[0]
        if not _is_sym(head_tok):
            raise self.err("pattern: head must be a plain symbol", head_tok)
        pat = Pattern(head_tok.text)
        for arg in node.items[1:]:
            if isinstance(arg, _ListNode):
                raise self.err("pattern: arguments must be atoms, variables or `?`", arg)
            if arg.kind == "integer" or arg.kind == "string":
                pat.args.append(arg.value)
            elif arg.kind == "symbol":
                pat.args.append(Symbol(arg.text))
            elif arg.kind == "variable":
                pat.args.append(Var(arg.value))
            elif arg.kind == "wildcard":
                pat.args.append(WILDCARD)
            else:
                raise self.err("pattern: arguments must be atoms, variables or `?`", arg)
        return pat

    def test(self, node: _ListNode) -> Test:
        if len(node.items) != 2 or not isinstance(node.items[1], _ListNode):
            raise self.err("test: expected (test (<op> <lhs> <rhs>))", node)
        inner = node.items[1]
        if len(inner.items) != 3:
            raise self.err("test: expected (<op> <lhs> <rhs>)", inner)
        op = self.symbol(inner.items[0], "test")
        if op not in _TEST_OPS:
            raise self.err(f"test: unknown operator {op!r}", inner.items[0])
        lhs = self.expr(inner.items[1])
        rhs_node = inner.items[2]
        if (
            op == "member"
            and isinstance(rhs_node, _ListNode)
            and not (rhs_node.items and _is_sym(rhs_node.items[0], "str-cat"))
        ):
            rhs = [self.atom(item, "member") for item in rhs_node.items]
        else:
            rhs = self.expr(rhs_node)
        return Test(op, lhs, rhs)

    def action(self, node):
        if not isinstance(node, _ListNode) or not node.items:
            raise self.err("expected an action", node)
        head = node.items[0]
        if _is_sym(head, "focus"):
            if len(node.items) != 2:
                raise self.err("focus: expected (focus <module>)", node)
            return Focus(self.symbol(node.items[1], "focus"))
        if _is_sym(head, "switch"):
            return self.switch(node)
        if _is_sym(head, "assert"):
            if len(node.items) != 2 or not isinstance(node.items[1], _ListNode):
                raise self.err("assert: expected (assert (<head> <args>...))", node)
            inner = node.items[1]
            if not inner.items:
                raise self.err("assert: fact may not be empty", inner)
            fact_head = self.symbol(inner.items[0], "assert")
            return AssertAction(fact_head, [self.expr(a) for a in inner.items[1:]])
        if _is_sym(head, "retract"):
            if (
                len(node.items) != 2
                or not isinstance(node.items[1], Token)
                or node.items[1].kind != "variable"
            ):
                raise self.err("retract: expected (retract ?var)", node)
            return RetractAction(node.items[1].value)
        if _is_sym(head, "bind"):
            if (
                len(node.items) != 3
                or not isinstance(node.items[1], Token)
                or node.items[1].kind != "global-ref"
            ):
                raise self.err("bind: expected (bind ?*global* <expr>)", node)
            return BindAction(node.items[1].value, self.expr(node.items[2]))
        if _is_sym(head, "make-instance"):
            return self.make_instance(node)
        if _is_sym(head, "ask"):
            if len(node.items) != 2:
                raise self.err("ask: expected (ask <query-id>)", node)
            return AskAction(self.symbol(node.items[1], "ask"))
        raise self.err("unknown action", head)

    def switch(self, node: _ListNode) -> Switch:
        if len(node.items) < 2:
            raise self.err("switch: expected (switch <expr> (case ...)...)", node)
        sw = Switch(self.expr(node.items[1]))
        for i, clause in enumerate(node.items[2:]):
            if not isinstance(clause, _ListNode) or not clause.items:
                raise self.err("switch: expected (case <atom> then <action>) or (default <action>)", clause)
            if _is_sym(clause.items[0], "case"):
                if sw.default is not None:
                    raise self.err("switch: (default ...) must be the last clause", clause)
                if len(clause.items) != 4 or not _is_sym(clause.items[2], "then"):
                    raise self.err("switch: expected (case <atom> then <action>)", clause)
                value = self.atom(clause.items[1], "case")
                sw.cases.append(SwitchCase(value, self.action(clause.items[3])))
            elif _is_sym(clause.items[0], "default"):
                if sw.default is not None:
                    raise self.err("switch: multiple (default ...) clauses", clause)
                if len(clause.items) != 2:
                    raise self.err("switch: expected (default <action>)", clause)
                sw.default = self.action(clause.items[1])
            else:
                raise self.err("switch: expected (case ...) or (default ...)", clause)
        return sw

    def make_instance(self, node: _ListNode) -> MakeInstance:
        if (
            len(node.items) < 4
            or not _is_sym(node.items[2], "of")
        ):
            raise self.err("make-instance: expected (make-instance <name> of <class> (slot <expr>)...)", node)
        inst = self.symbol(node.items[1], "make-instance")
        cls = self.symbol(node.items[3], "make-instance")
        mi = MakeInstance(inst, cls)
        for clause in node.items[4:]:
            if not isinstance(clause, _ListNode) or len(clause.items) != 2:
                raise self.err("make-instance: expected (slot-name <expr>)", clause)
            slot = self.symbol(clause.items[0], "make-instance")
            mi.slots.append(SlotAssign(slot, self.expr(clause.items[1])))
        return mi


def parse_kb(source: str, filename: str = "<kb>") -> KBAst:
    """Parse ARL source into a KBAst.

    Definitions are returned in source order.  Duplicate module, global,
    class or rule names raise ParseError with the position of the second
    definition.
    """
    tokens = tokenize(source, filename)
    forms = _read_forms(tokens, filename)
    parser = _Parser(filename)
    ast = KBAst()
    seen: dict[tuple[str, str], tuple[str, int]] = {}
    for form in forms:
        if not form.items or not _is_sym(form.items[0]):
            raise parser.err("expected a definition form", form)
        head = form.items[0].text
        if head == "defmodule":
            d = parser.defmodule(form)
            _record(ast, parser, seen, d.name, form, "module")
            ast.modules.append(d)
        elif head == "defglobal":
            d = parser.defglobal(form)
            _record(ast, parser, seen, d.name, form, "global")
            ast.globals.append(d)
        elif head == "defclass":
            d = parser.defclass(form)
            _record(ast, parser, seen, d.qualified, form, "class")
            ast.classes.append(d)
        elif head == "defrule":
            d = parser.defrule(form)
            _record(ast, parser, seen, d.qualified, form, "rule")
            ast.rules.append(d)
        else:
            raise parser.err(f"unknown top-level form {head!r}", form.items[0])
    return ast


def _record(ast: KBAst, parser: _Parser, seen: dict, key: str, form: _ListNode, what: str):
    # names are unique per definition kind; source_map is a flat lookup of
    # def name -> position for diagnostics
    if (what, key) in seen:
        raise parser.err(f"duplicate {what} {key!r}", form)
    seen[(what, key)] = (parser.filename, form.line)
    ast.source_map[key] = (parser.filename, form.line)


def _kind_keys(ast: KBAst):
    for mod in ast.modules:
        yield ("module", mod.name)
    for glob in ast.globals:
        yield ("global", glob.name)
    for cls in ast.classes:
        yield ("class", cls.qualified)
    for rule in ast.rules:
        yield ("rule", rule.qualified)


def merge_kbs(asts: list[KBAst]) -> KBAst:
    """Merge per-file ASTs into one knowledge base, re-checking uniqueness."""
    merged = KBAst()
    seen: dict[tuple[str, str], tuple[str, int]] = {}
    for ast in asts:
        for kind_key in _kind_keys(ast):
            loc = ast.source_map.get(kind_key[1], ("<kb>", 0))
            if kind_key in seen:
                prev = seen[kind_key]
                raise ParseError(
                    f"duplicate definition {kind_key[1]!r} (first defined at {prev[0]}:{prev[1]})",
                    loc[0], loc[1], 0,
                )
            seen[kind_key] = loc
        for key, loc in ast.source_map.items():
            merged.source_map[key] = loc
        merged.modules.extend(ast.modules)
        merged.globals.extend(ast.globals)
        merged.classes.extend(ast.classes)
        merged.rules.extend(ast.rules)
    return merged


# ---------------------------------------------------------------------------
# Renderer

def render_atom(value) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not ARL atoms")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, Symbol):
        return value.name
    raise TypeError(f"not an atom: {value!r}")


def render_term(value) -> str:
    """Render a pattern argument or expression."""
    if value is WILDCARD:
        return "?"
    if isinstance(value, Var):
        return f"?{value.name}"
    if isinstance(value, GlobalRef):
        return f"?*{value.name}*"
    if isinstance(value, StrCat):
        return "(str-cat " + " ".join(render_term(p) for p in value.parts) + ")" \
            if value.parts else "(str-cat)"
    return render_atom(value)


def _render_test(test: Test) -> str:
    if isinstance(test.rhs, list):
        rhs = "(" + " ".join(render_atom(a) for a in test.rhs) + ")"
    else:
        rhs = render_term(test.rhs)
    return f"(test ({test.op} {render_term(test.lhs)} {rhs}))"


def _render_action(action, indent: str) -> str:
    if isinstance(action, Focus):
        return f"(focus {action.module})"
    if isinstance(action, AssertAction):
        inner = " ".join([action.head] + [render_term(a) for a in action.args])
        return f"(assert ({inner}))"
    if isinstance(action, RetractAction):
        return f"(retract ?{action.var})"
    if isinstance(action, BindAction):
        return f"(bind ?*{action.target}* {render_term(action.value)})"
    if isinstance(action, AskAction):
        return f"(ask {action.query_id})"
    if isinstance(action, Switch):
        lines = [f"(switch {render_term(action.scrutinee)}"]
        sub = indent + "  "
        for case in action.cases:
            lines.append(f"{sub}(case {render_atom(case.value)} then {_render_action(case.action, sub)})")
        if action.default is not None:
            lines.append(f"{sub}(default {_render_action(action.default, sub)})")
        return "\n".join(lines) + ")"
    if isinstance(action, MakeInstance):
        lines = [f"(make-instance {action.instance} of {action.class_name}"]
        sub = indent + "  "
        for assign in action.slots:
            lines.append(f"{sub}({assign.slot} {render_term(assign.value)})")
        return "\n".join(lines) + ")"
    raise TypeError(f"not an action: {action!r}")


def _render_pattern(pat: Pattern) -> str:
    inner = " ".join([pat.head] + [render_term(a) for a in pat.args])
    text = f"({inner})"
    if pat.binder is not None:
        text = f"?{pat.binder} <- {text}"
    return text


def render(ast: KBAst) -> str:
    """Render a KBAst as canonical ARL text; parse_kb(render(ast)) == ast."""
    chunks: list[str] = []
    for mod in ast.modules:
        parts = [f"(defmodule {mod.name}"]
        for imp in mod.imports:
            parts.append(f"(import {imp} ?ALL)")
        if mod.exports_all:
            parts.append("(export ?ALL)")
        chunks.append(" ".join(parts) + ")")
    for glob in ast.globals:
        chunks.append(f"(defglobal ?*{glob.name}* = {render_atom(glob.init)})")
    for cls in ast.classes:
        lines = [f"(defclass {cls.qualified} (is-a USER)"]
        if cls.concrete:
            lines.append("  (role concrete)")
        if cls.reactive:
            lines.append("  (pattern-match reactive)")
        for slot in cls.slots:
            lines.append(f"  (slot {slot.name} (type {slot.kind.upper()}))")
        chunks.append("\n".join(lines) + ")")
    for rule in ast.rules:
        lines = [f"(defrule {rule.qualified}"]
        if rule.salience != 0:
            lines.append(f"  (declare (salience {rule.salience}))")
        for pat in rule.patterns:
            lines.append("  " + _render_pattern(pat))
            if pat.guard is not None:
                lines.append("  " + _render_test(pat.guard))
        lines.append("  =>")
        for action in rule.actions:
            lines.append("  " + _render_action(action, "  "))
        chunks.append("\n".join(lines) + ")")
    if not chunks:
        return ""
    return "\n\n".join(chunks) + "\n"
