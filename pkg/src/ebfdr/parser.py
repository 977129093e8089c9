"""Reader and canonical printer for the ``.ebm`` machine language.

Example::

    machine m0
    variables
      stock : int 0..3;
      coin : int 0..3;
    init
      stock := 3;
      coin := 0;
    events
      vend =^= when coin > 0 /\\ stock > 0
        then stock := stock - 1 || coin := coin - 1 end
    end

Bare identifiers are resolved after parsing: parameters first, then
variables, then enumeration constants. When an identifier is compared with
(or assigned to) something of enumeration type and names one of that
enumeration's constants, the constant wins, so a variable ``soda`` and a
constant ``soda`` can coexist.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .model import (
    Arith, Assignment, BoolDomain, BoolOp, Compare, Domain, EnumDomain,
    EventDef, Expr, IntRange, Lit, Machine, Member, ParamDecl, ParamRef,
    RefinesClause, SourceSpan, SpecificationError, TRUE, VarDecl, VarRef,
    validate_machine,
)

KEYWORDS = {
    "machine", "refines", "variables", "invariant", "init", "events", "end",
    "when", "any", "where", "then", "with", "int", "enum", "bool", "true",
    "false", "not", "in", "internal",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>=\^=|:=|\.\.|/\\|\\/|=>|/=|<=|>=|\|\||[=<>+\-*(){},;:])
    """,
    re.VERBOSE,
)


class ParseError(SpecificationError):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.message = message
        self.span = span


@dataclass(frozen=True)
class Token:
    kind: str  # 'int', 'ident', 'kw', 'sym', 'eof'
    text: str
    span: SourceSpan


def tokenize(text: str, filename: str = "<string>") -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}",
                             SourceSpan(filename, line, pos - line_start + 1, 1))
        kind, lexeme = m.lastgroup, m.group()
        span = SourceSpan(filename, line, pos - line_start + 1, len(lexeme))
        if kind == "ident" and lexeme in KEYWORDS:
            kind = "kw"
        if kind not in ("ws", "comment"):
            toks.append(Token(kind, lexeme, span))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            line_start = pos + lexeme.rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", SourceSpan(filename, line, pos - line_start + 1, 0)))
    return toks


@dataclass(frozen=True)
class _Name:
    """Unresolved identifier; replaced during resolution."""

    name: str
    span: SourceSpan | None = None


class _Parser:
    def __init__(self, text: str, filename: str):
        self.toks = tokenize(text, filename)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("kw", "sym") and t.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            self.fail(f"'{text}'")
        return t

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "ident":
            self.fail("identifier")
        self.i += 1
        return t

    def fail(self, expected: str):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"expected {expected}, found {found}", t.span)

    def integer(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "int":
            self.fail("integer")
        self.i += 1
        return -int(t.text) if neg else int(t.text)

    # grammar
    def machine(self) -> Machine:
        start = self.expect("machine").span
        name = self.ident().text
        refines = self.ident().text if self.accept("refines") else None

        self.expect("variables")
        variables: list[VarDecl] = []
        if self.tok.kind != "ident":
            self.fail("variable declaration")
        while self.tok.kind == "ident":
            t = self.ident()
            if any(v.name == t.text for v in variables):
                raise ParseError(f"duplicate variable {t.text}", t.span)
            self.expect(":")
            variables.append(VarDecl(t.text, self.domain(), span=t.span))
            self.expect(";")
        var_scope = {v.name: v.domain for v in variables}

        invariant = None
        if self.accept("invariant"):
            invariant = _resolve(self.expr(), var_scope, {})

        self.expect("init")
        init: list[Assignment] = []
        while self.tok.kind == "ident":
            t = self.ident()
            self.expect(":=")
            rhs = self.expr()
            init.append(Assignment(t.text, _resolve(rhs, var_scope, {}, var_scope.get(t.text)), span=t.span))
            self.expect(";")

        self.expect("events")
        events: list[EventDef] = []
        while self.tok.kind == "ident":
            ev = self.event(var_scope)
            if any(e.name == ev.name for e in events):
                raise ParseError(f"duplicate event {ev.name}", ev.span)
            events.append(ev)
        self.expect("end")
        if self.tok.kind != "eof":
            self.fail("end of input")
        return Machine(name, tuple(variables), tuple(init), tuple(events),
                       invariant, refines, span=start)

    def domain(self) -> Domain:
        if self.accept("int"):
            lo = self.integer()
            self.expect("..")
            return IntRange(lo, self.integer())
        if self.accept("enum"):
            self.expect("{")
            names = [self.ident().text]
            while self.accept(","):
                names.append(self.ident().text)
            self.expect("}")
            return EnumDomain(tuple(names))
        if self.accept("bool"):
            return BoolDomain()
        self.fail("domain (int lo..hi, enum {...} or bool)")

    def event(self, var_scope: dict[str, Domain]) -> EventDef:
        head = self.ident()
        refines = None
        raw_witnesses: list[tuple[Token, object]] = []
        if t := self.accept("refines"):
            target = self.ident().text
            if self.accept("with"):
                while True:
                    w = self.ident()
                    self.expect(":=")
                    raw_witnesses.append((w, self.expr()))
                    if not self.accept(","):
                        break
            refines = (target, t.span)
        self.expect("=^=")

        params: list[ParamDecl] = []
        if self.accept("any"):
            while True:
                internal = self.accept("internal") is not None
                p = self.ident()
                if any(q.name == p.text for q in params):
                    raise ParseError(f"duplicate parameter {p.text}", p.span)
                self.expect(":")
                params.append(ParamDecl(p.text, self.domain(), internal, span=p.span))
                if not self.accept(","):
                    break
            self.expect("where")
            guard = self.expr()
        elif self.accept("when"):
            guard = self.expr()
        else:
            guard = TRUE
        param_scope = {p.name: p.domain for p in params}
        guard = _resolve(guard, var_scope, param_scope)

        self.expect("then")
        actions: list[Assignment] = []
        while self.tok.kind == "ident":
            t = self.ident()
            self.expect(":=")
            rhs = _resolve(self.expr(), var_scope, param_scope, var_scope.get(t.text))
            actions.append(Assignment(t.text, rhs, span=t.span))
            if not self.accept("||"):
                break
        self.expect("end")

        clause = None
        if refines is not None:
            witnesses = tuple(
                Assignment(w.text, _resolve(e, var_scope, param_scope), span=w.span)
                for w, e in raw_witnesses
            )
            clause = RefinesClause(refines[0], witnesses, span=refines[1])
        return EventDef(head.text, tuple(params), guard, tuple(actions), clause, span=head.span)

    # expressions, lowest precedence first
    def expr(self):
        left = self.disj()
        if t := self.accept("=>"):
            return BoolOp("=>", (left, self.expr()), span=t.span)
        return left

    def disj(self):
        first = self.conj()
        parts = [first]
        while self.accept("\\/"):
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else BoolOp("or", tuple(parts), span=_span_of(first))

    def conj(self):
        first = self.negation()
        parts = [first]
        while self.accept("/\\"):
            parts.append(self.negation())
        return parts[0] if len(parts) == 1 else BoolOp("and", tuple(parts), span=_span_of(first))

    def negation(self):
        if t := self.accept("not"):
            return BoolOp("not", (self.negation(),), span=t.span)
        return self.comparison()

    def comparison(self):
        left = self.sum()
        for op in ("=", "/=", "<=", ">=", "<", ">"):
            if t := self.accept(op):
                return Compare(op, left, self.sum(), span=t.span)
        if t := self.accept("in"):
            self.expect("{")
            values = [self.literal()]
            while self.accept(","):
                values.append(self.literal())
            self.expect("}")
            return Member(left, tuple(values), span=t.span)
        return left

    def literal(self):
        t = self.tok
        if t.kind == "int" or self.at("-"):
            return self.integer()
        if self.accept("true"):
            return True
        if self.accept("false"):
            return False
        return self.ident().text

    def sum(self):
        left = self.term()
        while True:
            t = self.accept("+") or self.accept("-")
            if t is None:
                return left
            left = Arith(t.text, left, self.term(), span=t.span)

    def term(self):
        left = self.atom()
        while t := self.accept("*"):
            left = Arith("*", left, self.atom(), span=t.span)
        return left

    def atom(self):
        t = self.tok
        if t.kind == "int" or self.at("-"):
            return Lit(self.integer(), span=t.span)
        if self.accept("true"):
            return Lit(True, span=t.span)
        if self.accept("false"):
            return Lit(False, span=t.span)
        if t.kind == "ident":
            self.i += 1
            return _Name(t.text, t.span)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.fail("expression")


def _span_of(e) -> SourceSpan | None:
    return getattr(e, "span", None)


def _resolve(e, variables: dict[str, Domain], params: dict[str, Domain], hint: Domain | None = None) -> Expr:
    match e:
        case _Name(name=n, span=sp):
            if isinstance(hint, EnumDomain) and n in hint.constants:
                return Lit(n, span=sp)
            if n in params:
                return ParamRef(n, span=sp)
            if n in variables:
                return VarRef(n, span=sp)
            return Lit(n, span=sp)
        case Compare(op=op, left=l, right=r, span=sp) if op in ("=", "/="):
            left = _resolve(l, variables, params)
            right = _resolve(r, variables, params, _enum_domain(left, variables, params))
            if isinstance(l, _Name):
                left = _resolve(l, variables, params, _enum_domain(right, variables, params))
            return Compare(op, left, right, span=sp)
        case Compare(op=op, left=l, right=r, span=sp):
            return Compare(op, _resolve(l, variables, params), _resolve(r, variables, params), span=sp)
        case Arith(op=op, left=l, right=r, span=sp):
            return Arith(op, _resolve(l, variables, params), _resolve(r, variables, params), span=sp)
        case BoolOp(op=op, operands=xs, span=sp):
            return BoolOp(op, tuple(_resolve(x, variables, params) for x in xs), span=sp)
        case Member(subject=s, values=vs, span=sp):
            return Member(_resolve(s, variables, params), vs, span=sp)
    return e


def _enum_domain(e: Expr, variables, params) -> Domain | None:
    if isinstance(e, VarRef):
        d = variables.get(e.name)
    elif isinstance(e, ParamRef):
        d = params.get(e.name)
    else:
        return None
    return d if isinstance(d, EnumDomain) else None


def parse_machine(text: str, filename: str = "<string>") -> Machine:
    """Parse ``.ebm`` source text; raises :class:`ParseError` on bad input."""
    try:
        return _Parser(text, filename).machine()
    except RecursionError:
        raise ParseError("expression nested too deeply", SourceSpan(filename, 1, 1, 0)) from None


def load_machine(path: str | Path) -> Machine:
    """Parse and validate a machine file; raise on the first problem."""
    path = Path(path)
    m = parse_machine(path.read_text(encoding="utf-8"), str(path))
    problems = validate_machine(m)
    if problems:
        raise SpecificationError("\n".join(str(d) for d in problems))
    return m


# -- printing ----------------------------------------------------------------

_PREC = {"=>": 1, "or": 2, "and": 3, "not": 4}
_SYM = {"and": " /\\ ", "or": " \\/ ", "=>": " => "}


def _fmt_value(v) -> str:
    if v is True:
        return "true"
    if v is False:
        return "false"
    return str(v)


def _fmt(e: Expr) -> tuple[str, int]:
    match e:
        case Lit(value=v):
            return _fmt_value(v), 8
        case VarRef(name=n) | ParamRef(name=n):
            return n, 8
        case Arith(op=op, left=l, right=r):
            prec = 7 if op == "*" else 6
            return f"{_wrap(l, prec - 1)} {op} {_wrap(r, prec)}", prec
        case Compare(op=op, left=l, right=r):
            return f"{_wrap(l, 5)} {op} {_wrap(r, 5)}", 5
        case Member(subject=s, values=vs):
            return f"{_wrap(s, 5)} in {{{', '.join(_fmt_value(v) for v in vs)}}}", 5
        case BoolOp(op="not", operands=(x,)):
            return f"not {_wrap(x, 3)}", 4
        case BoolOp(op="=>", operands=(a, b)):
            return f"{_wrap(a, 1)} => {_wrap(b, 0)}", 1
        case BoolOp(op=op, operands=xs):
            prec = _PREC[op]
            return _SYM[op].join(_wrap(x, prec) for x in xs), prec
    raise TypeError(f"not an expression: {e!r}")


def _wrap(e: Expr, limit: int) -> str:
    """Render ``e``, parenthesised unless it binds tighter than ``limit``."""
    text, prec = _fmt(e)
    return f"({text})" if prec <= limit else text


def format_expr(e: Expr) -> str:
    return _fmt(e)[0]


def format_domain(d: Domain) -> str:
    if isinstance(d, IntRange):
        return f"int {d.lo}..{d.hi}"
    if isinstance(d, EnumDomain):
        return f"enum {{{', '.join(d.constants)}}}"
    return "bool"


def pretty_print(m: Machine) -> str:
    lines = [f"machine {m.name}" + (f" refines {m.refines}" if m.refines else ""), "variables"]
    lines += [f"  {v.name} : {format_domain(v.domain)};" for v in m.variables]
    if m.invariant is not None:
        lines += ["invariant", f"  {format_expr(m.invariant)}"]
    lines.append("init")
    lines += [f"  {a.target} := {format_expr(a.expr)};" for a in m.init]
    lines.append("events")
    for ev in m.events:
        head = f"  {ev.name}"
        if ev.refines is not None:
            head += f" refines {ev.refines.abstract_event}"
            if ev.refines.witnesses:
                head += " with " + ", ".join(f"{w.target} := {format_expr(w.expr)}" for w in ev.refines.witnesses)
        lines.append(head + " =^=")
        if ev.params:
            decls = ", ".join(
                ("internal " if p.internal else "") + f"{p.name} : {format_domain(p.domain)}" for p in ev.params
            )
            lines.append(f"    any {decls} where")
        else:
            lines.append("    when")
        lines.append(f"      {format_expr(ev.guard)}")
        lines.append("    then")
        acts = [f"      {a.target} := {format_expr(a.expr)}" for a in ev.actions]
        if acts:
            lines.append(" ||\n".join(acts))
        lines.append("    end")
    lines.append("end")
    return "\n".join(lines) + "\n"
