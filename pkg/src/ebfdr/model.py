"""Guarded-event machines: domains, expressions, events and refinement links.

Machines are immutable values. Every AST node carries an optional source span
that is excluded from equality, so a parsed machine and its re-parsed
pretty-printed form compare equal.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence, Union

Value = Union[int, bool, str]


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 0

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


def _span():
    return field(default=None, compare=False, repr=False)


# -- domains -----------------------------------------------------------------

@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    kind = "int"

    def values(self) -> tuple[int, ...]:
        return tuple(range(self.lo, self.hi + 1))

    def __contains__(self, v: object) -> bool:
        return type(v) is int and self.lo <= v <= self.hi


@dataclass(frozen=True)
class EnumDomain:
    constants: tuple[str, ...]

    kind = "enum"

    def values(self) -> tuple[str, ...]:
        return self.constants

    def __contains__(self, v: object) -> bool:
        return isinstance(v, str) and v in self.constants


@dataclass(frozen=True)
class BoolDomain:
    kind = "bool"

    def values(self) -> tuple[bool, ...]:
        return (False, True)

    def __contains__(self, v: object) -> bool:
        return type(v) is bool


Domain = Union[IntRange, EnumDomain, BoolDomain]


def domain_errors(d: Domain) -> list[str]:
    if isinstance(d, IntRange) and d.lo > d.hi:
        return [f"empty integer range {d.lo}..{d.hi}"]
    if isinstance(d, EnumDomain):
        if not d.constants:
            return ["enumeration needs at least one constant"]
        if len(set(d.constants)) != len(d.constants):
            return ["duplicate enumeration constant"]
    return []


def value_type(v: Value) -> str:
    if type(v) is bool:
        return "bool"
    if type(v) is int:
        return "int"
    return "enum"


# -- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: Value
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class VarRef:
    name: str
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class ParamRef:
    name: str
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class Arith:
    op: str  # '+', '-', '*'
    left: Expr
    right: Expr
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class Compare:
    op: str  # '=', '/=', '<', '<=', '>', '>='
    left: Expr
    right: Expr
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class BoolOp:
    op: str  # 'and', 'or', 'not', '=>'
    operands: tuple[Expr, ...]
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class Member:
    subject: Expr
    values: tuple[Value, ...]
    span: SourceSpan | None = _span()


Expr = Union[Lit, VarRef, ParamRef, Arith, Compare, BoolOp, Member]

TRUE = Lit(True)

ARITH_OPS: dict[str, Callable[[int, int], int]] = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
}
COMPARE_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "=": operator.eq, "/=": operator.ne, "<": operator.lt,
    "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}


def conj(*parts: Expr) -> Expr:
    parts = tuple(p for p in parts if p != TRUE)
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return BoolOp("and", parts)


# -- declarations ------------------------------------------------------------

@dataclass(frozen=True)
class ParamDecl:
    """An event parameter.

    Internal parameters are resolved by the event like ordinary ones but do
    not appear in the transition label; they model a nondeterministic choice
    that an observer cannot distinguish.
    """

    name: str
    domain: Domain
    internal: bool = False
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class Assignment:
    target: str
    expr: Expr
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class RefinesClause:
    abstract_event: str
    witnesses: tuple[Assignment, ...] = ()
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class EventDef:
    name: str
    params: tuple[ParamDecl, ...] = ()
    guard: Expr = TRUE
    actions: tuple[Assignment, ...] = ()
    refines: RefinesClause | None = None
    span: SourceSpan | None = _span()

    @property
    def visible_params(self) -> tuple[ParamDecl, ...]:
        return tuple(p for p in self.params if not p.internal)

    def param(self, name: str) -> ParamDecl | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class VarDecl:
    name: str
    domain: Domain
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class Machine:
    name: str
    variables: tuple[VarDecl, ...]
    init: tuple[Assignment, ...]
    events: tuple[EventDef, ...] = ()
    invariant: Expr | None = None
    refines: str | None = None
    span: SourceSpan | None = _span()

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def var_domain(self, name: str) -> Domain | None:
        for v in self.variables:
            if v.name == name:
                return v.domain
        return None

    def event(self, name: str) -> EventDef:
        for e in self.events:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def new_events(self) -> frozenset[str]:
        """Events that refine the invisible skip (no refines clause)."""
        if self.refines is None:
            return frozenset()
        return frozenset(e.name for e in self.events if e.refines is None)


# -- evaluation --------------------------------------------------------------

class SpecificationError(Exception):
    """A machine is ill-formed (unbound name, type mismatch, bad link...)."""


def eval_expr(e: Expr, state: Mapping[str, Value], params: Mapping[str, Value]) -> Value:
    """Evaluate ``e`` by direct interpretation of the tree."""
    match e:
        case Lit(value=v):
            return v
        case VarRef(name=n):
            if n not in state:
                raise SpecificationError(f"unbound variable {n}")
            return state[n]
        case ParamRef(name=n):
            if n not in params:
                raise SpecificationError(f"unbound parameter {n}")
            return params[n]
        case Arith(op=op, left=l, right=r):
            a, b = eval_expr(l, state, params), eval_expr(r, state, params)
            if type(a) is not int or type(b) is not int:
                raise SpecificationError(f"arithmetic on non-integers in {op}")
            return ARITH_OPS[op](a, b)
        case Compare(op=op, left=l, right=r):
            a, b = eval_expr(l, state, params), eval_expr(r, state, params)
            if value_type(a) != value_type(b):
                raise SpecificationError(f"comparison of {value_type(a)} with {value_type(b)}")
            return COMPARE_OPS[op](a, b)
        case BoolOp(op="not", operands=(x,)):
            return not _bool(eval_expr(x, state, params))
        case BoolOp(op="and", operands=xs):
            return all(_bool(eval_expr(x, state, params)) for x in xs)
        case BoolOp(op="or", operands=xs):
            return any(_bool(eval_expr(x, state, params)) for x in xs)
        case BoolOp(op="=>", operands=(a, b)):
            return (not _bool(eval_expr(a, state, params))) or _bool(eval_expr(b, state, params))
        case Member(subject=s, values=vs):
            v = eval_expr(s, state, params)
            return any(value_type(v) == value_type(w) and v == w for w in vs)
    raise SpecificationError(f"malformed expression {e!r}")


def _bool(v: Value) -> bool:
    if type(v) is not bool:
        raise SpecificationError(f"expected boolean, got {v!r}")
    return v


def compile_expr(
    e: Expr, var_index: Mapping[str, int], param_index: Mapping[str, int]
) -> Callable[[Sequence[Value], Sequence[Value]], Any]:
    """Compile ``e`` to a closure over positional state and parameter tuples.

    The machine must have been validated: no type checks happen here.
    """
    match e:
        case Lit(value=v):
            return lambda s, p: v
        case VarRef(name=n):
            i = var_index[n]
            return lambda s, p: s[i]
        case ParamRef(name=n):
            i = param_index[n]
            return lambda s, p: p[i]
        case Arith(op=op, left=l, right=r):
            f, a, b = ARITH_OPS[op], compile_expr(l, var_index, param_index), compile_expr(r, var_index, param_index)
            return lambda s, p: f(a(s, p), b(s, p))
        case Compare(op=op, left=l, right=r):
            f, a, b = COMPARE_OPS[op], compile_expr(l, var_index, param_index), compile_expr(r, var_index, param_index)
            return lambda s, p: f(a(s, p), b(s, p))
        case BoolOp(op="not", operands=(x,)):
            a = compile_expr(x, var_index, param_index)
            return lambda s, p: not a(s, p)
        case BoolOp(op="and", operands=xs):
            fs = [compile_expr(x, var_index, param_index) for x in xs]
            return lambda s, p: all(f(s, p) for f in fs)
        case BoolOp(op="or", operands=xs):
            fs = [compile_expr(x, var_index, param_index) for x in xs]
            return lambda s, p: any(f(s, p) for f in fs)
        case BoolOp(op="=>", operands=(x, y)):
            a, b = compile_expr(x, var_index, param_index), compile_expr(y, var_index, param_index)
            return lambda s, p: (not a(s, p)) or b(s, p)
        case Member(subject=x, values=vs):
            a = compile_expr(x, var_index, param_index)
            # bool/int aliasing (True == 1) cannot arise: validation types the set
            vset = frozenset(vs)
            return lambda s, p: a(s, p) in vset
    raise SpecificationError(f"malformed expression {e!r}")


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    message: str
    span: SourceSpan | None = None

    def __str__(self) -> str:
        return f"{self.span}: {self.message}" if self.span else self.message


class _Typer:
    def __init__(self, machine: Machine, event: EventDef | None, out: list[Diagnostic]):
        self.vars = {v.name: v.domain for v in machine.variables}
        self.params = {p.name: p.domain for p in event.params} if event else {}
        self.constants = enum_constants(machine)
        self.out = out

    def err(self, msg: str, node) -> None:
        self.out.append(Diagnostic(msg, getattr(node, "span", None)))

    def type_of(self, e: Expr) -> str | None:
        match e:
            case Lit(value=v):
                if isinstance(v, str) and v not in self.constants:
                    self.err(f"unknown identifier {v}", e)
                    return None
                return value_type(v)
            case VarRef(name=n):
                if n not in self.vars:
                    self.err(f"unknown variable {n}", e)
                    return None
                return self.vars[n].kind
            case ParamRef(name=n):
                if n not in self.params:
                    self.err(f"unknown parameter {n}", e)
                    return None
                return self.params[n].kind
            case Arith(op=op, left=l, right=r):
                for side in (l, r):
                    t = self.type_of(side)
                    if t not in (None, "int"):
                        self.err(f"operand of {op} must be int, got {t}", side)
                return "int"
            case Compare(op=op, left=l, right=r):
                a, b = self.type_of(l), self.type_of(r)
                if a and b and a != b:
                    self.err(f"cannot compare {a} with {b}", e)
                elif op not in ("=", "/=") and a not in (None, "int"):
                    self.err(f"ordering comparison {op} on {a}", e)
                return "bool"
            case BoolOp(op=op, operands=xs):
                for x in xs:
                    t = self.type_of(x)
                    if t not in (None, "bool"):
                        self.err(f"operand of {op} must be bool, got {t}", x)
                return "bool"
            case Member(subject=s, values=vs):
                t = self.type_of(s)
                for v in vs:
                    if t and value_type(v) != t:
                        self.err(f"set element {v!r} is not {t}", e)
                    if isinstance(v, str) and v not in self.constants:
                        self.err(f"unknown identifier {v}", e)
                return "bool"
        self.err(f"malformed expression {e!r}", e)
        return None


def enum_constants(machine: Machine) -> frozenset[str]:
    out: set[str] = set()
    for v in machine.variables:
        if isinstance(v.domain, EnumDomain):
            out.update(v.domain.constants)
    for ev in machine.events:
        for p in ev.params:
            if isinstance(p.domain, EnumDomain):
                out.update(p.domain.constants)
    return frozenset(out)


def free_refs(e: Expr) -> set[Expr]:
    match e:
        case VarRef() | ParamRef():
            return {e}
        case Arith(left=l, right=r) | Compare(left=l, right=r):
            return free_refs(l) | free_refs(r)
        case BoolOp(operands=xs):
            return set().union(*(free_refs(x) for x in xs))
        case Member(subject=s):
            return free_refs(s)
    return set()


def _check_assignment_type(typer: _Typer, a: Assignment, dom: Domain) -> None:
    t = typer.type_of(a.expr)
    if t and t != dom.kind:
        typer.err(f"cannot assign {t} to {a.target} of type {dom.kind}", a)


def validate_machine(m: Machine) -> list[Diagnostic]:
    """Return one diagnostic per violated well-formedness rule; [] if valid."""
    out: list[Diagnostic] = []
    seen_vars: set[str] = set()
    for v in m.variables:
        if v.name in seen_vars:
            out.append(Diagnostic(f"duplicate variable {v.name}", v.span))
        seen_vars.add(v.name)
        out.extend(Diagnostic(f"{v.name}: {msg}", v.span) for msg in domain_errors(v.domain))
    if not m.variables:
        out.append(Diagnostic("machine declares no variables", m.span))

    typer = _Typer(m, None, out)
    if m.invariant is not None:
        if typer.type_of(m.invariant) not in (None, "bool"):
            out.append(Diagnostic("invariant is not boolean", m.invariant.span))
        for r in free_refs(m.invariant):
            if isinstance(r, ParamRef):
                out.append(Diagnostic(f"invariant references parameter {r.name}", r.span))

    init_targets = [a.target for a in m.init]
    for a in m.init:
        dom = m.var_domain(a.target)
        if dom is None:
            out.append(Diagnostic(f"unknown assignment target {a.target}", a.span))
            continue
        if init_targets.count(a.target) > 1:
            out.append(Diagnostic(f"{a.target} initialised twice", a.span))
        if free_refs(a.expr):
            out.append(Diagnostic(f"init of {a.target} is not a literal expression", a.span))
            continue
        before = len(out)
        _check_assignment_type(typer, a, dom)
        if len(out) > before:
            continue
        try:
            v = eval_expr(a.expr, {}, {})
        except SpecificationError as exc:
            out.append(Diagnostic(str(exc), a.span))
            continue
        if v not in dom:
            out.append(Diagnostic(f"initial value {v!r} of {a.target} outside its domain", a.span))
    if missing := seen_vars - set(init_targets):
        out.append(Diagnostic(f"init incomplete: {', '.join(sorted(missing))} not initialised", m.span))

    names: set[str] = set()
    for ev in m.events:
        if ev.name in names:
            out.append(Diagnostic(f"duplicate event {ev.name}", ev.span))
        names.add(ev.name)
        out.extend(_validate_event(m, ev))
    return out


def _validate_event(m: Machine, ev: EventDef) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    pnames: set[str] = set()
    for p in ev.params:
        if p.name in pnames:
            out.append(Diagnostic(f"{ev.name}: duplicate parameter {p.name}", p.span))
        if m.var_domain(p.name) is not None:
            out.append(Diagnostic(f"{ev.name}: parameter {p.name} shadows a variable", p.span))
        pnames.add(p.name)
        out.extend(Diagnostic(f"{ev.name}.{p.name}: {msg}", p.span) for msg in domain_errors(p.domain))
    typer = _Typer(m, ev, out)
    if typer.type_of(ev.guard) not in (None, "bool"):
        out.append(Diagnostic(f"{ev.name}: guard is not boolean", ev.guard.span))
    targets: set[str] = set()
    for a in ev.actions:
        dom = m.var_domain(a.target)
        if dom is None:
            out.append(Diagnostic(f"unknown assignment target {a.target}", a.span))
            continue
        if a.target in targets:
            out.append(Diagnostic(f"{ev.name}: {a.target} assigned twice", a.span))
        targets.add(a.target)
        _check_assignment_type(typer, a, dom)
    if ev.refines is not None:
        if m.refines is None:
            out.append(Diagnostic(f"{ev.name}: refines clause in a machine that refines nothing", ev.refines.span))
        for w in ev.refines.witnesses:
            for r in free_refs(w.expr):
                if isinstance(r, VarRef):
                    out.append(Diagnostic(f"{ev.name}: witness for {w.target} reads variable {r.name}", w.span))
                elif ev.param(r.name) is None or ev.param(r.name).internal:
                    out.append(Diagnostic(f"{ev.name}: witness for {w.target} reads unknown parameter {r.name}", w.span))
            typer.type_of(w.expr)
    return out


# -- refinement link ----------------------------------------------------------

class LinkError(SpecificationError):
    def __init__(self, message: str, event: str | None = None):
        super().__init__(message)
        self.event = event


@dataclass(frozen=True)
class RefinementLink:
    abstract: Machine
    concrete: Machine
    psi_spec: Mapping[str, tuple[str, tuple[Assignment, ...]]]
    new_events: frozenset[str]


def build_refinement_link(abstract: Machine, concrete: Machine) -> RefinementLink:
    """Derive the event-name mapping and the skip set of a refinement."""
    if concrete.refines != abstract.name:
        raise LinkError(f"{concrete.name} does not refine {abstract.name}")
    psi: dict[str, tuple[str, tuple[Assignment, ...]]] = {}
    for ev in concrete.events:
        if ev.refines is None:
            continue
        target = ev.refines.abstract_event
        try:
            aev = abstract.event(target)
        except KeyError:
            raise LinkError(f"{ev.name} refines unknown abstract event {target}", ev.name) from None
        needed = {p.name for p in aev.visible_params} - {p.name for p in ev.visible_params}
        given = [w.target for w in ev.refines.witnesses]
        if len(set(given)) != len(given):
            raise LinkError(f"{ev.name}: duplicate witness", ev.name)
        if missing := needed - set(given):
            raise LinkError(f"{ev.name}: missing witness for {', '.join(sorted(missing))}", ev.name)
        if extra := set(given) - needed:
            raise LinkError(f"{ev.name}: unexpected witness for {', '.join(sorted(extra))}", ev.name)
        for p in aev.visible_params:
            cp = ev.param(p.name)
            if cp is not None and not cp.internal and cp.domain.kind != p.domain.kind:
                raise LinkError(f"{ev.name}: parameter {p.name} changes type", ev.name)
        psi[ev.name] = (target, ev.refines.witnesses)
    refined = {t for t, _ in psi.values()}
    for aev in abstract.events:
        if aev.name not in refined:
            raise LinkError(f"abstract event {aev.name} is never refined", aev.name)
    return RefinementLink(abstract, concrete, psi, concrete.new_events)
