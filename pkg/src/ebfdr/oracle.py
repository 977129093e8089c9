"""Definition-level reference checks and random machine pairs.

These functions recompute refinement facts straight from the definitions
(traces, refusal sets, abstract refusals, skip cycles) and share no search
code with :mod:`ebfdr.refinement`. Trace enumeration is breadth first and
keeps one representative per class of traces that end in the same concrete
state and whose concealed image reaches the same set of abstract states;
such traces have identical futures, so pruning the others loses nothing.
With ``k=None`` the enumeration runs to a fixpoint and is exact.
"""
from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .model import (
    Arith, Assignment, Compare, EventDef, IntRange, Lit, Machine,
    ParamDecl, ParamRef, RefinesClause, VarDecl, VarRef, conj,
)
from .refinement import (
    LabelMap, abs_refusal, check_failure_divergence, check_trace_refinement,
    is_event_deterministic, tau,
)
from .statespace import (
    BoundExceeded, DomainViolation, EventLabel, StateSpace, divergent_states,
    explore, refusal, stable_states,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleResult:
    holds: bool
    counterexample: object = None
    skipped: bool = False

    def __bool__(self) -> bool:
        return self.holds


def abstract_states_after(ss: StateSpace, sigma: Iterable[EventLabel]) -> frozenset[int]:
    """States reached from the initial state by the label sequence ``sigma``."""
    cur = frozenset([ss.initial])
    for l in sigma:
        cur = frozenset(d for s in cur for d in ss.successors_by(s, l))
        if not cur:
            break
    return cur


def _trace_classes(abs_ss: StateSpace, conc_ss: StateSpace, lmap: LabelMap,
                   k: int | None, past_mismatch: bool = False
                   ) -> Iterator[tuple[tuple[EventLabel, ...], int, frozenset[int]]]:
    """Yield (concrete labels, last concrete state, abstract states after tau).

    Traces whose image has left the abstract machine are only extended when
    ``past_mismatch`` is set.
    """
    start = ((), conc_ss.initial)
    seen = {(conc_ss.initial, frozenset([abs_ss.initial]))}
    queue = deque([start])
    while queue:
        sigma, last = queue.popleft()
        reached = abstract_states_after(abs_ss, tau(lmap, sigma))
        yield sigma, last, reached
        if (not reached and not past_mismatch) or (k is not None and len(sigma) >= k):
            continue
        for l, d in conc_ss.successors(last):
            ext = sigma + (l,)
            key = (d, abstract_states_after(abs_ss, tau(lmap, ext)))
            if key not in seen:
                seen.add(key)
                queue.append((ext, d))


def oracle_trace_refines(abs_ss: StateSpace, conc_ss: StateSpace, lmap: LabelMap,
                         k: int | None = None) -> OracleResult:
    """Is tau of every concrete trace (up to length ``k``) an abstract trace?"""
    for sigma, _, reached in _trace_classes(abs_ss, conc_ss, lmap, k):
        if not reached:
            return OracleResult(False, sigma)
    return OracleResult(True)


def _alphabets(abs_ss, conc_ss, lmap):
    skip = lmap.skip_labels(conc_ss)
    sigma_c = lmap.concrete_alphabet | {l for l in conc_ss.labels if l not in skip}
    sigma_a = lmap.abstract_alphabet | set(abs_ss.labels)
    return skip, sigma_c, sigma_a


def oracle_failure_refines(abs_ss: StateSpace, conc_ss: StateSpace, lmap: LabelMap,
                           k: int | None = None) -> OracleResult:
    """Failure trace refinement checked pair by pair.

    Each concrete failure (sigma, X) must reappear in the abstract machine as
    (tau(sigma), AbsRefusal(X)). The counterexample is that quadruple.
    """
    skip, sigma_c, sigma_a = _alphabets(abs_ss, conc_ss, lmap)
    stable = stable_states(conc_ss, skip)
    for sigma, last, _ in _trace_classes(abs_ss, conc_ss, lmap, k, past_mismatch=True):
        if last not in stable:
            continue
        x = refusal(conc_ss, last, sigma_c)
        y = abs_refusal(lmap, x)
        t = tau(lmap, sigma)
        if not any(refusal(abs_ss, s, sigma_a) == y for s in abstract_states_after(abs_ss, t)):
            return OracleResult(False, (sigma, x, t, y))
    return OracleResult(True)


def oracle_divergent_states(ss: StateSpace, skip_labels: Iterable[EventLabel]) -> frozenset[int]:
    """States that reach themselves again by one or more skip steps."""
    skip = frozenset(skip_labels)
    out = set()
    for s in range(ss.n_states):
        frontier = [d for l, d in ss.successors(s) if l in skip]
        seen = set(frontier)
        while frontier:
            v = frontier.pop()
            if v == s:
                out.add(s)
                break
            for l, d in ss.successors(v):
                if l in skip and d not in seen:
                    seen.add(d)
                    frontier.append(d)
    return frozenset(out)


def oracle_divergence_free(conc_ss: StateSpace, skip_labels: Iterable[EventLabel]) -> OracleResult:
    """Search skip paths of up to |S| steps for a revisited state.

    The counterexample is the cycle as a list of (label, state) steps.
    """
    skip = frozenset(skip_labels)
    limit = conc_ss.n_states
    for s in range(conc_ss.n_states):
        # depth-first over simple skip paths starting at s
        stack = [(s, [])]
        dead: set[int] = set()
        while stack:
            v, path = stack.pop()
            if len(path) >= limit:
                continue
            on_path = {s} | {d for _, d in path}
            for l, d in conc_ss.successors(v):
                if l not in skip:
                    continue
                if d in on_path:
                    start = 0 if d == s else 1 + next(i for i, (_, x) in enumerate(path) if x == d)
                    return OracleResult(False, path[start:] + [(l, d)])
                if d not in dead:
                    stack.append((d, path + [(l, d)]))
            dead.add(v)
    return OracleResult(True)


def _closure(ss: StateSpace, states: Iterable[int], skip: frozenset[EventLabel]) -> frozenset[int]:
    out = set(states)
    frontier = list(out)
    while frontier:
        v = frontier.pop()
        for l, d in ss.successors(v):
            if l in skip and d not in out:
                out.add(d)
                frontier.append(d)
    return frozenset(out)


def _cover_pairs(abs_ss, conc_ss, lmap, k):
    """Breadth-first over abstract traces.

    Yields (abstract trace, abstract states, concrete states reachable by some
    concrete trace whose tau is that abstract trace).
    """
    skip = lmap.skip_labels(conc_ss)
    start = (frozenset([abs_ss.initial]), _closure(conc_ss, [conc_ss.initial], skip))
    seen = {start}
    queue = deque([((), start)])
    while queue:
        sigma, (pa, qc) = queue.popleft()
        yield sigma, pa, qc
        if not qc or (k is not None and len(sigma) >= k):
            continue
        moves = sorted({l for s in pa for l, _ in abs_ss.successors(s)}, key=str)
        for a in moves:
            pa2 = frozenset(d for s in pa for d in abs_ss.successors_by(s, a))
            qc2 = _closure(conc_ss, (d for q in qc for l, d in conc_ss.successors(q)
                                     if l not in skip and lmap.psi(l) == a), skip)
            node = (pa2, qc2)
            if node not in seen:
                seen.add(node)
                queue.append((sigma + (a,), node))


def check_prop1(abs_ss: StateSpace, conc_ss: StateSpace, lmap: LabelMap) -> OracleResult:
    """Every abstract trace with a concrete counterpart has a stable one.

    Skipped (vacuously true) when the concrete machine diverges.
    """
    skip = lmap.skip_labels(conc_ss)
    if divergent_states(conc_ss, skip):
        return OracleResult(True, skipped=True)
    stable = stable_states(conc_ss, skip)
    for sigma, pa, qc in _cover_pairs(abs_ss, conc_ss, lmap, None):
        if pa and qc and not (qc & stable):
            return OracleResult(False, sigma)
    return OracleResult(True)


def check_prop2(abs_ss: StateSpace, conc_ss: StateSpace, lmap: LabelMap, k: int = 8) -> OracleResult:
    """Every abstract trace of length <= k is tau of some concrete trace.

    The counterexample is the shortest uncovered abstract trace.
    """
    for sigma, pa, qc in _cover_pairs(abs_ss, conc_ss, lmap, k):
        if pa and not qc:
            return OracleResult(False, sigma)
    return OracleResult(True)


# -- random machine pairs ------------------------------------------------------

@dataclass(frozen=True)
class RandomMachineSpec:
    seed: int
    n_vars: int = 2
    domain_size: int = 3
    n_abstract_events: int = 2
    n_concrete_events: int = 3
    n_skip_events: int = 1

    def __post_init__(self):
        checks = [
            (1 <= self.n_vars <= 3, "n_vars"),
            (2 <= self.domain_size <= 4, "domain_size"),
            (1 <= self.n_abstract_events <= 4, "n_abstract_events"),
            (self.n_abstract_events <= self.n_concrete_events <= 6, "n_concrete_events"),
            (0 <= self.n_skip_events <= 2, "n_skip_events"),
        ]
        for ok, name in checks:
            if not ok:
                raise ValueError(f"{name} out of range in {self}")

    @classmethod
    def from_seed(cls, seed: int) -> RandomMachineSpec:
        rng = random.Random(seed)
        n_abs = rng.randint(1, 4)
        return cls(seed, rng.randint(1, 3), rng.randint(2, 4), n_abs,
                   rng.randint(n_abs, 6), rng.randint(0, 2))


@dataclass
class _EventPlan:
    """An event under construction; safety conjuncts keep actions in range."""

    name: str
    params: list[ParamDecl]
    atoms: list
    safety: list
    actions: dict[str, object]
    refines: RefinesClause | None = None

    def build(self) -> EventDef:
        acts = tuple(Assignment(t, e) for t, e in self.actions.items())
        return EventDef(self.name, tuple(self.params), conj(*self.atoms, *self.safety), acts, self.refines)


class _Generator:
    AUX = "aux"

    def __init__(self, spec: RandomMachineSpec):
        self.spec = spec
        self.rng = random.Random(f"ebfdr-pair:{spec.seed}")
        self.hi = spec.domain_size - 1
        self.vars = [f"v{i}" for i in range(spec.n_vars)]

    def atom(self, variables=None):
        rng = self.rng
        v = VarRef(rng.choice(variables or self.vars))
        kind = rng.choice(["=", "/=", "<", ">"])
        if kind == "<":
            return Compare("<", v, Lit(rng.randint(1, self.hi)))
        if kind == ">":
            return Compare(">", v, Lit(rng.randint(0, self.hi - 1)))
        return Compare(kind, v, Lit(rng.randint(0, self.hi)))

    def action(self, target: str, param: str | None):
        """Return (expression, safety conjuncts) for an assignment to ``target``."""
        rng = self.rng
        options = ["const", "inc", "dec"] + (["copy"] if len(self.vars) > 1 else []) + (["param"] * 2 if param else [])
        kind = rng.choice(options)
        t = VarRef(target)
        if kind == "inc":
            return Arith("+", t, Lit(1)), [Compare("<", t, Lit(self.hi))]
        if kind == "dec":
            return Arith("-", t, Lit(1)), [Compare(">", t, Lit(0))]
        if kind == "copy":
            return VarRef(rng.choice([v for v in self.vars if v != target])), []
        if kind == "param":
            return ParamRef(param), []
        return Lit(rng.randint(0, self.hi)), []

    def abstract(self) -> Machine:
        rng, spec = self.rng, self.spec
        self.nondet = rng.random() < 0.1
        plans = []
        for i in range(spec.n_abstract_events):
            params = []
            pname = None
            if rng.random() < 0.35:
                pname = f"p{i}"
                internal = self.nondet and rng.random() < 0.6
                params.append(ParamDecl(pname, IntRange(0, self.hi), internal))
            atoms = [self.atom() for _ in range(rng.randint(0, 2))]
            safety, actions = [], {}
            targets = rng.sample(self.vars, rng.randint(1, len(self.vars)))
            for t in targets:
                e, s = self.action(t, pname)
                actions[t] = e
                safety += s
            if pname and not any(isinstance(e, ParamRef) for e in actions.values()):
                actions[targets[0]] = ParamRef(pname)
            plans.append(_EventPlan(f"a{i}", params, atoms, safety, actions))
        self.abstract_plans = plans
        variables = tuple(VarDecl(v, IntRange(0, self.hi)) for v in self.vars)
        self.init = {v: rng.randint(0, self.hi) for v in self.vars}
        init = tuple(Assignment(v, Lit(c)) for v, c in self.init.items())
        return Machine("A", variables, init, tuple(p.build() for p in plans))

    def concrete(self) -> Machine:
        rng, spec = self.rng, self.spec
        use_aux = spec.n_skip_events > 0
        aux_hi = rng.randint(1, 2)
        aux = VarRef(self.AUX)
        divergent_bias = rng.random() < 0.3

        # split the concrete budget into event families, one per abstract event
        sizes = [1] * spec.n_abstract_events
        for _ in range(spec.n_concrete_events - spec.n_abstract_events):
            sizes[rng.randrange(len(sizes))] += 1

        wait_for_skip = use_aux and rng.random() < 0.3
        families: list[list[_EventPlan]] = []
        for i, (ap, size) in enumerate(zip(self.abstract_plans, sizes)):
            split_var = rng.choice(self.vars)
            cuts = rng.sample(range(self.hi + 1), min(size - 1, self.hi + 1))
            family = []
            for j in range(size):
                if j < len(cuts):
                    part = [Compare("=", VarRef(split_var), Lit(cuts[j]))]
                else:
                    part = [Compare("/=", VarRef(split_var), Lit(c)) for c in cuts]
                params, actions, witnesses = list(ap.params), dict(ap.actions), ()
                if ap.params and not ap.params[0].internal and rng.random() < 0.4:
                    old = ap.params[0].name
                    new = f"q{i}_{j}"
                    params = [ParamDecl(new, ap.params[0].domain)]
                    actions = {t: (ParamRef(new) if e == ParamRef(old) else e) for t, e in actions.items()}
                    witnesses = (Assignment(old, ParamRef(new)),)
                atoms = list(ap.atoms) + part
                if use_aux:
                    if rng.random() < 0.7:
                        actions[self.AUX] = Lit(0)
                    if wait_for_skip:
                        atoms.append(Compare("=", aux, Lit(aux_hi)))
                family.append(_EventPlan(f"c{i}_{j}", params, atoms, list(ap.safety), actions,
                                         RefinesClause(ap.name, witnesses)))
            families.append(family)

        skips = []
        for k in range(spec.n_skip_events):
            style = rng.choice(["toggle", "self", "reset"] if divergent_bias else ["progress", "progress", "reset"])
            extra = [self.atom()] if rng.random() < 0.4 else []
            if style == "progress":
                plan = _EventPlan(f"s{k}", [], extra, [Compare("<", aux, Lit(aux_hi))],
                                  {self.AUX: Arith("+", aux, Lit(1))})
            elif style == "toggle":
                plan = _EventPlan(f"s{k}", [], extra, [Compare("<=", aux, Lit(1))],
                                  {self.AUX: Arith("-", Lit(1), aux)})
            elif style == "self":
                plan = _EventPlan(f"s{k}", [], extra, [], {self.AUX: aux})
            else:
                plan = _EventPlan(f"s{k}", [], extra, [Compare("=", aux, Lit(aux_hi))], {self.AUX: Lit(0)})
            skips.append(plan)

        self._mutate(families, skips)

        variables = tuple(VarDecl(v, IntRange(0, self.hi)) for v in self.vars)
        init = [Assignment(v, Lit(c)) for v, c in self.init.items()]
        if use_aux:
            variables += (VarDecl(self.AUX, IntRange(0, aux_hi)),)
            init.append(Assignment(self.AUX, Lit(0)))
        events = [p.build() for fam in families for p in fam] + [p.build() for p in skips]
        return Machine("C", variables, tuple(init), tuple(events), refines="A")

    def _mutate(self, families, skips):
        rng = self.rng
        if rng.random() >= 0.45:
            return
        for n in range(rng.randint(1, 2)):
            kind = rng.choice(["strengthen", "weaken", "constant", "drop", "extra", "skip_writes"])
            fam = rng.choice(families)
            plan = rng.choice(fam)
            if kind == "strengthen":
                plan.atoms.append(self.atom())
            elif kind == "weaken" and plan.atoms:
                plan.atoms.pop(rng.randrange(len(plan.atoms)))
            elif kind == "constant":
                consts = [t for t, e in plan.actions.items() if isinstance(e, Lit) and t != self.AUX]
                if consts:
                    plan.actions[rng.choice(consts)] = Lit(rng.randint(0, self.hi))
            elif kind == "drop" and len(fam) > 1:
                fam.remove(plan)
            elif kind == "extra":
                fam.append(_EventPlan(f"{plan.name}x{n}", list(plan.params), [self.atom()],
                                      list(plan.safety), dict(plan.actions), plan.refines))
            elif kind == "skip_writes" and skips:
                s = rng.choice(skips)
                s.actions[rng.choice(self.vars)] = Lit(rng.randint(0, self.hi))


def generate_machine_pair(spec: RandomMachineSpec) -> tuple[Machine, Machine]:
    """A deterministic (in ``spec.seed``) abstract machine and a refinement.

    The refinement splits abstract events into guarded families, may rename
    parameters behind witnesses, adds new events over an auxiliary variable
    (about a third of seeds favour cyclic ones) and is sometimes mutated.
    """
    gen = _Generator(spec)
    a = gen.abstract()
    c = gen.concrete()
    return a, c


# -- differential harness --------------------------------------------------------

MAX_CONCRETE_STATES = 200


@dataclass
class DifferentialOutcome:
    seed: int
    skipped: str | None = None
    abstract_deterministic: bool = False
    fd_verdict: str | None = None
    fd_reason: str | None = None
    oracle_fd: bool | None = None
    trace_verdict: bool | None = None
    oracle_trace: bool | None = None
    divergence_free: bool | None = None
    prop1: OracleResult | None = None
    prop2: OracleResult | None = None
    sizes: tuple[int, int] = (0, 0)
    notes: list[str] = field(default_factory=list)

    @property
    def fd_agrees(self) -> bool:
        return (self.fd_verdict == "refines") == bool(self.oracle_fd)

    @property
    def trace_agrees(self) -> bool:
        return self.trace_verdict == self.oracle_trace


def run_differential(seed: int, prop_depth: int = 8) -> DifferentialOutcome:
    """Compare the lockstep checker with the definitional oracle on one seed."""
    import warnings

    out = DifferentialOutcome(seed)
    abstract, concrete = generate_machine_pair(RandomMachineSpec.from_seed(seed))
    try:
        abs_ss = explore(abstract, max_states=MAX_CONCRETE_STATES)
        conc_ss = explore(concrete, max_states=MAX_CONCRETE_STATES)
    except BoundExceeded:
        out.skipped = "state bound"
        return out
    except DomainViolation as exc:  # generator bug, surfaced rather than hidden
        out.skipped = f"domain violation: {exc}"
        return out
    out.sizes = (abs_ss.n_states, conc_ss.n_states)
    lmap = LabelMap.from_machines(abstract, concrete)
    out.abstract_deterministic = bool(is_event_deterministic(abs_ss))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fd = check_failure_divergence(abs_ss, conc_ss, lmap)
    out.fd_verdict, out.fd_reason = fd.result, fd.reason
    skip = lmap.skip_labels(conc_ss)
    out.divergence_free = bool(oracle_divergence_free(conc_ss, skip))
    out.oracle_fd = bool(oracle_failure_refines(abs_ss, conc_ss, lmap)) and out.divergence_free
    out.trace_verdict = check_trace_refinement(abs_ss, conc_ss, lmap).refines
    out.oracle_trace = bool(oracle_trace_refines(abs_ss, conc_ss, lmap))
    if out.divergence_free:
        out.prop1 = check_prop1(abs_ss, conc_ss, lmap)
    if fd.refines and out.abstract_deterministic:
        out.prop2 = check_prop2(abs_ss, conc_ss, lmap, prop_depth)
    if not out.fd_agrees and not out.abstract_deterministic:
        log.info("seed %d: verdicts differ on a nondeterministic abstraction", seed)
    return out
