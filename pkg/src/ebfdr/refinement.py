"""Label mapping, trace concealment and the refinement checks.

``check_failure_divergence`` walks pairs of concrete and abstract states in
lockstep. A stable concrete state must enable exactly the refinements of what
its abstract partner enables; an unstable one must not lie on a cycle of new
events. Abstract branching is explored existentially, which is complete only
when the abstract machine is event deterministic.
"""
from __future__ import annotations

import json
import warnings
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import LinkError, Machine, RefinementLink, build_refinement_link, eval_expr
from .statespace import (
    EventLabel, StateSpace, Trace, declared_alphabet, divergent_states,
    enabled, skip_cycle,
)


class NondeterministicAbstractionWarning(UserWarning):
    pass


class LabelMap:
    """Maps concrete labels to abstract labels for one refinement link.

    The table covers every declared non-skip concrete label. Witnesses are
    evaluated over the concrete label's parameters only.
    """

    def __init__(self, link: RefinementLink):
        self.link = link
        self.new_events = frozenset(link.new_events)
        self.abstract_alphabet = frozenset(declared_alphabet(link.abstract))
        self.concrete_alphabet = frozenset(
            l for l in declared_alphabet(link.concrete) if l.event not in self.new_events
        )
        self._table = {l: self._compute(l) for l in self.concrete_alphabet}
        pre: dict[EventLabel, set[EventLabel]] = defaultdict(set)
        for c, a in self._table.items():
            pre[a].add(c)
        self._preimage = {a: frozenset(cs) for a, cs in pre.items()}

    @classmethod
    def from_machines(cls, abstract: Machine, concrete: Machine) -> LabelMap:
        return cls(build_refinement_link(abstract, concrete))

    def _compute(self, label: EventLabel) -> EventLabel:
        target, witnesses = self.link.psi_spec[label.event]
        aev = self.link.abstract.event(target)
        cparams = dict(label.params)
        wit = {w.target: w.expr for w in witnesses}
        values = []
        for p in aev.visible_params:
            v = cparams[p.name] if p.name in cparams else eval_expr(wit[p.name], {}, cparams)
            if v not in p.domain:
                raise LinkError(f"witness gives {target}.{p.name} = {v!r} outside its domain for {label}", label.event)
            values.append((p.name, v))
        return EventLabel(target, tuple(values))

    def is_skip(self, label: EventLabel) -> bool:
        return label.event in self.new_events

    def skip_labels(self, ss: StateSpace) -> frozenset[EventLabel]:
        return frozenset(l for l in ss.labels if self.is_skip(l))

    def psi(self, label: EventLabel) -> EventLabel:
        if self.is_skip(label):
            raise ValueError(f"{label} refines skip and has no abstract counterpart")
        try:
            return self._table[label]
        except KeyError:
            raise ValueError(f"{label} is not a label of {self.link.concrete.name}") from None

    def preimage(self, label: EventLabel) -> frozenset[EventLabel]:
        return self._preimage.get(label, frozenset())

    @property
    def surjective(self) -> bool:
        """Whether every declared abstract label has a concrete counterpart."""
        return self.abstract_alphabet <= self._preimage.keys()


def psi(lmap: LabelMap, label: EventLabel) -> EventLabel:
    return lmap.psi(label)


def tau(lmap: LabelMap, sigma: Sequence[EventLabel]) -> tuple[EventLabel, ...]:
    """Drop labels of new events and rename the rest to abstract labels."""
    return tuple(lmap.psi(l) for l in sigma if not lmap.is_skip(l))


def abs_refusal(lmap: LabelMap, refused: Iterable[EventLabel]) -> frozenset[EventLabel]:
    """Abstract labels all of whose concrete refinements are refused."""
    refused = frozenset(refused)
    if any(lmap.is_skip(l) for l in refused):
        raise ValueError("refusal set of a stable state cannot contain new events")
    image = {lmap.psi(l) for l in refused}
    return frozenset(y for y in image if lmap.preimage(y) <= refused)


@dataclass(frozen=True)
class Determinism:
    deterministic: bool
    state: int | None = None
    label: EventLabel | None = None
    successors: tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.deterministic


def is_event_deterministic(ss: StateSpace) -> Determinism:
    """Label determinism: at most one successor per (state, label).

    Sufficient for event determinism since every trace then reaches a single
    state and so has a single refusal set.
    """
    for s in range(ss.n_states):
        targets: dict[EventLabel, list[int]] = defaultdict(list)
        for l, d in ss.successors(s):
            targets[l].append(d)
        for l, ds in targets.items():
            if len(ds) > 1:
                return Determinism(False, s, l, tuple(ds))
    return Determinism(True)


# -- verdicts ------------------------------------------------------------------

REFINES, FAILS = "refines", "fails"
DIVERGENCE, FAILURE_MISMATCH, TRACE_MISMATCH = "divergence", "failure-mismatch", "trace-mismatch"

_STEP_SCHEMA = {
    "type": "object",
    "required": ["event", "params", "state"],
    "properties": {
        "event": {"type": "string"},
        "params": {"type": "object"},
        "state": {"type": "object"},
    },
}

VERDICT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["result", "reason", "concrete_trace", "abstract_trace", "detail"],
    "properties": {
        "result": {"enum": [REFINES, FAILS]},
        "reason": {"enum": [None, DIVERGENCE, FAILURE_MISMATCH, TRACE_MISMATCH]},
        "concrete_trace": {"type": "array", "items": _STEP_SCHEMA},
        "abstract_trace": {"type": "array", "items": _STEP_SCHEMA},
        "detail": {"type": "object"},
    },
}


@dataclass
class Verdict:
    """Outcome of a refinement check.

    On failure the two traces run in lockstep: the abstract trace is the
    concealed and renamed concrete trace, except for ``trace-mismatch`` where
    the final concrete step has no abstract counterpart.
    """

    result: str
    reason: str | None = None
    concrete_trace: Trace | None = None
    abstract_trace: Trace | None = None
    detail: dict = field(default_factory=dict)
    concrete_space: StateSpace | None = field(default=None, repr=False, compare=False)
    abstract_space: StateSpace | None = field(default=None, repr=False, compare=False)

    @property
    def refines(self) -> bool:
        return self.result == REFINES

    def to_json(self) -> dict:
        def steps(t, ss):
            return [] if t is None else t.to_json(ss)

        return {
            "result": self.result,
            "reason": self.reason,
            "concrete_trace": steps(self.concrete_trace, self.concrete_space),
            "abstract_trace": steps(self.abstract_trace, self.abstract_space),
            "detail": self.detail,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def describe(self) -> str:
        if self.refines:
            return "refines"
        lines = [f"fails ({self.reason})"]
        lines.append("  concrete: <" + ", ".join(map(str, self.concrete_trace.labels)) + ">")
        lines.append("  abstract: <" + ", ".join(map(str, self.abstract_trace.labels)) + ">")
        for k, v in self.detail.items():
            lines.append(f"  {k}: {v}")
        return "\n".join(lines)


def _names(labels: Iterable[EventLabel]) -> list[str]:
    return sorted(map(str, labels))


# -- trace refinement -----------------------------------------------------------

def check_trace_refinement(abs_ss: StateSpace, conc_ss: StateSpace, lmap: LabelMap) -> Verdict:
    """Decide whether every concealed concrete trace is an abstract trace.

    Breadth-first search over a concrete state paired with the set of
    abstract states reachable by the concealed trace, so nondeterministic
    abstract machines are handled exactly and counterexamples are shortest.
    """
    start = (conc_ss.initial, frozenset([abs_ss.initial]))
    parent: dict[tuple, tuple | None] = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        sc, group = node
        for label, dst in conc_ss.successors(sc):
            if lmap.is_skip(label):
                nxt = (dst, group)
            else:
                a = lmap.psi(label)
                moved = frozenset(d for s in group for d in abs_ss.successors_by(s, a))
                if not moved:
                    return _trace_mismatch(abs_ss, conc_ss, lmap, parent, node, label, dst)
                nxt = (dst, moved)
            if nxt not in parent:
                parent[nxt] = (node, label)
                queue.append(nxt)
    return Verdict(REFINES, concrete_space=conc_ss, abstract_space=abs_ss)


def _trace_mismatch(abs_ss, conc_ss, lmap, parent, node, label, dst) -> Verdict:
    path = []  # (label, node reached)
    cur = node
    while parent[cur] is not None:
        prev, l = parent[cur]
        path.append((l, cur))
        cur = prev
    path.reverse()
    conc = Trace(conc_ss.initial, tuple((l, n[0]) for l, n in path) + ((label, dst),))

    # walk back through the abstract state sets to pick one concrete run
    sa = min(node[1])
    abs_steps = []
    groups = [cur[1]] + [n[1] for _, n in path]
    for i in range(len(path) - 1, -1, -1):
        l, _ = path[i]
        if lmap.is_skip(l):
            continue
        a = lmap.psi(l)
        prev = next(s for s in sorted(groups[i]) if sa in abs_ss.successors_by(s, a))
        abs_steps.append((a, sa))
        sa = prev
    abst = Trace(abs_ss.initial, tuple(reversed(abs_steps)))
    return Verdict(
        FAILS, TRACE_MISMATCH, conc, abst,
        {"unmatched": str(label), "abstract_label": str(lmap.psi(label)),
         "abstract_enabled": _names(set().union(*(enabled(abs_ss, s) for s in node[1])))},
        conc_ss, abs_ss,
    )


# -- failure divergence refinement -------------------------------------------------

_OK = None


@dataclass
class _Failure:
    reason: str
    tc: tuple | None
    ta: tuple | None
    detail: dict


def _materialize(origin: int, cons: tuple | None) -> Trace:
    steps = []
    while cons is not None:
        label, dst, cons = cons
        steps.append((label, dst))
    return Trace(origin, tuple(reversed(steps)))


def check_failure_divergence(abs_ss: StateSpace, conc_ss: StateSpace, lmap: LabelMap) -> Verdict:
    """Failure divergence refinement of ``abs_ss`` by ``conc_ss``.

    Divergence is computed once on the concrete space beforehand; the pair
    search then treats an unstable state as acceptable iff it is not on a
    cycle of new events. Counterexamples are the first failure met in a
    depth-first walk that visits successors in canonical order.
    """
    skip = lmap.skip_labels(conc_ss)
    divergent = divergent_states(conc_ss, skip)
    if not is_event_deterministic(abs_ss):
        warnings.warn(
            f"abstract machine {abs_ss.name} is not event deterministic; "
            "a 'refines' verdict may be unsound",
            NondeterministicAbstractionWarning, stacklevel=2,
        )
    abs_alphabet = lmap.abstract_alphabet | set(abs_ss.labels)
    conc_alphabet = lmap.concrete_alphabet | {l for l in conc_ss.labels if l not in skip}
    seen: set[tuple[int, int]] = set()

    def local_check(sc, sa, tc, ta) -> _Failure | None:
        en_c = enabled(conc_ss, sc)
        if en_c & skip:
            if sc in divergent:
                cycle = skip_cycle(conc_ss, skip, sc)
                return _Failure(DIVERGENCE, tc, ta, {
                    "cycle": [str(l) for l, _ in cycle],
                    "state": conc_ss.valuation(sc),
                })
            return None
        en_a = enabled(abs_ss, sa)
        image = frozenset(lmap.psi(l) for l in en_c)
        if image == en_a:
            return None
        return _Failure(FAILURE_MISMATCH, tc, ta, {
            "abstract_enabled": _names(en_a),
            "concrete_enabled": _names(en_c),
            "abstract_refusal": _names(abs_alphabet - en_a),
            "abs_refusal": _names(abs_refusal(lmap, conc_alphabet - en_c)),
        })

    def fail_loop(sc, sa, tc, ta):
        if (sc, sa) in seen:
            return _OK
        seen.add((sc, sa))
        bad = local_check(sc, sa, tc, ta)
        if bad is not None:
            return bad
        for label, sc2 in conc_ss.successors(sc):
            tc2 = (label, sc2, tc)
            if label in skip:
                res = yield (sc2, sa, tc2, ta)
                if res is not _OK:
                    return res
                continue
            a = lmap.psi(label)
            results = []
            for sa2 in abs_ss.successors_by(sa, a):
                results.append((yield (sc2, sa2, tc2, (a, sa2, ta))))
            if all(r is not _OK for r in results):
                if results:
                    return results[0]
                return _Failure(TRACE_MISMATCH, tc2, ta, {
                    "unmatched": str(label),
                    "abstract_label": str(a),
                    "abstract_enabled": _names(enabled(abs_ss, sa)),
                })
        return _OK

    result = _trampoline(fail_loop, (conc_ss.initial, abs_ss.initial, None, None))
    if result is _OK:
        return Verdict(REFINES, concrete_space=conc_ss, abstract_space=abs_ss)
    return Verdict(
        FAILS, result.reason,
        _materialize(conc_ss.initial, result.tc), _materialize(abs_ss.initial, result.ta),
        result.detail, conc_ss, abs_ss,
    )


def _trampoline(fn, args):
    """Run a generator-based recursion without growing the Python stack.

    A frame yields the argument tuple of a recursive call and is resumed
    with that call's return value.
    """
    stack = [fn(*args)]
    value = None
    while True:
        try:
            call = stack[-1].send(value)
        except StopIteration as stop:
            stack.pop()
            value = stop.value
            if not stack:
                return value
            continue
        stack.append(fn(*call))
        value = None
