"""Explicit labelled transition systems of machines and their semantic sets."""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .model import (
    Machine, SpecificationError, Value, compile_expr, eval_expr,
    validate_machine,
)

DEFAULT_MAX_STATES = 100_000
SPACE_FORMAT = "ebfdr-statespace/1"


class ExplorationError(Exception):
    pass


class BoundExceeded(ExplorationError):
    def __init__(self, bound: int):
        super().__init__(f"state space exceeds {bound} states")
        self.bound = bound


class DomainViolation(ExplorationError):
    """An action produced a value outside its variable's domain."""

    def __init__(self, event: str, variable: str, value: Value, state: Mapping[str, Value]):
        super().__init__(f"{event} assigns {value!r} to {variable} (out of domain) in state {dict(state)}")
        self.event, self.variable, self.value, self.state = event, variable, value, dict(state)


def _fmt_value(v: Value) -> str:
    if v is True:
        return "true"
    if v is False:
        return "false"
    return str(v)


@dataclass(frozen=True)
class EventLabel:
    event: str
    params: tuple[tuple[str, Value], ...] = ()

    def __str__(self) -> str:
        if not self.params:
            return self.event
        return f"{self.event}({', '.join(f'{k}={_fmt_value(v)}' for k, v in self.params)})"

    def to_json(self) -> dict:
        return {"event": self.event, "params": dict(self.params)}

    @classmethod
    def from_json(cls, d: Mapping) -> EventLabel:
        return cls(d["event"], tuple(d.get("params", {}).items()))


def declared_alphabet(machine: Machine) -> tuple[EventLabel, ...]:
    """Every label the machine's declarations admit, in canonical order."""
    out = []
    for ev in machine.events:
        vis = ev.visible_params
        for combo in itertools.product(*(p.domain.values() for p in vis)):
            out.append(EventLabel(ev.name, tuple(zip((p.name for p in vis), combo))))
    return tuple(out)


class StateSpace:
    """Reachable states, labels and transitions of one machine.

    State 0 is the initial state. ``states[i]`` is a tuple of values in
    variable declaration order. Treat instances as immutable.
    """

    def __init__(self, name: str, variables: Sequence[str], states: Sequence[tuple],
                 labels: Sequence[EventLabel], transitions: Iterable[tuple[int, int, int]],
                 initial: int = 0):
        self.name = name
        self.variables = tuple(variables)
        self.states = list(states)
        self.labels = list(labels)
        self.initial = initial
        self.transitions: list[tuple[int, int, int]] = []
        self._out: list[list[tuple[int, int]]] = [[] for _ in self.states]
        self._by_label: list[list[tuple[int, int]]] = [[] for _ in self.labels]
        seen = set()
        for t in transitions:
            if t in seen:
                continue
            seen.add(t)
            src, lab, dst = t
            self.transitions.append(t)
            self._out[src].append((lab, dst))
            self._by_label[lab].append((src, dst))
        self._state_ids = {s: i for i, s in enumerate(self.states)}
        self._label_ids = {l: i for i, l in enumerate(self.labels)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    def valuation(self, s: int) -> dict[str, Value]:
        return dict(zip(self.variables, self.states[s]))

    def find_state(self, valuation: Mapping[str, Value]) -> int:
        return self._state_ids[tuple(valuation[v] for v in self.variables)]

    def label_id(self, label: EventLabel) -> int | None:
        return self._label_ids.get(label)

    def successors(self, s: int) -> list[tuple[EventLabel, int]]:
        return [(self.labels[l], d) for l, d in self._out[s]]

    def successors_by(self, s: int, label: EventLabel) -> list[int]:
        lid = self._label_ids.get(label)
        return [d for l, d in self._out[s] if l == lid]

    def edges(self, label: EventLabel) -> list[tuple[int, int]]:
        lid = self._label_ids.get(label)
        return [] if lid is None else list(self._by_label[lid])

    def to_json(self) -> dict:
        return {
            "format": SPACE_FORMAT,
            "machine": self.name,
            "variables": list(self.variables),
            "initial": self.initial,
            "states": [list(s) for s in self.states],
            "labels": [l.to_json() for l in self.labels],
            "transitions": [list(t) for t in self.transitions],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> StateSpace:
        if d.get("format") != SPACE_FORMAT:
            raise ValueError(f"not a {SPACE_FORMAT} document")
        return cls(d["machine"], d["variables"], [tuple(s) for s in d["states"]],
                   [EventLabel.from_json(l) for l in d["labels"]],
                   [tuple(t) for t in d["transitions"]], d["initial"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> StateSpace:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def explore(machine: Machine, max_states: int = DEFAULT_MAX_STATES) -> StateSpace:
    """Breadth-first exploration from the single initial state.

    Successors of a state are produced in event declaration order and, within
    an event, in the canonical order of its parameter valuations, so state
    and label numbering is reproducible. The invariant clause is ignored.
    """
    problems = validate_machine(machine)
    if problems:
        raise SpecificationError("; ".join(str(p) for p in problems))
    names = machine.var_names
    var_index = {n: i for i, n in enumerate(names)}
    domains = [v.domain for v in machine.variables]
    init_vals = {a.target: eval_expr(a.expr, {}, {}) for a in machine.init}
    init = tuple(init_vals[n] for n in names)

    compiled = []
    for ev in machine.events:
        pindex = {p.name: i for i, p in enumerate(ev.params)}
        visible = [i for i, p in enumerate(ev.params) if not p.internal]
        guard = compile_expr(ev.guard, var_index, pindex)
        actions = [(var_index[a.target], compile_expr(a.expr, var_index, pindex)) for a in ev.actions]
        combos = list(itertools.product(*(p.domain.values() for p in ev.params)))
        labels = [EventLabel(ev.name, tuple((ev.params[i].name, c[i]) for i in visible)) for c in combos]
        compiled.append((ev.name, guard, actions, combos, labels))

    states = [init]
    ids = {init: 0}
    label_ids: dict[EventLabel, int] = {}
    labels: list[EventLabel] = []
    transitions: list[tuple[int, int, int]] = []
    frontier = deque([0])
    while frontier:
        src = frontier.popleft()
        s = states[src]
        seen_here = set()
        for name, guard, actions, combos, elabels in compiled:
            for combo, label in zip(combos, elabels):
                if not guard(s, combo):
                    continue
                new = list(s)
                for idx, f in actions:
                    new[idx] = f(s, combo)
                for idx, f in actions:
                    if new[idx] not in domains[idx]:
                        raise DomainViolation(name, names[idx], new[idx], dict(zip(names, s)))
                dst_state = tuple(new)
                dst = ids.get(dst_state)
                if dst is None:
                    if len(states) >= max_states:
                        raise BoundExceeded(max_states)
                    dst = ids[dst_state] = len(states)
                    states.append(dst_state)
                    frontier.append(dst)
                lid = label_ids.get(label)
                if lid is None:
                    lid = label_ids[label] = len(labels)
                    labels.append(label)
                if (lid, dst) not in seen_here:
                    seen_here.add((lid, dst))
                    transitions.append((src, lid, dst))
    return StateSpace(machine.name, names, states, labels, transitions)


@dataclass(frozen=True)
class Trace:
    origin: int
    steps: tuple[tuple[EventLabel, int], ...] = ()

    @property
    def last(self) -> int:
        return self.steps[-1][1] if self.steps else self.origin

    @property
    def labels(self) -> tuple[EventLabel, ...]:
        return tuple(l for l, _ in self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def extend(self, label: EventLabel, dst: int) -> Trace:
        return Trace(self.origin, self.steps + ((label, dst),))

    def to_json(self, ss: StateSpace) -> list[dict]:
        return [{**l.to_json(), "state": ss.valuation(d)} for l, d in self.steps]


def replays(ss: StateSpace, trace: Trace) -> bool:
    """True iff every step of ``trace`` is a transition of ``ss``."""
    if trace.origin != ss.initial:
        return False
    cur = trace.origin
    for label, dst in trace.steps:
        if dst not in ss.successors_by(cur, label):
            return False
        cur = dst
    return True


def enabled(ss: StateSpace, s: int) -> frozenset[EventLabel]:
    return frozenset(l for l, _ in ss.successors(s))


def refusal(ss: StateSpace, s: int, alphabet: Iterable[EventLabel]) -> frozenset[EventLabel]:
    alphabet = frozenset(alphabet)
    en = enabled(ss, s)
    if not en <= alphabet:
        raise ValueError(f"alphabet misses enabled labels {sorted(map(str, en - alphabet))}")
    return alphabet - en


def skip_labels_for(ss: StateSpace, new_events: Iterable[str]) -> frozenset[EventLabel]:
    new_events = set(new_events)
    return frozenset(l for l in ss.labels if l.event in new_events)


def stable_states(ss: StateSpace, skip_labels: Iterable[EventLabel]) -> frozenset[int]:
    skip = frozenset(skip_labels)
    return frozenset(s for s in range(ss.n_states) if not (enabled(ss, s) & skip))


def _skip_graph(ss: StateSpace, skip: frozenset[EventLabel]) -> list[list[int]]:
    return [[d for l, d in ss.successors(s) if l in skip] for s in range(ss.n_states)]


def strongly_connected_components(succ: Sequence[Sequence[int]]) -> list[list[int]]:
    """Tarjan's algorithm, iterative; components in reverse topological order."""
    index = [-1] * len(succ)
    low = [0] * len(succ)
    on_stack = [False] * len(succ)
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(len(succ)):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, i = work[-1]
            if i < len(succ[v]):
                work[-1] = (v, i + 1)
                w = succ[v][i]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def divergent_states(ss: StateSpace, skip_labels: Iterable[EventLabel]) -> frozenset[int]:
    """States on a non-empty cycle of skip transitions."""
    graph = _skip_graph(ss, frozenset(skip_labels))
    out: set[int] = set()
    for comp in strongly_connected_components(graph):
        if len(comp) > 1 or comp[0] in graph[comp[0]]:
            out.update(comp)
    return frozenset(out)


def skip_cycle(ss: StateSpace, skip_labels: Iterable[EventLabel], s: int) -> list[tuple[EventLabel, int]] | None:
    """Shortest skip-labelled path from ``s`` back to ``s``, or None."""
    skip = frozenset(skip_labels)
    parent: dict[int, tuple[int, EventLabel]] = {}
    queue = deque()
    for l, d in ss.successors(s):
        if l in skip and d not in parent:
            parent[d] = (s, l)
            queue.append(d)
    while queue:
        v = queue.popleft()
        if v == s:
            path = []
            cur = s
            while True:
                prev, l = parent[cur]
                path.append((l, cur))
                cur = prev
                if cur == s:
                    return path[::-1]
        for l, d in ss.successors(v):
            if l in skip and d not in parent:
                parent[d] = (v, l)
                queue.append(d)
    return None


def failures(ss: StateSpace, skip_labels: Iterable[EventLabel], alphabet: Iterable[EventLabel],
             max_depth: int) -> set[tuple[tuple[EventLabel, ...], frozenset[EventLabel]]]:
    """All failure pairs whose trace has at most ``max_depth`` steps.

    Enumerates every trace literally, so cost grows with the branching
    factor raised to ``max_depth``.
    """
    skip = frozenset(skip_labels)
    alphabet = frozenset(alphabet)
    stable = stable_states(ss, skip)
    out = set()
    for labels, last in iter_traces(ss, max_depth):
        if last in stable:
            out.add((labels, refusal(ss, last, alphabet)))
    return out


def iter_traces(ss: StateSpace, max_depth: int) -> Iterator[tuple[tuple[EventLabel, ...], int]]:
    """Yield (label sequence, last state) for every trace up to ``max_depth``."""
    stack = [((), ss.initial)]
    while stack:
        labels, s = stack.pop()
        yield labels, s
        if len(labels) < max_depth:
            for l, d in reversed(ss.successors(s)):
                stack.append((labels + (l,), d))


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _dot_quote(s: str) -> str:
    return f'"{_dot_escape(s)}"'


def export_dot(ss: StateSpace) -> str:
    lines = [f"digraph {_dot_quote(ss.name)} {{"]
    for i, s in enumerate(ss.states):
        text = "\\n".join(_dot_escape(f"{k}={_fmt_value(v)}") for k, v in zip(ss.variables, s))
        shape = "doublecircle" if i == ss.initial else "circle"
        lines.append(f'  {i} [shape={shape}, label="{text}"];')
    for src, lab, dst in ss.transitions:
        lines.append(f"  {src} -> {dst} [label={_dot_quote(str(ss.labels[lab]))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
