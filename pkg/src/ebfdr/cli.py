"""Command-line front end: ``ebfdr <command> FILE [FILE]``.

Exit status is 0 when a check passes, 1 when it fails and 2 for usage,
parse, link or exploration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

from .model import SpecificationError, eval_expr
from .parser import load_machine
from .refinement import (
    LabelMap, check_failure_divergence, check_trace_refinement, is_event_deterministic,
)
from .statespace import (
    DEFAULT_MAX_STATES, ExplorationError, StateSpace, divergent_states, explore,
    export_dot, skip_cycle,
)

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

TWO_INPUTS = {"check-trace", "check-fd"}
COMMANDS = ("explore", "check-trace", "check-fd", "check-divergence", "check-determinism", "model-check")


@dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: tuple[str, ...]
    max_states: int = DEFAULT_MAX_STATES
    output_format: str = "text"
    dot_out: str | None = None
    prop_depth: int = 8
    save_space: str | None = None
    load_space: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS and self.command != "differential":
            raise ValueError(f"unknown command {self.command}")
        want = 2 if self.command in TWO_INPUTS else 1
        if self.command != "differential" and len(self.inputs) != want:
            raise ValueError(f"{self.command} takes {want} input file(s), got {len(self.inputs)}")
        if self.max_states < 1 or self.prop_depth < 1:
            raise ValueError("--max-states and --prop-depth must be positive")
        if self.output_format not in ("text", "json"):
            raise ValueError(f"unknown output format {self.output_format}")


class _Report:
    def __init__(self, cfg: RunConfig, out):
        self.cfg, self.out = cfg, out
        self.data: dict = {"command": cfg.command}
        self.lines: list[str] = []

    def emit(self, elapsed_ms: float) -> None:
        if self.cfg.output_format == "json":
            self.data["elapsed_ms"] = round(elapsed_ms, 3)
            print(json.dumps(self.data, indent=2, sort_keys=True), file=self.out)
        else:
            for line in self.lines:
                print(line, file=self.out)
            print(f"time: {elapsed_ms:.1f} ms", file=self.out)


def _space_for(cfg: RunConfig, machine, which_loaded: bool) -> StateSpace:
    if which_loaded and cfg.load_space:
        return StateSpace.load(cfg.load_space)
    return explore(machine, max_states=cfg.max_states)


def _explore(cfg, report):
    m = load_machine(cfg.inputs[0])
    ss = _space_for(cfg, m, True)
    report.data.update(machine=m.name, states=ss.n_states, transitions=ss.n_transitions)
    report.lines.append(f"{ss.n_states} states, {ss.n_transitions} transitions")
    return m, ss, EXIT_OK


def _model_check(cfg, report):
    m, ss, _ = _explore(cfg, report)
    violation = None
    if m.invariant is not None:
        for s in range(ss.n_states):
            if not eval_expr(m.invariant, ss.valuation(s), {}):
                violation = s
                break
    if violation is None:
        report.data["invariant_violation"] = None
        report.lines.append("no invariant violation" if m.invariant is not None else "no invariant declared")
        return m, ss, EXIT_OK
    val = ss.valuation(violation)
    report.data["invariant_violation"] = {"state": violation, "valuation": val}
    report.lines.append("invariant violated in state " + ", ".join(f"{k}={v}" for k, v in val.items()))
    return m, ss, EXIT_FAIL


def _check_pair(cfg, report, checker):
    abstract = load_machine(cfg.inputs[0])
    concrete = load_machine(cfg.inputs[1])
    lmap = LabelMap.from_machines(abstract, concrete)
    abs_ss = _space_for(cfg, abstract, True)
    conc_ss = explore(concrete, max_states=cfg.max_states)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        verdict = checker(abs_ss, conc_ss, lmap)
    report.data.update(verdict.to_json())
    report.data["warnings"] = [str(w.message) for w in caught]
    report.lines.extend(f"warning: {w.message}" for w in caught)
    report.lines.append(verdict.describe())
    return abstract, abs_ss, EXIT_OK if verdict.refines else EXIT_FAIL


def _check_divergence(cfg, report):
    m = load_machine(cfg.inputs[0])
    ss = explore(m, max_states=cfg.max_states)
    skip = frozenset(l for l in ss.labels if l.event in m.new_events)
    div = sorted(divergent_states(ss, skip))
    cycle = skip_cycle(ss, skip, div[0]) if div else None
    report.data.update(divergent_states=len(div), witness_state=div[0] if div else None,
                       cycle=[str(l) for l, _ in cycle] if cycle else [])
    if div:
        report.lines.append(f"{len(div)} divergent state(s); cycle from state {div[0]}: "
                            + " -> ".join(str(l) for l, _ in cycle))
    else:
        report.lines.append("divergence free")
    return m, ss, EXIT_FAIL if div else EXIT_OK


def _check_determinism(cfg, report):
    m = load_machine(cfg.inputs[0])
    ss = explore(m, max_states=cfg.max_states)
    det = is_event_deterministic(ss)
    report.data.update(deterministic=det.deterministic, state=det.state,
                       label=None if det.label is None else str(det.label),
                       successors=list(det.successors or ()))
    if det:
        report.lines.append("event deterministic")
    else:
        report.lines.append(f"not event deterministic: {det.label} from state {det.state} "
                            f"reaches {', '.join(map(str, det.successors))}")
    return m, ss, EXIT_OK if det else EXIT_FAIL


def _differential(cfg, report):
    from .oracle import run_differential

    seed = int(cfg.inputs[0])
    o = run_differential(seed, cfg.prop_depth)
    report.data.update(seed=seed, skipped=o.skipped, abstract_deterministic=o.abstract_deterministic,
                       fd=o.fd_verdict, reason=o.fd_reason, oracle_fd=o.oracle_fd,
                       trace=o.trace_verdict, oracle_trace=o.oracle_trace)
    report.lines.append(json.dumps(report.data, sort_keys=True))
    ok = o.skipped or (o.trace_agrees and (o.fd_agrees or not o.abstract_deterministic))
    return None, None, EXIT_OK if ok else EXIT_FAIL


HANDLERS = {
    "explore": _explore,
    "model-check": _model_check,
    "check-trace": lambda c, r: _check_pair(c, r, check_trace_refinement),
    "check-fd": lambda c, r: _check_pair(c, r, check_failure_divergence),
    "check-divergence": _check_divergence,
    "check-determinism": _check_determinism,
    "differential": _differential,
}


def run(cfg: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    report = _Report(cfg, out)
    t0 = time.perf_counter()
    try:
        machine, ss, status = HANDLERS[cfg.command](cfg, report)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=err)
        return EXIT_ERROR
    except (SpecificationError, ExplorationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_ERROR
    if ss is not None:
        if cfg.dot_out:
            Path(cfg.dot_out).write_text(export_dot(ss))
        if cfg.save_space:
            ss.save(cfg.save_space)
    report.emit((time.perf_counter() - t0) * 1000)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebfdr", description="Explicit-state refinement checker for guarded-event machines.")
    p.add_argument("command", choices=COMMANDS + ("differential",), metavar="command",
                   help="one of: " + ", ".join(COMMANDS))
    p.add_argument("inputs", nargs="+", help="machine file(s); abstract first for check-trace/check-fd")
    p.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES)
    p.add_argument("--output", choices=("text", "json"), default="text")
    p.add_argument("--dot", metavar="PATH", help="write the explored (abstract) state space as DOT")
    p.add_argument("--prop-depth", type=int, default=8)
    p.add_argument("--save-space", metavar="PATH", help="save the explored (abstract) state space as JSON")
    p.add_argument("--load-space", metavar="PATH", help="reuse a saved state space instead of exploring")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    try:
        cfg = RunConfig(args.command, tuple(args.inputs), args.max_states, args.output,
                        args.dot, args.prop_depth, args.save_space, args.load_space)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run(cfg)
