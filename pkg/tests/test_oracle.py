import pytest
from hypothesis import given, settings, strategies as st

from ebfdr.model import validate_machine, build_refinement_link
from ebfdr.oracle import (
    RandomMachineSpec, check_prop1, check_prop2, generate_machine_pair, oracle_divergence_free,
    oracle_failure_refines, oracle_trace_refines, run_differential,
)
from ebfdr.parser import parse_machine
from ebfdr.refinement import LabelMap, abs_refusal, tau
from ebfdr.statespace import (
    BoundExceeded, EventLabel, explore, failures, iter_traces, skip_labels_for,
)
from conftest import pair

L = EventLabel


def test_vending(vending):
    assert oracle_trace_refines(*vending, k=6)
    assert oracle_failure_refines(*vending, k=6)
    assert oracle_trace_refines(*vending)
    assert oracle_failure_refines(*vending)
    assert check_prop1(*vending)
    assert check_prop2(*vending, k=8)


def test_depth_zero_is_vacuous():
    args = pair("vending_m0", "vending_m1_restock_weak")
    assert oracle_trace_refines(*args, k=0)
    assert check_prop2(*pair("listing_a", "listing_c"), k=0)


def test_weakened_restock_shortest_trace():
    r = oracle_trace_refines(*pair("vending_m0", "vending_m1_restock_weak"))
    assert not r
    assert r.counterexample == (L("insert_coin"), L("restock"))


def test_listings_failure_refine_but_prop2_fails():
    args = pair("listing_a", "listing_c")
    assert oracle_failure_refines(*args, k=4)
    r = check_prop2(*args, k=8)
    assert not r and r.counterexample == (L("a"), L("b"))


def test_root_refusal_mismatch():
    a = parse_machine("machine A variables x : int 0..1; init x := 0; events "
                      "go =^= when x = 0 then x := 1 end end")
    c = parse_machine("machine C refines A variables x : int 0..1; init x := 0; events "
                      "go refines go =^= when x = 1 then x := 1 end end")
    r = oracle_failure_refines(explore(a), explore(c), LabelMap.from_machines(a, c))
    assert not r
    sigma, refused, abstract_sigma, abs_refused = r.counterexample
    assert sigma == () and abs_refused == {L("go")}


SKIP_CHAIN = """machine C refines A variables x : int 0..2; init x := 0; events
  go refines go =^= when x = 0 then x := 0 end
  {skips} end"""


@pytest.mark.parametrize("skips, cycle_len", [
    ("tick =^= when true then x := x end", 1),
    ("tick =^= when x < 2 then x := x + 1 end tock =^= when x = 2 then x := 0 end", 3),
])
def test_divergence_witness_length(skips, cycle_len):
    c = parse_machine(SKIP_CHAIN.format(skips=skips))
    ss = explore(c)
    r = oracle_divergence_free(ss, skip_labels_for(ss, c.new_events))
    assert not r and len(r.counterexample) == cycle_len
    cur = r.counterexample[-1][1]
    for label, dst in r.counterexample:
        assert dst in ss.successors_by(cur, label)
        cur = dst


def test_m1_divergence_free(m1, m1_space):
    assert oracle_divergence_free(m1_space, skip_labels_for(m1_space, m1.new_events))


def test_prop1_skipped_when_divergent():
    r = check_prop1(*pair("vending_m0", "vending_m1_skiploop"))
    assert r and r.skipped


def test_prop1_vacuous_without_skips():
    r = check_prop1(*pair("listing_a", "listing_c"))
    assert r and not r.skipped


def _literal_failure_refines(abs_ss, conc_ss, lmap, k):
    """Full enumeration of failures(C) to depth k, tested against failures(A)."""
    skip = lmap.skip_labels(conc_ss)
    abstract = failures(abs_ss, (), lmap.abstract_alphabet, k)
    return all((tau(lmap, s), abs_refusal(lmap, x)) in abstract
               for s, x in failures(conc_ss, skip, lmap.concrete_alphabet, k))


def _literal_trace_refines(abs_ss, conc_ss, lmap, k):
    abstract = {s for s, _ in iter_traces(abs_ss, k)}
    return all(tau(lmap, s) in abstract for s, _ in iter_traces(conc_ss, k))


@pytest.mark.parametrize("concrete", ["vending_m1", "vending_m1_listing", "vending_m1_no_vend_water",
                                      "vending_m1_restock_weak", "vending_m1_water_free"])
@pytest.mark.parametrize("k", [2, 4, 6])
def test_pruned_enumeration_matches_literal(concrete, k):
    args = pair("vending_m0", concrete)
    assert bool(oracle_failure_refines(*args, k=k)) == _literal_failure_refines(*args, k)
    assert bool(oracle_trace_refines(*args, k=k)) == _literal_trace_refines(*args, k)


@pytest.mark.parametrize("seed", range(40))
def test_pruned_enumeration_matches_literal_random(seed):
    a, c = generate_machine_pair(RandomMachineSpec.from_seed(seed))
    try:
        args = explore(a, 60), explore(c, 60), LabelMap.from_machines(a, c)
    except BoundExceeded:
        pytest.skip("large pair")
    for k in (1, 3, 5):
        assert bool(oracle_failure_refines(*args, k=k)) == _literal_failure_refines(*args, k)
        assert bool(oracle_trace_refines(*args, k=k)) == _literal_trace_refines(*args, k)


def test_generator_is_deterministic():
    s = RandomMachineSpec.from_seed(1)
    assert generate_machine_pair(s) == generate_machine_pair(s)
    assert RandomMachineSpec.from_seed(1) == s


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_generated_pairs_are_valid(seed):
    a, c = generate_machine_pair(RandomMachineSpec.from_seed(seed))
    assert validate_machine(a) == [] and validate_machine(c) == []
    link = build_refinement_link(a, c)
    assert LabelMap(link).surjective


def test_spec_ranges_are_checked():
    with pytest.raises(ValueError):
        RandomMachineSpec(0, n_vars=4)
    with pytest.raises(ValueError):
        RandomMachineSpec(0, n_abstract_events=3, n_concrete_events=2)


def test_generator_covers_all_outcomes():
    reasons = {run_differential(seed).fd_reason for seed in range(200)}
    assert reasons >= {None, "divergence", "failure-mismatch", "trace-mismatch"}


@pytest.mark.parametrize("seed", range(100))
def test_differential_sample(seed):
    o = run_differential(seed)
    if o.skipped:
        assert o.skipped == "state bound"
        return
    assert o.trace_agrees
    if o.abstract_deterministic:
        assert o.fd_agrees
    if o.fd_verdict == "refines":
        assert o.trace_verdict
