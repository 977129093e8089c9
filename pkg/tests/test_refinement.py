import json
import warnings
from pathlib import Path

import jsonschema
import pytest

from ebfdr.model import LinkError
from ebfdr.oracle import abstract_states_after
from ebfdr.parser import parse_machine
from ebfdr.refinement import (
    VERDICT_SCHEMA, LabelMap, NondeterministicAbstractionWarning, abs_refusal,
    check_failure_divergence, check_trace_refinement, is_event_deterministic, psi, tau,
)
from ebfdr.statespace import EventLabel, enabled, explore, refusal, replays, stable_states
from conftest import corpus, pair

L = EventLabel
GOLDEN = Path(__file__).parent / "golden"
SODA, WATER = L("select_drink", (("drink", "soda"),)), L("select_drink", (("drink", "water"),))

MUTANTS = ["vending_m1", "vending_m1_listing", "vending_m1_skiploop", "vending_m1_no_vend_water",
           "vending_m1_restock_weak", "vending_m1_water_free"]


def test_psi_examples(vending):
    lmap = vending[2]
    assert psi(lmap, L("vend_soda")) == L("vend")
    assert psi(lmap, L("vend_water")) == L("vend")
    assert psi(lmap, L("insert_coin")) == L("insert_coin")
    with pytest.raises(ValueError):
        psi(lmap, SODA)


def test_psi_evaluates_witness():
    a = parse_machine("machine A variables pc : int 0..3; init pc := 0; events "
                      "a =^= any npc : int 0..3 where pc = 0 then pc := npc end end")
    c = parse_machine("machine C refines A variables pc : int 0..3; init pc := 0; events "
                      "a refines a with npc := extra - 4 =^= any extra : int 5..6 where pc = 0 "
                      "then pc := extra - 4 end end")
    lmap = LabelMap.from_machines(a, c)
    assert psi(lmap, L("a", (("extra", 5),))) == L("a", (("npc", 1),))


def test_witness_out_of_domain_is_a_link_error():
    a = parse_machine("machine A variables pc : int 0..3; init pc := 0; events "
                      "a =^= any npc : int 0..3 where pc = 0 then pc := npc end end")
    c = parse_machine("machine C refines A variables pc : int 0..3; init pc := 0; events "
                      "a refines a with npc := extra + 3 =^= any extra : int 0..1 where pc = 0 "
                      "then pc := 0 end end")
    with pytest.raises(LinkError):
        LabelMap.from_machines(a, c)


def test_tau_examples(vending):
    lmap = vending[2]
    assert tau(lmap, [L("insert_coin"), SODA]) == (L("insert_coin"),)
    assert tau(lmap, []) == ()
    assert tau(lmap, [WATER, L("vend_water")]) == (L("vend"),)


def test_abs_refusal_examples(vending):
    lmap = vending[2]
    assert abs_refusal(lmap, {L("vend_water"), L("vend_soda"), L("restock")}) == {L("vend"), L("restock")}
    assert abs_refusal(lmap, {L("restock"), L("vend_soda")}) == {L("restock")}
    assert abs_refusal(lmap, set()) == frozenset()
    with pytest.raises(ValueError):
        abs_refusal(lmap, {SODA})


def test_label_map_is_surjective(vending):
    assert vending[2].surjective
    assert vending[2].preimage(L("vend")) == {L("vend_soda"), L("vend_water")}


def test_enabled_refusal_duality(vending):
    abs_ss, conc_ss, lmap = vending
    skip = lmap.skip_labels(conc_ss)
    sigma_c = lmap.concrete_alphabet
    sigma_a = lmap.abstract_alphabet
    for sc in stable_states(conc_ss, skip):
        image = {psi(lmap, l) for l in enabled(conc_ss, sc)}
        for sa in range(abs_ss.n_states):
            by_enabled = image == enabled(abs_ss, sa)
            by_refusal = abs_refusal(lmap, refusal(conc_ss, sc, sigma_c)) == refusal(abs_ss, sa, sigma_a)
            assert by_enabled == by_refusal


def test_determinism():
    a = is_event_deterministic(explore(corpus("listing_a")))
    assert not a
    assert (a.state, a.label, a.successors) == (0, L("a"), (1, 2))
    assert is_event_deterministic(explore(corpus("listing_adet")))
    assert is_event_deterministic(explore(corpus("vending_m0")))


def test_vending_refines(vending):
    assert check_failure_divergence(*vending).refines
    assert check_trace_refinement(*vending).refines


def test_listings_refine_with_warning():
    with pytest.warns(NondeterministicAbstractionWarning):
        assert check_failure_divergence(*pair("listing_a", "listing_c")).refines
    assert check_trace_refinement(*pair("listing_a", "listing_c")).refines


def test_no_warning_for_deterministic_abstraction(vending):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_failure_divergence(*vending)


@pytest.mark.parametrize("concrete, fd_reason, trace_ok", [
    ("vending_m1_listing", "failure-mismatch", True),
    ("vending_m1_skiploop", "divergence", True),
    ("vending_m1_no_vend_water", "failure-mismatch", True),
    ("vending_m1_restock_weak", "trace-mismatch", False),
    ("vending_m1_water_free", "failure-mismatch", False),
])
def test_mutant_verdicts(concrete, fd_reason, trace_ok):
    fd = check_failure_divergence(*pair("vending_m0", concrete))
    assert (fd.result, fd.reason) == ("fails", fd_reason)
    tr = check_trace_refinement(*pair("vending_m0", concrete))
    assert tr.refines == trace_ok


def test_skiploop_cycle():
    v = check_failure_divergence(*pair("vending_m0", "vending_m1_skiploop"))
    assert v.detail["cycle"] == ["idle"]
    assert len(v.concrete_trace) == 0


def test_water_free_trace_ends_with_unmatched_vend():
    abs_ss, conc_ss, lmap = pair("vending_m0", "vending_m1_water_free")
    v = check_trace_refinement(abs_ss, conc_ss, lmap)
    last = v.concrete_trace.labels[-1]
    assert psi(lmap, last) == L("vend")
    assert v.abstract_trace.labels == tau(lmap, v.concrete_trace.labels[:-1])


def _check_counterexample(v, abs_ss, conc_ss, lmap):
    assert replays(conc_ss, v.concrete_trace) and replays(abs_ss, v.abstract_trace)
    labels = v.concrete_trace.labels
    if v.reason == "trace-mismatch":
        assert v.abstract_trace.labels == tau(lmap, labels[:-1])
        assert not abstract_states_after(abs_ss, tau(lmap, labels))
    else:
        assert v.abstract_trace.labels == tau(lmap, labels)
    skip = lmap.skip_labels(conc_ss)
    last_c, last_a = v.concrete_trace.last, v.abstract_trace.last
    if v.reason == "failure-mismatch":
        assert last_c in stable_states(conc_ss, skip)
        x = refusal(conc_ss, last_c, lmap.concrete_alphabet)
        assert abs_refusal(lmap, x) != refusal(abs_ss, last_a, lmap.abstract_alphabet)
    if v.reason == "divergence":
        from ebfdr.statespace import divergent_states
        assert last_c in divergent_states(conc_ss, skip)


@pytest.mark.parametrize("concrete", MUTANTS)
def test_counterexamples_are_valid(concrete):
    abs_ss, conc_ss, lmap = pair("vending_m0", concrete)
    for check in (check_failure_divergence, check_trace_refinement):
        v = check(abs_ss, conc_ss, lmap)
        if not v.refines:
            _check_counterexample(v, abs_ss, conc_ss, lmap)


@pytest.mark.parametrize("concrete", MUTANTS)
def test_fd_implies_trace(concrete):
    args = pair("vending_m0", concrete)
    if check_failure_divergence(*args).refines:
        assert check_trace_refinement(*args).refines


GOLDEN_CASES = {
    "fd_m0_m1": ("vending_m0", "vending_m1", check_failure_divergence),
    "fd_m0_skiploop": ("vending_m0", "vending_m1_skiploop", check_failure_divergence),
    "fd_m0_no_vend_water": ("vending_m0", "vending_m1_no_vend_water", check_failure_divergence),
    "fd_m0_restock_weak": ("vending_m0", "vending_m1_restock_weak", check_failure_divergence),
    "trace_m0_water_free": ("vending_m0", "vending_m1_water_free", check_trace_refinement),
    "fd_a_c": ("listing_a", "listing_c", check_failure_divergence),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden_verdicts(name):
    a, c, check = GOLDEN_CASES[name]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = check(*pair(a, c))
    got = json.loads(v.dumps())
    jsonschema.validate(got, VERDICT_SCHEMA)
    assert got == json.loads((GOLDEN / f"{name}.json").read_text())


def test_verdict_text():
    v = check_failure_divergence(*pair("vending_m0", "vending_m1_skiploop"))
    assert v.describe().splitlines()[0] == "fails (divergence)"
