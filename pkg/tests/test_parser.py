import pytest
from hypothesis import given, settings, strategies as st

from ebfdr.model import SpecificationError
from ebfdr.oracle import RandomMachineSpec, generate_machine_pair
from ebfdr.parser import ParseError, parse_machine, pretty_print, tokenize
from conftest import CORPUS, corpus

CORPUS_FILES = sorted(CORPUS.glob("*.ebm"))


def test_vending_m0_events(m0):
    assert [e.name for e in m0.events] == ["insert_coin", "vend", "restock"]


def test_adet_has_parameter():
    a = corpus("listing_adet").event("a")
    assert [p.name for p in a.params] == ["npc"]
    assert not a.params[0].internal


def test_internal_parameter():
    a = corpus("listing_a").event("a")
    assert a.params[0].internal
    assert a.visible_params == ()


def test_empty_variables_is_an_error():
    with pytest.raises(ParseError) as info:
        parse_machine("machine m variables end")
    assert "variable" in info.value.message
    assert info.value.span.line == 1


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_round_trip_corpus(path):
    m = parse_machine(path.read_text(), str(path))
    assert parse_machine(pretty_print(m)) == m


def test_round_trip_keeps_event_order(m1):
    again = parse_machine(pretty_print(m1))
    assert [e.name for e in again.events] == [e.name for e in m1.events]


def test_pretty_print_is_canonical(m1):
    text = pretty_print(m1)
    assert pretty_print(parse_machine(text)) == text


def test_precedence_survives_printing():
    src = ("machine t variables x : int 0..5; init x := 0; events "
           "e =^= when (x = 1 \\/ x = 2) /\\ not (x = 3 => x = 4) /\\ x - (1 - x) > 0 "
           "then x := (x + 1) * 2 - x end end")
    m = parse_machine(src)
    assert parse_machine(pretty_print(m)) == m


@pytest.mark.parametrize("src, fragment", [
    ("machine t variables x : int 0..1; x : bool; init x := 0; events end", "duplicate"),
    ("machine t variables x : int 0..1; init x := 0; events e =^= then x := 1 end e =^= then x := 0 end end",
     "duplicate"),
    ("machine t variables x : int 0..1; init x := 0; events e =^= when x = then x := 1 end end", "expected"),
    ("machine t variables x : int 0..1; init x := 0; events e =^= then x := 1 end", "expected"),
    ("machine t variables x : int 0..1; init x := 0 # events end", "unexpected character"),
])
def test_syntax_errors(src, fragment):
    with pytest.raises(ParseError) as info:
        parse_machine(src)
    assert fragment in info.value.message.lower()


def test_error_location_points_into_input():
    src = "machine t\nvariables\n  x : int 0..1;\ninit\n  x := 0;\nevents\n  e =^= when x = then x := 1 end\nend\n"
    with pytest.raises(ParseError) as info:
        parse_machine(src)
    span = info.value.span
    assert (span.line, span.column) == (7, 18)
    assert src.splitlines()[span.line - 1][span.column - 1:].startswith("then")


def test_comments_and_newlines_are_ignored():
    a = parse_machine("machine t // c\r\nvariables x : int 0..1; // d\r\ninit x := 0;\r\nevents end")
    b = parse_machine("machine t variables x : int 0..1; init x := 0; events end")
    assert a == b


TOKENS = ["machine", "refines", "variables", "invariant", "init", "events", "end", "when", "any",
          "where", "then", "with", "int", "enum", "bool", "true", "false", "not", "in", "internal",
          "x", "y", "e", ":", ";", ":=", "=^=", "..", "0", "1", "-", "+", "*", "=", "/=", "<",
          "<=", "/\\", "\\/", "=>", "(", ")", "{", "}", ",", "||"]


def _total(text):
    try:
        parse_machine(text)
    except SpecificationError as exc:
        if isinstance(exc, ParseError):
            assert exc.span.line >= 1 and exc.span.column >= 1
            assert exc.span.line <= text.count("\n") + 1


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=200))
def test_parsing_is_total_on_text(text):
    _total(text)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(TOKENS), max_size=60))
def test_parsing_is_total_on_token_soup(tokens):
    _total(" ".join(tokens))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_parsing_is_total_on_mangled_machines(seed):
    text = pretty_print(generate_machine_pair(RandomMachineSpec.from_seed(seed))[1])
    cut = seed % (len(text) + 1)
    _total(text[:cut] + text[cut + 1 + seed % 3:])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_round_trip_generated(seed):
    for m in generate_machine_pair(RandomMachineSpec.from_seed(seed)):
        assert parse_machine(pretty_print(m)) == m


def test_deep_nesting_is_a_parse_error():
    src = ("machine t variables x : int 0..1; init x := 0; events e =^= when "
           + "(" * 5000 + "x = 0" + ")" * 5000 + " then x := 1 end end")
    with pytest.raises(ParseError):
        parse_machine(src)


def test_tokens_carry_positions():
    toks = tokenize("machine m\n  variables")
    assert [(t.text, t.span.line, t.span.column) for t in toks[:3]] == [
        ("machine", 1, 1), ("m", 1, 9), ("variables", 2, 3)]
