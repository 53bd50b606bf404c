"""Query dialect: grammar examples, canonical rendering, repair rules,
and moderate-size property checks (the full 10^4-case runs live in the
acceptance suite)."""
import random

import pytest

from bioqa import query as q
from bioqa.query import (
    And,
    Field,
    Group,
    IrreparableQueryError,
    Not,
    Or,
    ParseError,
    Phrase,
    RepairAction,
    Term,
    ast_depth,
    parse_query,
    render_query,
    repair_query,
)
from gen_queries import fuzz_text, random_ast


class TestParse:
    def test_spec_example_grouped_or_and(self):
        ast = parse_query('("night blindness" OR nyctalopia) AND retinitis')
        assert ast == And((
            Group(Or((Phrase("night blindness"), Term("nyctalopia")))),
            Term("retinitis"),
        ))

    def test_single_term(self):
        assert parse_query("aspirin") == Term("aspirin")

    def test_unbalanced_paren_position(self):
        with pytest.raises(ParseError) as err:
            parse_query("covid AND (vaccine")
        assert err.value.code == "UnbalancedParen"
        assert err.value.pos == 10

    def test_unbalanced_quote_position(self):
        with pytest.raises(ParseError) as err:
            parse_query('covid "vaccine')
        assert err.value.code == "UnbalancedQuote"
        assert err.value.pos == 6

    def test_empty_group(self):
        with pytest.raises(ParseError) as err:
            parse_query("a AND ()")
        assert err.value.code == "EmptyGroup"

    def test_unknown_field(self):
        with pytest.raises(ParseError) as err:
            parse_query("ti:covid")
        assert err.value.code == "UnknownField"
        assert err.value.pos == 0

    def test_depth_cap(self):
        deep = "(" * 40 + "a" + ")" * 40
        with pytest.raises(ParseError) as err:
            parse_query(deep)
        assert err.value.code == "DepthExceeded"

    def test_implicit_adjacency_is_and(self):
        assert parse_query("covid vaccine") == And((Term("covid"), Term("vaccine")))

    def test_default_operator_flag(self):
        assert parse_query("covid vaccine", default_operator="OR") == \
            Or((Term("covid"), Term("vaccine")))
        # explicit AND still wins under OR default
        assert parse_query("covid AND vaccine", default_operator="OR") == \
            And((Term("covid"), Term("vaccine")))

    def test_operators_are_case_sensitive(self):
        # lowercase "and" is a plain term joined by adjacency
        assert parse_query("covid and vaccine") == \
            And((Term("covid"), Term("and"), Term("vaccine")))

    def test_field_forms(self):
        assert parse_query('title:"heart failure"') == Field("title", Phrase("heart failure"))
        assert parse_query("abstract:(a OR b)") == \
            Field("abstract", Group(Or((Term("a"), Term("b")))))

    def test_not_nesting(self):
        assert parse_query("NOT NOT covid") == Not(Not(Term("covid")))

    def test_unsupported_syntax_rejected(self):
        for text in ("fever~2", "boost^2", "wild*", "que?tion", "[1 TO 2]", ": x"):
            with pytest.raises(ParseError):
                parse_query(text)

    def test_empty_query(self):
        for text in ("", "   "):
            with pytest.raises(ParseError) as err:
                parse_query(text)
            assert err.value.code == "EmptyQuery"

    def test_phrase_escapes(self):
        assert parse_query(r'"say \"hi\""') == Phrase('say "hi"')


class TestRender:
    def test_and_of_or_needs_parens(self):
        ast = And((Term("a"), Or((Term("b"), Term("c")))))
        assert render_query(ast) == "a AND (b OR c)"

    def test_term(self):
        assert render_query(Term("aspirin")) == "aspirin"

    def test_field_phrase(self):
        assert render_query(Field("title", Phrase("heart failure"))) == 'title:"heart failure"'

    def test_or_of_and_no_parens(self):
        ast = Or((And((Term("a"), Term("b"))), Term("c")))
        assert render_query(ast) == "a AND b OR c"

    def test_not_rendering(self):
        assert render_query(Not(Term("a"))) == "NOT a"
        assert render_query(Not(And((Term("a"), Term("b"))))) == "NOT (a AND b)"

    def test_group_preserved(self):
        assert render_query(Group(Term("a"))) == "(a)"

    def test_phrase_quote_escaping(self):
        assert render_query(Phrase('say "hi"')) == r'"say \"hi\""'


class TestRepair:
    def test_balance_paren(self):
        text, log = repair_query("covid AND (vaccine")
        assert text == "covid AND (vaccine)"
        assert log.actions == (RepairAction.BALANCED_PAREN,)

    def test_fixed_point(self):
        text, log = repair_query("aspirin")
        assert text == "aspirin"
        assert log.actions == ()

    def test_unknown_field_with_unbalanced_quote(self):
        text, log = repair_query('ti:"heart')
        assert text == '"heart"'
        assert set(log.actions) == {RepairAction.DROPPED_UNSUPPORTED_TOKEN,
                                    RepairAction.BALANCED_QUOTE}

    def test_wildcards_and_boosts_stripped(self):
        text, log = repair_query("covid* AND boost^2 fever~1.5")
        assert text == "covid AND boost AND fever"
        assert RepairAction.DROPPED_UNSUPPORTED_TOKEN in log.actions
        assert RepairAction.DEFAULTED_OPERATOR in log.actions

    def test_empty_group_collapsed(self):
        text, log = repair_query("covid AND ()")
        assert text == "covid"
        assert RepairAction.COLLAPSED_EMPTY_GROUP in log.actions

    def test_stray_closer_dropped(self):
        text, log = repair_query(") covid")
        assert text == "covid"
        assert RepairAction.BALANCED_PAREN in log.actions

    def test_dangling_operators_removed(self):
        text, _ = repair_query("AND covid OR")
        assert text == "covid"

    def test_irreparable_when_no_atom_survives(self):
        for text in ("", "() ()", "*?~", "AND OR NOT"):
            with pytest.raises(IrreparableQueryError):
                repair_query(text)

    def test_depth_overflow_salvaged_to_and_of_atoms(self):
        deep = "(" * 40 + "covid vaccine" + ")" * 40
        text, log = repair_query(deep)
        parse_query(text)
        assert "covid" in text and "vaccine" in text

    def test_log_invariant(self):
        with pytest.raises(ValueError):
            q.RepairLog(original="a", repaired="a", actions=(RepairAction.BALANCED_QUOTE,))
        with pytest.raises(ValueError):
            q.RepairLog(original="a", repaired="b", actions=())


class TestProperties:
    N = 2000  # the acceptance suite runs the full 10^4 sweeps

    def test_round_trip(self):
        rng = random.Random(1349)
        for i in range(self.N):
            ast = random_ast(rng)
            if ast_depth(ast) > q.MAX_DEPTH:
                continue
            rendered = render_query(ast)
            assert parse_query(rendered) == ast, f"case {i}: {rendered!r}"

    def test_repair_idempotent_and_sound(self):
        rng = random.Random(727)
        for i in range(self.N):
            text = fuzz_text(rng)
            try:
                repaired, _ = repair_query(text)
            except IrreparableQueryError:
                continue
            parse_query(repaired)  # soundness
            again, log2 = repair_query(repaired)
            assert again == repaired, f"case {i}: {text!r} -> {repaired!r} -> {again!r}"
            assert log2.actions == ()

    def test_parser_totality(self):
        rng = random.Random(31415)
        for _ in range(self.N):
            text = fuzz_text(rng)
            try:
                parse_query(text)
            except ParseError:
                pass  # the only acceptable failure mode
