from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spvr.errors import ParseFailure, SpanOutOfRange, UnknownKind
from spvr.syntax import (
    Language, SourceUnit, Supertype, is_known_kind, is_subtype_of, parse, parse_code,
    strip_comments, taxonomy, to_plain_code,
)


def test_parse_minimal_function():
    tree = parse_code("int f(){return 0;}")
    assert [c.kind for c in tree.root.named_children] == ["function_definition"]
    assert not tree.degraded


def test_parse_empty_is_failure():
    with pytest.raises(ParseFailure):
        parse_code("")
    with pytest.raises(ParseFailure):
        parse_code("   \n")


def test_case_study_has_if_over_limit(case_trees):
    v_tree, _ = case_trees
    ifs = v_tree.root.find_all("if_statement")
    conds = [i.child_by_field("condition").text for i in ifs]
    assert any("limit" in c for c in conds)


def test_root_spans_whole_text(case_vuln, case_trees):
    v_tree, _ = case_trees
    assert v_tree.root.span == (0, len(case_vuln.data))
    assert to_plain_code(v_tree.root, case_vuln) == case_vuln.text


def test_child_spans_nested_and_ordered(case_trees):
    for node in case_trees[0].walk():
        prev_end = node.start
        for c in node.children:
            assert node.start <= c.start <= c.end <= node.end
            assert c.start >= prev_end
            prev_end = c.end


def test_fragment_spans_map_to_original_text():
    unit = SourceUnit("x = y + 1;\nfoo(x);", Language.C)
    tree = parse(unit)
    call = tree.root.first("call_expression")
    assert to_plain_code(call, unit) == "foo(x)"
    assign = tree.root.first("assignment_expression")
    assert to_plain_code(assign, unit) == "x = y + 1"
    assert call.start_line == 2


def test_bare_expression_is_wrapped():
    unit = SourceUnit("a = b", Language.C)
    tree = parse(unit)
    assert tree.wrapped and not tree.degraded
    assert tree.root.span == (0, 5)
    assert [c.kind for c in tree.root.children] == ["assignment_expression"]


def test_number_literal_slice():
    unit = SourceUnit("int a = 42;", Language.C)
    lit = parse(unit).root.first("number_literal")
    assert to_plain_code(lit, unit) == "42"


def test_to_plain_code_out_of_range():
    unit = SourceUnit("int a = 42;", Language.C)
    other = parse_code("int a = 42; int b = 1234567;").root
    with pytest.raises(SpanOutOfRange):
        to_plain_code(other, unit)


def test_case_study_if_slice(case_vuln, case_trees):
    first_if = case_trees[0].root.first("if_statement")
    text = to_plain_code(first_if, case_vuln)
    assert text.startswith("if (") and text.endswith("}") and ">= limit" in text


def test_strip_line_comment():
    assert strip_comments(SourceUnit("int a; // x", Language.C)).text == "int a; "


def test_strip_block_comment():
    out = strip_comments(SourceUnit("int /*k*/ a;", Language.C))
    assert out.text == "int   a;"
    assert parse(out).root.first("comment") is None


def test_strip_no_comments_identity():
    src = "int f(int a) { return a + 1; }\n"
    assert strip_comments(SourceUnit(src, Language.C)).text == src


def test_strip_idempotent(case_vuln):
    once = strip_comments(case_vuln)
    assert "Check hooks" not in once.text
    assert strip_comments(once).text == once.text


@pytest.mark.parametrize("kind,sup,expected", [
    ("if_statement", Supertype.STATEMENT, True),
    ("call_expression", Supertype.EXPRESSION, True),
    ("translation_unit", Supertype.EXPRESSION, False),
    ("declaration", Supertype.STATEMENT, True),
    ("function_definition", Supertype.STATEMENT, True),
    ("assignment_expression", Supertype.EXPRESSION, True),
    ("number_literal", Supertype.EXPRESSION, False),
    ("compound_statement", Supertype.STATEMENT, False),
])
def test_is_subtype_of(kind, sup, expected):
    assert is_subtype_of(kind, sup) is expected


def test_is_subtype_of_unknown_kind():
    with pytest.raises(UnknownKind):
        is_subtype_of("no_such_kind", Supertype.STATEMENT)
    assert not is_known_kind("no_such_kind")


@pytest.mark.parametrize("lang", [Language.C, Language.CPP])
def test_taxonomy_invariants(lang):
    tax = taxonomy(lang)
    assert {"if_statement", "for_statement", "declaration", "function_definition"} <= tax.statement_kinds
    assert {"assignment_expression", "call_expression"} <= tax.expression_kinds
    assert not tax.expression_kinds & tax.statement_kinds


def test_cpp_parses_cpp_constructs():
    tree = parse_code("int g() { auto p = new int[4]; delete[] p; return 0; }", Language.CPP)
    assert tree.root.first("new_expression") is not None
    assert is_subtype_of("new_expression", Supertype.EXPRESSION, Language.CPP)


def test_language_aliases():
    assert Language.from_name("c++") is Language.CPP
    assert Language.from_name("C") is Language.C


_snippets = st.sampled_from([
    "int f(int a) { return a * 2; }",
    "void g(char *s) { if (s) { s[0] = 0; } }",
    "x = y + 1;",
    "for (i = 0; i < n; i++) sum += v[i];",
    "struct s { int a; };\nint h(struct s *p) { return p->a; }",
])


@settings(max_examples=30, deadline=None)
@given(_snippets, st.sampled_from(["", "\n", "\n\n"]))
def test_round_trip_shape(src, pad):
    unit = SourceUnit(pad + src, Language.C)
    tree = parse(unit)
    again = parse(SourceUnit(to_plain_code(tree.root, unit), Language.C))
    assert again.root.shape() == tree.root.shape()
    for node in tree.walk():
        assert not (is_subtype_of(node.kind, Supertype.EXPRESSION) and is_subtype_of(node.kind, Supertype.STATEMENT)) \
            if is_known_kind(node.kind) else True
