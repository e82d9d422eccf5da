from __future__ import annotations

import re

import pytest

from spvr.errors import UnknownCwe, UnsupportedMetType
from spvr.met import find_met
from spvr.prompts import (
    CWE_SENTENCE, PromptConfig, PromptVariant, assemble_prompts, cwe_info, cwe_table, default_keep_vars,
    regenerate_code,
)
from spvr.rules import CheckId, RuleFinding, run_rules
from spvr.syntax import parse_code
from synth import _if_pair, templated_records


def test_cwe_table_has_25_ranked_entries():
    table = cwe_table()
    assert len(table) == 25
    assert sorted(e.rank for e in table.values()) == list(range(1, 26))
    assert table["CWE-787"].rank == 1


def test_cwe_info_exact_sentence():
    assert cwe_info("CWE-125", "if_statement") == "This if_statement has a problem of Out-of-bounds Read."
    text = cwe_info("CWE-119", "if_statement")
    assert "Improper Restriction of Operations within the Bounds of a Memory Buffer" in text
    assert CWE_SENTENCE.match(text)


def test_cwe_info_unknown():
    with pytest.raises(UnknownCwe):
        cwe_info("CWE-9999", "if_statement")


def test_if_regen_keeps_log_and_return_only():
    vuln, _, _ = _if_pair(0)
    tree = parse_code(vuln)
    met = tree.root.first("if_statement")
    regen = regenerate_code(tree, met, default_keep_vars(met, tree))
    # hand-applied predicate: log_error has a string literal, return -1 is a
    # return, "used_0 = 0;" mentions no kept variable
    assert 'log_error("bad length %u", p_0->len_0);' in regen
    assert "return -1;" in regen
    assert "used_0 = 0" not in regen
    assert regen.splitlines()[0].strip().startswith("if (p_0->len_0 > limit_0)")


def test_regen_lines_occur_in_source(case_trees):
    v_tree, f_tree = case_trees
    met = find_met(v_tree, f_tree).met
    regen = regenerate_code(v_tree, met, default_keep_vars(met, v_tree))
    for line in regen.splitlines():
        assert line in v_tree.unit.text
    assert "duprintf" in regen and "return -EINVAL;" in regen


def test_def_regen_is_prefix_of_function():
    tree = parse_code("static int helper(int a, int b)\n{\n\treturn a / b;\n}\n")
    met = tree.root.first("function_definition")
    assert regenerate_code(tree, met) == tree.unit.text.rstrip("\n")
    short = regenerate_code(tree, met, budget=40)
    assert tree.unit.text.startswith(short) and len(short) <= 40


def test_final_statement_regen_equals_met():
    tree = parse_code("void f(char *d, char *s)\n{\n\tg(d);\n\tstrcpy(d, s);\n}\n")
    met = tree.root.find_all("call_expression")[1]
    assert regenerate_code(tree, met) == "strcpy(d, s)"


def test_assignment_regen_includes_following_code():
    tree = parse_code("void f(void)\n{\n\tx = 1;\n\ty = x;\n\treturn;\n}\n")
    met = tree.root.first("assignment_expression")
    assert regenerate_code(tree, met) == "x = 1;\n\ty = x;\n\treturn;"


def _bundles(rec: dict, **kw):
    tree = parse_code(rec["vuln_code"])
    met = find_met(tree, parse_code(rec["fixed_code"])).met
    return assemble_prompts(rec["id"], rec["cwe_id"], met, tree, run_rules(met, tree), **kw), met, tree


def test_case_study_bundles(case_trees):
    v_tree, f_tree = case_trees
    met = find_met(v_tree, f_tree).met
    bundles = assemble_prompts("arp", "CWE-119", met, v_tree, run_rules(met, v_tree))
    assert [b.ordinal for b in bundles] == list(range(1, len(bundles) + 1))
    assert "e->next_offset" in bundles[0].met_part
    assert "binary operator" in bundles[1].met_part
    assert bundles[0].check_id == "PossibleVariableUse" and bundles[1].check_id == "Condition"


@pytest.mark.parametrize("rec", templated_records(6), ids=lambda r: r["expected_met"])
def test_bundle_invariants(rec):
    bundles, met, _ = _bundles(rec)
    assert 1 <= len(bundles) <= 3
    assert len({b.cwe_part for b in bundles}) == 1 and len({b.regen_code for b in bundles}) == 1
    for b in bundles:
        text = b.assembled
        assert CWE_SENTENCE.match(b.cwe_part)
        for part in (b.cwe_part, b.met_part, b.regen_code):
            assert text.count(part) == 1
        assert text.index(b.cwe_part) < text.index(b.met_part) < text.index(b.regen_code)
        assert f"Return only the fixed {met.met_type}" in text


def test_zero_findings_gives_one_fallback():
    tree = parse_code("void h(int a)\n{\n\tfor (;;)\n\t\tg(a);\n}\n")
    met = tree.root.first("for_statement")
    bundles = assemble_prompts("z", "CWE-20", met, tree, [])
    assert len(bundles) == 1 and bundles[0].check_id is None
    assert "Re-examine this for_statement" in bundles[0].met_part


def test_five_findings_capped_at_three():
    tree = parse_code("void h(void)\n{\n\tx = y;\n}\n")
    met = tree.root.first("assignment_expression")
    findings = [RuleFinding(CheckId.NUMBER_LITERAL, f"directive {i}") for i in range(5)]
    bundles = assemble_prompts("c", "CWE-20", met, tree, findings)
    assert [b.ordinal for b in bundles] == [1, 2, 3]


def test_unsupported_met_type():
    tree = parse_code("void h(void)\n{\n\twhile (x)\n\t\tg();\n}\n")
    with pytest.raises(UnsupportedMetType):
        assemble_prompts("w", "CWE-20", tree.root.first("while_statement"), tree, [])


@pytest.mark.parametrize("variant", list(PromptVariant))
def test_variants(variant):
    rec = templated_records(1)[0]
    bundles, _, _ = _bundles(rec, cfg=PromptConfig(variant=variant))
    text = bundles[0].assembled
    has_cwe = re.search(r"has a problem of", text) is not None
    assert has_cwe is (variant in (PromptVariant.FULL, PromptVariant.WITHOUT_MET))
    if variant in (PromptVariant.WITHOUT_MET, PromptVariant.SOLE):
        assert len(bundles) == 1 and bundles[0].met_part == ""
    assert not text.startswith("\n")


def test_prompt_determinism():
    rec = templated_records(3)[2]
    a, _, _ = _bundles(rec)
    b, _, _ = _bundles(rec)
    assert [x.assembled for x in a] == [x.assembled for x in b]
