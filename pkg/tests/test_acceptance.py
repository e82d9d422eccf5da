"""Acceptance gate: eight end-to-end criteria, one PASS/FAIL line each."""

from __future__ import annotations

import json
import random
import re
import time
from pathlib import Path

import pytest

from oracles import brute_force_met, tree_distance
from spvr.corpus import BUCKETS, MetStats, ingest
from spvr.extract import ExtractionStatus, extract_patch, reparses_to
from spvr.gateway import MockAdapter
from spvr.met import compute_edit_spans, find_met, get_minimum_tree, locate_met_online, span_for_lines
from spvr.metrics import LabeledTree, codebleu, edit_distance_rate, pass_at_k, perfect_patch, tree_edit_distance
from spvr.pipeline import RunConfig, prepare_sample, run_eval, run_repair
from spvr.prompts import CWE_SENTENCE, assemble_prompts
from spvr.rules import CheckId, run_rules
from spvr.syntax import parse_code
from synth import ground_truth_script, random_pair, random_records, templated_records, to_jsonl
from test_extract import CASES


@pytest.fixture
def report(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return emit


def _key(node):
    return None if node is None else (node.kind, node.start, node.end)


def test_1_met_oracle_equivalence(report):
    t0 = time.perf_counter()
    cases = mismatches = 0
    for seed in range(240):
        vuln, fixed = random_pair(10_000 + seed, hunks=1 + seed % 3)
        v_tree, f_tree = parse_code(vuln), parse_code(fixed)
        v_spans, f_spans = compute_edit_spans(v_tree.unit, f_tree.unit)
        checks = [
            (_key(get_minimum_tree(v_tree.root, v_spans)), brute_force_met(vuln, [s.byte_range for s in v_spans])),
            (_key(get_minimum_tree(f_tree.root, f_spans)), brute_force_met(fixed, [s.byte_range for s in f_spans])),
            (_key(locate_met_online(v_tree, v_spans[0])), brute_force_met(vuln, [v_spans[0].byte_range])),
        ]
        cases += 1
        mismatches += sum(got != want for got, want in checks)
    elapsed = time.perf_counter() - t0
    report(1, "MET oracle equivalence", mismatches == 0 and cases >= 200 and elapsed < 60,
           f"{cases} functions, {mismatches} mismatches, {elapsed:.1f}s")


def test_2_case_study(report, case_trees, case_vuln):
    v_tree, f_tree = case_trees
    online = locate_met_online(v_tree, span_for_lines(case_vuln, 14, 14))
    met = find_met(v_tree, f_tree).met
    findings = run_rules(met, v_tree)
    bundles = assemble_prompts("arp", "CWE-119", met, v_tree, findings)
    ok = (
        online.kind == "if_statement" and met.met_type == "if_statement"
        and findings[0].check_id is CheckId.POSSIBLE_VARIABLE_USE
        and findings[0].referenced_symbols[0] == "e->next_offset"
        and findings[1].check_id is CheckId.CONDITION
        and set(findings[1].referenced_symbols) <= {"<", "<=", ">", ">="}
        and 1 <= len(bundles) <= 3
        and len({b.cwe_part for b in bundles}) == 1 and len({b.regen_code for b in bundles}) == 1
    )
    report(2, "case-study regression", ok,
           f"MET {met.met_type}, findings {[f.check_id.value for f in findings]}, {len(bundles)} prompts")


def test_3_statistics_fixture(report):
    stats = MetStats.from_counts((180, 68, 96, 98, 33, 72, 137, 207))
    want = [20.20, 7.63, 10.77, 11.00, 3.70, 8.08, 15.38, 23.23]
    got = [stats.percentages[b] for b in BUCKETS]
    ok = (
        all(abs(g - w) <= 0.01 for g, w in zip(got, want))
        and abs(stats.coverage - 61.39) <= 0.01 and abs(stats.same_type_share - 76.77) <= 0.01
    )
    report(3, "statistics fixture", ok,
           f"{[round(g, 2) for g in got]}, coverage {stats.coverage:.2f}%, same-type {stats.same_type_share:.2f}%")


def _random_tree(rng: random.Random, size: int) -> LabeledTree:
    nodes = [[rng.choice("abcd"), []] for _ in range(size)]
    for i in range(1, size):
        nodes[rng.randrange(i)][1].append(nodes[i])

    def build(n):
        return LabeledTree(n[0], tuple(build(c) for c in n[1]))

    return build(nodes[0])


def _tuple(t: LabeledTree) -> tuple:
    return (t.label, tuple(_tuple(c) for c in t.children))


def _perturb(code: str, rng: random.Random) -> str:
    out = []
    for line in code.splitlines():
        parts = re.split(r'("(?:\\.|[^"\\])*")', line)
        line = "".join(p if p.startswith('"') else p.replace(" ", " " * rng.randint(1, 3)) for p in parts)
        out.append(rng.choice(["", "\t", "    "]) + line + rng.choice(["", " ", "\t"]))
        if rng.random() < 0.3:
            out.append(rng.choice(["", "   ", "\t"]))
    return "\n".join(out)


def test_4_metric_identities(report):
    recs = templated_records(25)
    fixtures = [r[k] for r in recs for k in ("vuln_code", "fixed_code")]
    identity_bad = sum(abs(codebleu(x, x).total - 1.0) > 1e-9 for x in fixtures)
    rng = random.Random(4)
    ted_bad = 0
    for _ in range(100):
        a, b = _random_tree(rng, rng.randint(1, 12)), _random_tree(rng, rng.randint(1, 12))
        ted_bad += tree_edit_distance(a, b) != tree_distance(_tuple(a), _tuple(b))
    perfect_bad = sum(not perfect_patch(_perturb(x, rng), x) for x in fixtures)
    ok = len(fixtures) == 50 and identity_bad == ted_bad == perfect_bad == 0
    report(4, "metric identities", ok,
           f"codebleu identity failures {identity_bad}/50, TED mismatches {ted_bad}/100, "
           f"perfect-patch failures {perfect_bad}/50")


def test_5_aggregation(report):
    rng = random.Random(5)
    matrix = [[False] * 3 for _ in range(547)]
    for row in rng.sample(matrix, 143):
        row[rng.randrange(3)] = True
    count, rate = pass_at_k(matrix, 3)
    distances = [rng.randint(0, 4) for _ in range(435)] + [rng.randint(5, 30) for _ in range(112)]
    ed = edit_distance_rate(distances, threshold=5)
    ok = count == 143 and abs(rate * 100 - 26.14) <= 0.01 and round(ed * 100, 1) == 79.5
    report(5, "aggregation fidelity", ok, f"pass@3 {count}/547 = {rate * 100:.2f}%, edit-distance rate {ed * 100:.1f}%")


def _e2e(tmp: Path, corpus: Path, script: dict, tag: str) -> tuple[float, list[bytes]]:
    (tmp / f"{tag}.json").write_text(json.dumps(script))
    cfg = RunConfig.from_dict({"corpus": str(corpus), "output_dir": str(tmp / tag), "mock_script": str(tmp / f"{tag}.json"),
                               "model": {"samples_per_prompt": 1}, "k": 1})
    art = run_repair(cfg)
    rep = run_eval(art.candidates, art.truth, k=1, out_dir=tmp / tag)
    blobs = [(tmp / tag / n).read_bytes() for n in ("prompts.jsonl", "candidates.jsonl", "report.json", "report.csv")]
    return rep.pass_rate, blobs


def test_6_mock_end_to_end(report, tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    corpus.write_text(to_jsonl(templated_records(20)))
    truth_script = ground_truth_script(corpus.read_text())
    unrelated = {".*": ["```c\nint unrelated = 0;\n```"]}
    truth_a, blobs_a = _e2e(tmp_path, corpus, truth_script, "truth_a")
    truth_b, blobs_b = _e2e(tmp_path, corpus, truth_script, "truth_b")
    other_a, other_blobs_a = _e2e(tmp_path, corpus, unrelated, "other_a")
    other_b, other_blobs_b = _e2e(tmp_path, corpus, unrelated, "other_b")
    ok = truth_a == truth_b == 1.0 and other_a == other_b == 0.0 and blobs_a == blobs_b \
        and other_blobs_a == other_blobs_b
    report(6, "mock end-to-end", ok,
           f"ground truth pass@1 {truth_a:.0%}, unrelated pass@1 {other_a:.0%}, "
           f"deterministic {blobs_a == blobs_b and other_blobs_a == other_blobs_b}")


def test_7_prompt_contract(report):
    corpus = ingest(to_jsonl(templated_records(30) + random_records(150, seed=7)))
    cfg = RunConfig()
    supported = violations = 0
    for sample in corpus:
        prep = prepare_sample(sample, cfg)
        if prep.reason is not None:
            continue
        supported += 1
        source = sample.vuln.text
        b0 = prep.bundles[0]
        bad = not 1 <= len(prep.bundles) <= 3
        bad |= any(not CWE_SENTENCE.fullmatch(b.cwe_part) or b.cwe_part != b0.cwe_part
                   or b.regen_code != b0.regen_code for b in prep.bundles)
        bad |= any(line not in source for line in b0.regen_code.splitlines())
        violations += bad
    report(7, "prompt contract", violations == 0 and supported > 0,
           f"{supported} supported samples, {violations} violations")


def test_8_extraction_robustness(report):
    wrong = bad_reparse = 0
    for raw, met_type, status, code in CASES:
        cand = extract_patch(raw, met_type)
        wrong += (cand.extraction_status, cand.code) != (status, code)
        if cand.extraction_status is not ExtractionStatus.FAILED:
            bad_reparse += not reparses_to(cand.code, met_type)
    report(8, "extraction robustness", len(CASES) >= 30 and wrong == 0 and bad_reparse == 0,
           f"{len(CASES)} cases, {wrong} unexpected statuses, {bad_reparse} failed reparses")
