from __future__ import annotations

import pytest

from spvr.extract import ExtractionStatus, extract_patch, fenced_blocks, reparses_to

E, F, X = ExtractionStatus.EXACT, ExtractionStatus.FENCE_STRIPPED, ExtractionStatus.FAILED

IF = "if_statement"
ASS = "assignment_expression"
CALL = "call_expression"
DEC = "declaration"
FOR = "for_statement"
DEF = "function_definition"

# (raw reply, met type, expected status, expected code); codes were written
# down by stripping the fences and prose by hand
CASES = [
    ("if (x > 0) y = 1;", IF, E, "if (x > 0) y = 1;"),
    ("Here is the fix:\n```c\nif (x > 0) y = 1;\n```\nExplanation...", IF, F, "if (x > 0) y = 1;"),
    ("I could not find a problem in this code.", IF, X, ""),
    ("", IF, X, ""),
    ("```\nif (a >= b)\n\treturn -1;\n```", IF, F, "if (a >= b)\n\treturn -1;"),
    ("```c\nif (a) {\n\tb();\n}\n```", IF, F, "if (a) {\n\tb();\n}"),
    ("```cpp\nif (a) { b(); }\n```", IF, F, "if (a) { b(); }"),
    ("~~~c\nif (a) b();\n~~~", IF, F, "if (a) b();"),
    ("```c\nif (a) b();", IF, F, "if (a) b();"),
    ("```c\nx = 1;\n```\n```c\nif (n < 4) x = 2;\n```", IF, F, "if (n < 4) x = 2;"),
    ("```c\nif (p) q();\n```\n```c\nif (r) s();\n```", IF, F, "if (p) q();"),
    ("Sure! The corrected condition:\nif (len >= limit) return -EINVAL;\nThis avoids the overflow.", IF, F,
     "if (len >= limit) return -EINVAL;"),
    ("total = count * 8;", ASS, E, "total = count * 8"),
    ("```c\ntotal = count * 8 + 1;\n```", ASS, F, "total = count * 8 + 1"),
    ("```c\nn = min(a, b);\n```\nUse min to bound it.", ASS, F, "n = min(a, b)"),
    ("x += y;", ASS, E, "x += y"),
    ("memcpy(dst, src, n - 1);", CALL, E, "memcpy(dst, src, n - 1)"),
    ("```c\nstrncpy(d, s, sizeof(d));\n```", CALL, F, "strncpy(d, s, sizeof(d))"),
    ("The fix:\n```c\nmemcpy(dst, src, sizeof(*dst));\n```", CALL, F, "memcpy(dst, src, sizeof(*dst))"),
    ("int acc = 0;", DEC, E, "int acc = 0;"),
    ("```c\nlong long acc = 0;\n```", DEC, F, "long long acc = 0;"),
    ("```c\nsize_t n = strlen(s);\n```", DEC, F, "size_t n = strlen(s);"),
    ("for (j = 0; j < size; j++) buf[j] = 0;", FOR, E, "for (j = 0; j < size; j++) buf[j] = 0;"),
    ("```c\nfor (i = 0; i < 18; i++) {\n\tv[i] = 0;\n}\n```", FOR, F,
     "for (i = 0; i < 18; i++) {\n\tv[i] = 0;\n}"),
    ("static int f(int a) { return a; }", DEF, E, "static int f(int a) { return a; }"),
    ("```c\nstatic unsigned f(unsigned a)\n{\n\treturn a / 2;\n}\n```", DEF, F,
     "static unsigned f(unsigned a)\n{\n\treturn a / 2;\n}"),
    ("```c\nwhile (x) y();\n```", IF, X, ""),
    ("```c\nif (x > ) {\n```", IF, X, ""),
    ("```python\nprint('no C here')\n```", CALL, F, "print('no C here')"),
    ("```c\nfoo(a);\n```", DEC, X, ""),
]


@pytest.mark.parametrize("raw,met_type,status,code", CASES)
def test_extract_suite(raw, met_type, status, code):
    cand = extract_patch(raw, met_type, sample_id="s", ordinal=2, attempt=3)
    assert (cand.extraction_status, cand.code) == (status, code)
    assert (cand.sample_id, cand.ordinal, cand.attempt) == ("s", 2, 3)
    if status is not X:
        assert reparses_to(cand.code, met_type)
    assert cand.ok is (status is not X)


def test_suite_size():
    assert len(CASES) >= 30


def test_deterministic():
    raw = CASES[10][0]
    assert extract_patch(raw, IF) == extract_patch(raw, IF)


def test_fenced_blocks_in_order():
    text = "a\n```c\none\n```\nb\n~~~\ntwo\n~~~\n"
    assert fenced_blocks(text) == ["one\n", "two\n"]


def test_to_dict_shape():
    d = extract_patch("x = 1;", ASS, sample_id="q").to_dict()
    assert d == {"sample_id": "q", "ordinal": 1, "attempt": 1, "status": "Exact", "code": "x = 1"}
