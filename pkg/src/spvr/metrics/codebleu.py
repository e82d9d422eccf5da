"""CodeBLEU: n-gram, keyword-weighted n-gram, syntax and dataflow match."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

from ..errors import EmptyReference, ParseFailure
from ..syntax import Language, SyntaxNode, SyntaxTree, parse_code

__all__ = ["CodeBleuScore", "DataflowEdge", "codebleu", "dataflow_edges", "tokenize"]

DEFAULT_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
KEYWORD_WEIGHT = 1.0
OTHER_WEIGHT = 0.2

_TOKEN = re.compile(
    r"""
    "(?:\\.|[^"\\\n])*"          # string literal
  | '(?:\\.|[^'\\\n])*'          # char literal
  | [A-Za-z_]\w*                 # identifier / keyword
  | \.?\d(?:[\w.]|[eEpP][+-])*   # number
  | ->\*?|\.\.\.|::|<<=|>>=|<=>
  | [-+*/%&|^!=<>]=|&&|\|\||\+\+|--|<<|>>|\#\#
  | \S
    """,
    re.VERBOSE,
)


def tokenize(code: str) -> list[str]:
    return _TOKEN.findall(code)


@lru_cache(maxsize=None)
def keywords(language: Language = Language.C) -> frozenset[str]:
    raw = json.loads(resources.files("spvr.data").joinpath("c_keywords.json").read_text("utf-8"))
    return frozenset(raw[language.value])


@dataclass(frozen=True)
class CodeBleuScore:
    ngram: float
    weighted_ngram: float
    syntax: float
    dataflow: float
    total: float
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    candidate_parsed: bool = True

    def to_dict(self) -> dict:
        return {
            "ngram": self.ngram,
            "weighted_ngram": self.weighted_ngram,
            "syntax": self.syntax,
            "dataflow": self.dataflow,
            "total": self.total,
        }


# --------------------------------------------------------------------------
# n-gram components


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _brevity(c: int, r: int) -> float:
    if c == 0:
        return 0.0
    return 1.0 if c > r else math.exp(1 - r / c)


def _smoothed(matched: float, total: float) -> float:
    return (matched + 1) / (total + 1)


def ngram_match(cand: Sequence[str], ref: Sequence[str], max_n: int = 4) -> float:
    """BLEU with add-one smoothing on every order's precision."""
    if not cand:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        c, r = _ngrams(cand, n), _ngrams(ref, n)
        matched = sum(min(k, r[g]) for g, k in c.items())
        logs.append(math.log(_smoothed(matched, sum(c.values()))))
    return _brevity(len(cand), len(ref)) * math.exp(sum(logs) / max_n)


def weighted_ngram_match(cand: Sequence[str], ref: Sequence[str], kw: frozenset[str], max_n: int = 4) -> float:
    """As :func:`ngram_match` but unigram counts are weighted by keyword-ness."""
    if not cand:
        return 0.0
    weight = lambda tok: KEYWORD_WEIGHT if tok in kw else OTHER_WEIGHT  # noqa: E731
    c1, r1 = Counter(cand), Counter(ref)
    matched = sum(weight(t) * min(k, r1[t]) for t, k in c1.items())
    total = sum(weight(t) * k for t, k in c1.items())
    logs = [math.log(_smoothed(matched, total))]
    for n in range(2, max_n + 1):
        c, r = _ngrams(cand, n), _ngrams(ref, n)
        logs.append(math.log(_smoothed(sum(min(k, r[g]) for g, k in c.items()), sum(c.values()))))
    return _brevity(len(cand), len(ref)) * math.exp(sum(logs) / max_n)


# --------------------------------------------------------------------------
# syntax component


def _named_shape(node: SyntaxNode) -> tuple:
    return (node.kind, tuple(_named_shape(c) for c in node.named_children))


def _subtrees(tree: SyntaxTree) -> Counter:
    return Counter(_named_shape(n) for n in tree.root.walk() if n.is_named and n is not tree.root)


def syntax_match(cand: SyntaxTree, ref: SyntaxTree) -> float:
    """Share of reference subtrees (clipped multiset) found in the candidate."""
    r = _subtrees(ref)
    if not r:
        return 1.0 if not _subtrees(cand) else 0.0
    c = _subtrees(cand)
    return sum(min(k, c[s]) for s, k in r.items()) / sum(r.values())


# --------------------------------------------------------------------------
# dataflow component


@dataclass(frozen=True)
class DataflowEdge:
    name: str
    def_pos: int
    use_pos: int


ENTRY = -1  # definition site of names bound outside the scanned code


@dataclass
class _Flow:
    last_def: dict[str, int] = field(default_factory=dict)
    edges: list[DataflowEdge] = field(default_factory=list)
    free: list[DataflowEdge] = field(default_factory=list)

    def use(self, node: SyntaxNode) -> None:
        d = self.last_def.get(node.text)
        if d is None:
            self.free.append(DataflowEdge(node.text, ENTRY, node.start))
        else:
            self.edges.append(DataflowEdge(node.text, d, node.start))

    def define(self, node: SyntaxNode) -> None:
        self.last_def[node.text] = node.start


_DECLARATOR_WRAPPERS = {"pointer_declarator", "array_declarator", "reference_declarator",
                        "parenthesized_declarator", "init_declarator"}
_NOT_VARIABLE_PARENTS = {"function_declarator", "goto_statement", "labeled_statement",
                         "preproc_def", "preproc_function_def", "preproc_call"}


def _declared_identifier(decl: SyntaxNode | None) -> SyntaxNode | None:
    while decl is not None and decl.kind in _DECLARATOR_WRAPPERS:
        decl = decl.child_by_field("declarator")
    return decl if decl is not None and decl.kind == "identifier" else None


def _visit(node: SyntaxNode, flow: _Flow, parent_kind: str | None) -> None:
    kind = node.kind
    if kind == "identifier":
        if parent_kind not in _NOT_VARIABLE_PARENTS:
            flow.use(node)
        return
    if kind == "call_expression":
        fn = node.child_by_field("function")
        if fn is not None and fn.kind != "identifier":
            _visit(fn, flow, kind)
        for c in node.children:
            if c.field_name == "arguments":
                _visit(c, flow, kind)
        return
    if kind == "assignment_expression":
        left, right = node.child_by_field("left"), node.child_by_field("right")
        op = next((c.text for c in node.children if not c.is_named), "=")
        if right is not None:
            _visit(right, flow, kind)
        if left is not None and left.kind == "identifier":
            if op != "=":
                flow.use(left)
            flow.define(left)
        elif left is not None:
            _visit(left, flow, kind)
        return
    if kind == "update_expression":
        arg = node.child_by_field("argument")
        if arg is not None and arg.kind == "identifier":
            flow.use(arg)
            flow.define(arg)
        elif arg is not None:
            _visit(arg, flow, kind)
        return
    if kind == "init_declarator":
        value = node.child_by_field("value")
        if value is not None:
            _visit(value, flow, kind)
        ident = _declared_identifier(node.child_by_field("declarator"))
        if ident is not None:
            flow.define(ident)
        return
    if kind in ("declaration", "parameter_declaration"):
        for c in node.children:
            if c.field_name != "declarator":
                continue
            if c.kind == "init_declarator":
                _visit(c, flow, kind)
            else:
                ident = _declared_identifier(c)
                if ident is not None:
                    flow.define(ident)
                else:
                    _visit(c, flow, kind)
        return
    for c in node.children:
        if c.field_name != "type":
            _visit(c, flow, kind)


def _flows(root: SyntaxNode) -> list[_Flow]:
    functions = root.find_all("function_definition")
    flows = []
    for fn in functions:
        flows.append(_Flow())
        _visit(fn, flows[-1], None)
    # code outside any function forms one more scope
    flows.append(_Flow())
    for c in root.children if root.kind == "translation_unit" else [root]:
        if not any(c.start <= f.start and f.end <= c.end for f in functions):
            _visit(c, flows[-1], root.kind)
    return flows


def dataflow_edges(tree: SyntaxTree | SyntaxNode) -> set[DataflowEdge]:
    """Def-use pairs, nearest preceding definition wins, per function."""
    root = tree.root if isinstance(tree, SyntaxTree) else tree
    return {e for flow in _flows(root) for e in flow.edges}


def _flow_items(tree: SyntaxTree) -> set[DataflowEdge]:
    """Def-use pairs plus reads of names defined elsewhere (bound to ENTRY)."""
    return {e for flow in _flows(tree.root) for e in flow.edges + flow.free}


def _normalized_edges(edges: set[DataflowEdge]) -> Counter:
    """Rename variables and positions by order of first appearance."""
    names: dict[str, str] = {}
    for e in sorted(edges, key=lambda e: (e.def_pos, e.use_pos)):
        names.setdefault(e.name, f"v{len(names)}")
    # byte offsets differ between texts; keep only the order of a variable's
    # own occurrences
    per_var: dict[str, list[int]] = {}
    for e in edges:
        per_var.setdefault(e.name, []).extend((e.def_pos, e.use_pos))
    out: Counter = Counter()
    rank = {name: {p: i for i, p in enumerate(sorted(set(ps)))} for name, ps in per_var.items()}
    for e in edges:
        out[(names[e.name], rank[e.name][e.def_pos], rank[e.name][e.use_pos])] += 1
    return out


def dataflow_match(cand: SyntaxTree, ref: SyntaxTree) -> float:
    r = _normalized_edges(_flow_items(ref))
    c = _normalized_edges(_flow_items(cand))
    if not r:
        return 1.0 if not c else 0.0
    return sum(min(k, c[e]) for e, k in r.items()) / sum(r.values())


# --------------------------------------------------------------------------


def _try_parse(code: str, language: Language) -> SyntaxTree | None:
    try:
        return parse_code(code, language)
    except ParseFailure:
        return None


def codebleu(candidate: str, reference: str, weights: Sequence[float] = DEFAULT_WEIGHTS,
             language: Language | str = Language.C) -> CodeBleuScore:
    lang = Language.from_name(language)
    if len(weights) != 4 or any(w < 0 for w in weights) or abs(sum(weights) - 1) > 1e-9:
        raise ValueError("weights must be four non-negative reals summing to 1")
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        raise EmptyReference("reference has no tokens")
    cand_tokens = tokenize(candidate)
    ngram = ngram_match(cand_tokens, ref_tokens)
    weighted = weighted_ngram_match(cand_tokens, ref_tokens, keywords(lang))
    ref_tree = _try_parse(reference, lang)
    cand_tree = _try_parse(candidate, lang)
    if ref_tree is None:
        raise EmptyReference("reference does not parse")
    if cand_tree is None or cand_tree.degraded and not ref_tree.degraded:
        syntax = flow = 0.0
        parsed = False
    else:
        syntax = syntax_match(cand_tree, ref_tree)
        flow = dataflow_match(cand_tree, ref_tree)
        parsed = True
    parts = (ngram, weighted, syntax, flow)
    total = sum(w * p for w, p in zip(weights, parts))
    return CodeBleuScore(ngram, weighted, syntax, flow, total, tuple(weights), parsed)
