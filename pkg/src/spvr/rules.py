"""Inspection checks gated by MET type.

Each check looks at the vulnerable-side MET (and, for variable use, the
rest of the enclosing function) and may emit one :class:`RuleFinding`
carrying a repair directive for the prompt.
"""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable

from .errors import UnsupportedMetType
from .met import MinimumEditTree
from .syntax import SyntaxNode, SyntaxTree

__all__ = [
    "CheckId",
    "MODELED_TYPES",
    "RuleConfig",
    "RuleFinding",
    "applicable_checks",
    "check_condition",
    "check_function_call",
    "check_number_literal",
    "check_type",
    "check_type_cast",
    "literal_value",
    "possible_variable_use",
    "possible_variables",
    "run_extra_checks",
    "run_rules",
    "similarity",
]


class CheckId(str, enum.Enum):
    POSSIBLE_VARIABLE_USE = "PossibleVariableUse"
    NUMBER_LITERAL = "NumberLiteral"
    FUNCTION_CALL = "FunctionCall"
    TYPE_CAST = "TypeCast"
    TYPE_CHECK = "TypeCheck"
    CONDITION = "Condition"
    MIN_MAX = "MinMax"
    TERNARY = "Ternary"
    BUFFER_WORDS = "BufferWords"
    SCOPE_RESOLUTION = "ScopeResolution"
    INITIALIZATION = "Initialization"
    POINTER = "Pointer"
    STATIC_METHOD = "StaticMethod"


IF, ASS, CALL, DEC, FOR, DEF = (
    "if_statement",
    "assignment_expression",
    "call_expression",
    "declaration",
    "for_statement",
    "function_definition",
)
MODELED_TYPES = (IF, ASS, CALL, DEC, FOR, DEF)

_C = CheckId
_COMMON_ORDER = (
    _C.POSSIBLE_VARIABLE_USE, _C.NUMBER_LITERAL, _C.FUNCTION_CALL,
    _C.TYPE_CAST, _C.TYPE_CHECK, _C.CONDITION,
)
# check-mark matrix, one column per MET type
_COMMON = {
    IF: {_C.POSSIBLE_VARIABLE_USE, _C.NUMBER_LITERAL, _C.FUNCTION_CALL, _C.CONDITION},
    ASS: {_C.POSSIBLE_VARIABLE_USE, _C.NUMBER_LITERAL, _C.FUNCTION_CALL, _C.TYPE_CAST},
    CALL: set(),
    DEC: {_C.NUMBER_LITERAL, _C.FUNCTION_CALL, _C.TYPE_CAST, _C.TYPE_CHECK},
    FOR: {_C.POSSIBLE_VARIABLE_USE, _C.NUMBER_LITERAL, _C.CONDITION},
    DEF: {_C.TYPE_CHECK},
}
_EXTRAS = {
    IF: (),
    ASS: (_C.MIN_MAX, _C.TERNARY),
    CALL: (_C.BUFFER_WORDS, _C.SCOPE_RESOLUTION),
    DEC: (_C.INITIALIZATION, _C.POINTER),
    FOR: (),
    DEF: (_C.STATIC_METHOD,),
}

MAX_SYMBOLS = 3
NUMERIC_TYPES = frozenset({"int", "long", "double"})
BUFFER_WORDS = ("mem", "str", "cpy")
MIN_MAX_NAMES = frozenset({"min", "max", "MIN", "MAX"})
RELATIONAL_OPS = frozenset({"<", "<=", ">", ">="})


@dataclass(frozen=True)
class RuleConfig:
    similarity_threshold: float = 0.5
    min_context_occurrences: int = 2
    max_findings: int = 3

    def __post_init__(self) -> None:
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError("similarity_threshold must lie in (0, 1]")
        if self.min_context_occurrences < 1 or self.max_findings < 1:
            raise ValueError("counts must be positive")


@dataclass(frozen=True)
class RuleFinding:
    check_id: CheckId
    instruction: str
    referenced_symbols: tuple[str, ...] = ()
    priority: int = 0

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id.value,
            "instruction": self.instruction,
            "symbols": list(self.referenced_symbols),
        }


@lru_cache(maxsize=None)
def _templates() -> dict:
    return json.loads(resources.files("spvr.data").joinpath("rule_templates.json").read_text("utf-8"))


def render_instruction(check: CheckId, met_type: str, symbols: Iterable[str] = ()) -> str:
    data = _templates()
    symbols = list(symbols)
    joined = ", ".join(symbols)
    with_symbols = data["with_symbols"].format(symbols=joined) if symbols else ""
    return data["checks"][check.value].format(met_type=met_type, symbols=joined, with_symbols=with_symbols)


def fallback_instruction(met_type: str) -> str:
    return _templates()["fallback"].format(met_type=met_type)


def applicable_checks(met_type: str) -> list[CheckId]:
    if met_type not in _COMMON:
        raise UnsupportedMetType(met_type)
    return [c for c in _COMMON_ORDER if c in _COMMON[met_type]] + list(_EXTRAS[met_type])


# --------------------------------------------------------------------------
# helpers


def _root(met: MinimumEditTree | SyntaxNode) -> SyntaxNode:
    return met.v_root if isinstance(met, MinimumEditTree) else met


def _finding(check: CheckId, met_type: str, symbols: Iterable[str]) -> RuleFinding:
    symbols = tuple(dict.fromkeys(symbols))
    return RuleFinding(check, render_instruction(check, met_type, symbols), symbols)


def _header(node: SyntaxNode) -> list[SyntaxNode]:
    """Condition/header nodes of an if or for statement."""
    if node.kind == IF:
        cond = node.child_by_field("condition")
        return [cond] if cond is not None else []
    if node.kind == FOR:
        out = []
        for c in node.children:
            if c.field_name == "body":
                break
            if c.is_named:
                out.append(c)
        return out
    return [node]


def _scope(met: MinimumEditTree | SyntaxNode) -> list[SyntaxNode]:
    # if/for evidence lives in the header; the body is context
    return _header(_root(met))


def _walk_all(nodes: Iterable[SyntaxNode]) -> Iterable[SyntaxNode]:
    for n in nodes:
        yield from n.walk()


def _norm(text: str) -> str:
    return re.sub(r"\s+", "", text)


def similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity, ``1 - dist / max(len)``."""
    if a == b:
        return 1.0
    if not a or not b:
        return 0.0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return 1.0 - prev[-1] / max(len(a), len(b))


@dataclass(frozen=True)
class _Ref:
    key: str
    text: str
    start: int
    parent: str | None  # parent object key for member accesses


def _is_callee(node: SyntaxNode, tree: SyntaxTree) -> bool:
    parent = tree.parent(node)
    return parent is not None and parent.kind == "call_expression" and node.field_name == "function"


def _variable_refs(nodes: Iterable[SyntaxNode], tree: SyntaxTree) -> list[_Ref]:
    refs: list[_Ref] = []
    for node in _walk_all(nodes):
        if node.kind == "identifier":
            parent = tree.parent(node)
            if _is_callee(node, tree):
                continue
            if parent is not None and parent.kind == "function_declarator" and node.field_name == "declarator":
                continue
            refs.append(_Ref(node.text, node.text, node.start, None))
        elif node.kind == "field_expression":
            arg = node.child_by_field("argument")
            if arg is None or arg.kind not in ("identifier", "field_expression") or _is_callee(node, tree):
                continue
            refs.append(_Ref(_norm(node.text), node.text, node.start, _norm(arg.text)))
    return refs


def _context_nodes(root: SyntaxNode, tree: SyntaxTree) -> list[SyntaxNode]:
    func = root if root.kind == DEF else tree.enclosing(root, DEF)
    if func is root:
        return []
    scope = func.child_by_field("body") if func is not None else tree.root
    if scope is None:
        return []
    # descend only into nodes that lie outside the MET
    out: list[SyntaxNode] = []
    stack = [scope]
    while stack:
        node = stack.pop()
        if node.end <= root.start or node.start >= root.end:
            out.append(node)
        elif node is not root:
            stack.extend(reversed(node.children))
    return sorted(out, key=lambda n: n.start)


def possible_variables(met: MinimumEditTree | SyntaxNode, tree: SyntaxTree,
                       cfg: RuleConfig | None = None) -> list[str]:
    """Context symbols that may belong in the MET, best candidates first."""
    cfg = cfg or RuleConfig()
    root = _root(met)
    inner = _variable_refs([root], tree)
    inner_keys = {r.key for r in inner}
    inner_idents = sorted({r.key for r in inner if r.parent is None})
    outer = _variable_refs(_context_nodes(root, tree), tree)
    counts = Counter(r.key for r in outer)
    first: dict[str, _Ref] = {}
    for r in outer:
        first.setdefault(r.key, r)

    members = [
        r for r in first.values()
        if r.parent is not None and r.key not in inner_keys
        and counts[r.parent] >= cfg.min_context_occurrences
    ]
    members.sort(key=lambda r: (r.parent not in inner_keys, -counts[r.key], r.start))

    similar = [
        r for r in first.values()
        if r.parent is None and r.key not in inner_keys
        and counts[r.key] >= cfg.min_context_occurrences
        and any(similarity(r.key, m) > cfg.similarity_threshold for m in inner_idents)
    ]
    similar.sort(key=lambda r: (-counts[r.key], r.start))
    return [r.text for r in members + similar]


def possible_variable_use(met: MinimumEditTree | SyntaxNode, tree: SyntaxTree,
                          cfg: RuleConfig | None = None) -> RuleFinding | None:
    symbols = possible_variables(met, tree, cfg)[:MAX_SYMBOLS]
    if not symbols:
        return None
    return _finding(CheckId.POSSIBLE_VARIABLE_USE, _root(met).kind, symbols)


_INT_SUFFIX = re.compile(r"[uUlLzZ]+$")
_FLOAT_SUFFIX = re.compile(r"[fFlL]+$")


def literal_value(text: str) -> int | float | None:
    """Numeric value of a C/C++ number literal, or None if unreadable."""
    t = text.replace("'", "").strip()
    low = t.lower()
    try:
        if low.startswith("0x"):
            if "p" in low:
                return float.fromhex(_FLOAT_SUFFIX.sub("", t))
            return int(_INT_SUFFIX.sub("", t)[2:], 16)
        if low.startswith("0b"):
            return int(_INT_SUFFIX.sub("", t)[2:], 2)
        if "." in low or "e" in low:
            return float(_FLOAT_SUFFIX.sub("", t))
        digits = _INT_SUFFIX.sub("", t)
        if len(digits) > 1 and digits.startswith("0"):
            return int(digits, 8)
        return int(digits, 10)
    except ValueError:
        return None


def check_number_literal(met: MinimumEditTree | SyntaxNode) -> RuleFinding | None:
    hits = [
        n.text for n in _walk_all(_scope(met))
        if n.kind == "number_literal" and literal_value(n.text) not in (0, 1)
    ]
    return _finding(CheckId.NUMBER_LITERAL, _root(met).kind, hits) if hits else None


def check_function_call(met: MinimumEditTree | SyntaxNode) -> RuleFinding | None:
    callees = [
        fn.text for n in _walk_all(_scope(met)) if n.kind == "call_expression"
        for fn in [n.child_by_field("function")] if fn is not None
    ]
    return _finding(CheckId.FUNCTION_CALL, _root(met).kind, callees) if callees else None


def _cast_text(node: SyntaxNode) -> str:
    rparen = next((c for c in node.children if c.kind == ")"), None)
    end = rparen.end if rparen is not None else node.end
    return node.text[: end - node.start]


def check_type_cast(met: MinimumEditTree | SyntaxNode) -> RuleFinding | None:
    casts = [_cast_text(n) for n in _walk_all(_scope(met)) if n.kind == "cast_expression"]
    return _finding(CheckId.TYPE_CAST, _root(met).kind, casts) if casts else None


def declarator_name(node: SyntaxNode | None) -> SyntaxNode | None:
    """Identifier introduced by a (possibly nested) declarator."""
    while node is not None:
        if node.kind in ("identifier", "field_identifier"):
            return node
        nxt = node.child_by_field("declarator")
        if nxt is None:
            nxt = next((c for c in node.named_children if c.kind in ("identifier", "field_identifier")
                        or c.kind.endswith("declarator")), None)
        node = nxt
    return None


def _type_words(type_node: SyntaxNode | None) -> set[str]:
    if type_node is None:
        return set()
    return set(re.findall(r"[A-Za-z_]\w*", type_node.text))


def _is_signed_numeric(words: set[str]) -> bool:
    return bool(words & NUMERIC_TYPES) and "unsigned" not in words


def _is_pointer(decl: SyntaxNode) -> bool:
    return any(n.kind in ("pointer_declarator", "abstract_pointer_declarator") for n in decl.walk())


def _declared_types(scope: SyntaxNode) -> dict[str, set[str]]:
    types: dict[str, set[str]] = {}
    for node in scope.walk():
        if node.kind in ("declaration", "parameter_declaration", "field_declaration"):
            words = _type_words(node.child_by_field("type"))
            for decl in node.children_by_field("declarator"):
                name = declarator_name(decl)
                if name is not None:
                    types.setdefault(name.text, set() if _is_pointer(decl) else words)
    return types


def check_type(met: MinimumEditTree | SyntaxNode, tree: SyntaxTree | None = None) -> RuleFinding | None:
    root = _root(met)
    scope = _scope(met)
    symbols: list[str] = []
    for node in _walk_all(scope):
        if node.kind in ("declaration", "parameter_declaration") and _is_signed_numeric(
            _type_words(node.child_by_field("type"))
        ):
            for decl in node.children_by_field("declarator"):
                name = declarator_name(decl)
                if name is not None and not _is_pointer(decl):
                    symbols.append(name.text)
    if tree is not None:
        func = root if root.kind == DEF else tree.enclosing(root, DEF)
        declared = _declared_types(func) if func is not None else {}
        for node in _walk_all(scope):
            if node.kind == "identifier" and _is_signed_numeric(declared.get(node.text, set())):
                symbols.append(node.text)
    if root.kind == DEF:
        rtype = root.child_by_field("type")
        if _is_signed_numeric(_type_words(rtype)):
            symbols.insert(0, rtype.text)
    for node in _walk_all(scope):
        if node.kind == "type_descriptor" and _is_signed_numeric(_type_words(node)):
            symbols.append(node.text)
    return _finding(CheckId.TYPE_CHECK, root.kind, symbols) if symbols else None


def check_condition(met: MinimumEditTree | SyntaxNode) -> RuleFinding | None:
    root = _root(met)
    if root.kind not in (IF, FOR):
        raise UnsupportedMetType(root.kind)
    cond = root.child_by_field("condition")
    if cond is None:
        return None
    ops = [
        c.text for n in cond.walk() if n.kind == "binary_expression"
        for c in n.children if not c.is_named and c.text in RELATIONAL_OPS
    ]
    return _finding(CheckId.CONDITION, root.kind, ops) if ops else None


# --------------------------------------------------------------------------
# per-type extras


def _callee_names(root: SyntaxNode) -> list[str]:
    return [
        fn.text for n in root.walk() if n.kind == "call_expression"
        for fn in [n.child_by_field("function")] if fn is not None
    ]


def _last_segment(name: str) -> str:
    return re.split(r"::|->|\.", name)[-1].strip()


def _min_max(root, tree, cfg):
    if any(_last_segment(c) in MIN_MAX_NAMES for c in _callee_names(root)):
        return None
    return _finding(CheckId.MIN_MAX, root.kind, possible_variables(root, tree, cfg)[:MAX_SYMBOLS])


def _ternary(root, tree, cfg):
    if root.first("conditional_expression") is not None:
        return None
    return _finding(CheckId.TERNARY, root.kind, possible_variables(root, tree, cfg)[:MAX_SYMBOLS])


def _buffer_words(root, tree, cfg):
    hits = [c for c in _callee_names(root) if any(w in _last_segment(c) for w in BUFFER_WORDS)]
    return _finding(CheckId.BUFFER_WORDS, root.kind, hits) if hits else None


def _scope_resolution(root, tree, cfg):
    if "::" in root.text:
        return None
    return _finding(CheckId.SCOPE_RESOLUTION, root.kind, possible_variables(root, tree, cfg)[:MAX_SYMBOLS])


def _declarators(root: SyntaxNode) -> list[SyntaxNode]:
    return root.children_by_field("declarator")


def _initialization(root, tree, cfg):
    bare = [
        name.text for d in _declarators(root) if d.kind != "init_declarator"
        for name in [declarator_name(d)] if name is not None
    ]
    return _finding(CheckId.INITIALIZATION, root.kind, bare) if bare else None


def _pointer(root, tree, cfg):
    if root.first("pointer_declarator") is not None:
        return None
    names = [n.text for d in _declarators(root) for n in [declarator_name(d)] if n is not None]
    return _finding(CheckId.POINTER, root.kind, names)


def _static_method(root, tree, cfg):
    if any(c.kind == "storage_class_specifier" and c.text == "static" for c in root.children):
        return None
    name = declarator_name(root.child_by_field("declarator"))
    return _finding(CheckId.STATIC_METHOD, root.kind, [name.text] if name is not None else [])


_EXTRA_IMPL: dict[CheckId, Callable] = {
    CheckId.MIN_MAX: _min_max,
    CheckId.TERNARY: _ternary,
    CheckId.BUFFER_WORDS: _buffer_words,
    CheckId.SCOPE_RESOLUTION: _scope_resolution,
    CheckId.INITIALIZATION: _initialization,
    CheckId.POINTER: _pointer,
    CheckId.STATIC_METHOD: _static_method,
}


def run_extra_checks(met_type: str, met: MinimumEditTree | SyntaxNode, tree: SyntaxTree,
                     cfg: RuleConfig | None = None) -> list[RuleFinding]:
    if met_type not in _EXTRAS:
        raise UnsupportedMetType(met_type)
    cfg = cfg or RuleConfig()
    root = _root(met)
    out = []
    for check in _EXTRAS[met_type]:
        finding = _EXTRA_IMPL[check](root, tree, cfg)
        if finding is not None:
            out.append(finding)
    return out


def _run_one(check: CheckId, met, tree: SyntaxTree, cfg: RuleConfig) -> RuleFinding | None:
    if check is CheckId.POSSIBLE_VARIABLE_USE:
        return possible_variable_use(met, tree, cfg)
    if check is CheckId.NUMBER_LITERAL:
        return check_number_literal(met)
    if check is CheckId.FUNCTION_CALL:
        return check_function_call(met)
    if check is CheckId.TYPE_CAST:
        return check_type_cast(met)
    if check is CheckId.TYPE_CHECK:
        return check_type(met, tree)
    if check is CheckId.CONDITION:
        return check_condition(met)
    return _EXTRA_IMPL[check](_root(met), tree, cfg)


def run_rules(met: MinimumEditTree | SyntaxNode, tree: SyntaxTree,
              cfg: RuleConfig | None = None) -> list[RuleFinding]:
    """Triggered findings in check-priority order, at most ``cfg.max_findings``."""
    cfg = cfg or RuleConfig()
    met_type = _root(met).kind
    findings: list[RuleFinding] = []
    for priority, check in enumerate(applicable_checks(met_type), 1):
        finding = _run_one(check, met, tree, cfg)
        if finding is None:
            continue
        findings.append(RuleFinding(finding.check_id, finding.instruction, finding.referenced_symbols, priority))
        if len(findings) == cfg.max_findings:
            break
    return findings
