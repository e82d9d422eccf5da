"""C/C++ concrete syntax trees built on tree-sitter.

Trees are converted into immutable :class:`SyntaxNode` objects whose byte
spans index into the original source, even when the source had to be wrapped
in a synthetic function before parsing (bare statements and expressions do
not parse cleanly at file scope).
"""

from __future__ import annotations

import bisect
import enum
import json
import threading
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from importlib import resources
from typing import Iterator

import tree_sitter
import tree_sitter_c
import tree_sitter_cpp

from .errors import ParseFailure, SpanOutOfRange, UnknownKind

__all__ = [
    "KindTaxonomy",
    "Language",
    "SourceUnit",
    "Supertype",
    "SyntaxNode",
    "SyntaxTree",
    "is_subtype_of",
    "parse",
    "parse_code",
    "strip_comments",
    "taxonomy",
    "to_plain_code",
]


class Language(str, enum.Enum):
    C = "c"
    CPP = "cpp"

    @classmethod
    def from_name(cls, name: str | Language) -> Language:
        if isinstance(name, Language):
            return name
        key = str(name).strip().lower()
        aliases = {"c": cls.C, "cpp": cls.CPP, "c++": cls.CPP, "cxx": cls.CPP, "cc": cls.CPP}
        if key not in aliases:
            raise ValueError(f"unsupported language: {name!r}")
        return aliases[key]


class Supertype(str, enum.Enum):
    EXPRESSION = "expression"
    STATEMENT = "statement"

    @classmethod
    def from_name(cls, name: str | Supertype) -> Supertype:
        if isinstance(name, Supertype):
            return name
        return cls(str(name).strip().lower().lstrip("_"))


@dataclass(frozen=True)
class SourceUnit:
    """One function's source text plus the grammar used to parse it."""

    text: str
    language: Language = Language.C

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", Language.from_name(self.language))

    @cached_property
    def data(self) -> bytes:
        return self.text.encode("utf-8")

    @cached_property
    def line_starts(self) -> tuple[int, ...]:
        starts = [0]
        for i, b in enumerate(self.data):
            if b == 0x0A:
                starts.append(i + 1)
        return tuple(starts)

    def line_of(self, offset: int) -> int:
        """1-based line number containing byte ``offset``."""
        return bisect.bisect_right(self.line_starts, offset)

    def line_bounds(self, line: int) -> tuple[int, int]:
        """Byte range of a 1-based line, excluding its newline."""
        starts = self.line_starts
        if not 1 <= line <= len(starts):
            raise SpanOutOfRange(f"line {line} outside 1..{len(starts)}")
        start = starts[line - 1]
        end = starts[line] - 1 if line < len(starts) else len(self.data)
        return start, end

    @property
    def lines(self) -> list[str]:
        return self.text.split("\n")


@dataclass(frozen=True, eq=False)
class SyntaxNode:
    kind: str
    start: int
    end: int
    start_line: int
    end_line: int
    text: str
    is_named: bool
    children: tuple[SyntaxNode, ...] = ()
    field_name: str | None = None
    is_error: bool = False
    has_error: bool = False

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def line_span(self) -> tuple[int, int]:
        return (self.start_line, self.end_line)

    @property
    def named_children(self) -> tuple[SyntaxNode, ...]:
        return tuple(c for c in self.children if c.is_named)

    def child_by_field(self, name: str) -> SyntaxNode | None:
        for c in self.children:
            if c.field_name == name:
                return c
        return None

    def children_by_field(self, name: str) -> list[SyntaxNode]:
        return [c for c in self.children if c.field_name == name]

    def contains_span(self, start: int, end: int) -> bool:
        return self.start <= start and end <= self.end

    def walk(self) -> Iterator[SyntaxNode]:
        """Pre-order traversal, document order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def find_all(self, *kinds: str) -> list[SyntaxNode]:
        wanted = set(kinds)
        return [n for n in self.walk() if n.kind in wanted]

    def first(self, kind: str) -> SyntaxNode | None:
        return next((n for n in self.walk() if n.kind == kind), None)

    def shape(self) -> tuple:
        """Kind-labelled shape, ignoring spans and text."""
        return (self.kind, tuple(c.shape() for c in self.children))

    def __repr__(self) -> str:
        return f"SyntaxNode({self.kind!r}, {self.start}:{self.end}, lines {self.start_line}-{self.end_line})"


class SyntaxTree:
    def __init__(self, unit: SourceUnit, root: SyntaxNode, wrapped: bool = False):
        self.unit = unit
        self.root = root
        self.wrapped = wrapped

    @property
    def language(self) -> Language:
        return self.unit.language

    @property
    def degraded(self) -> bool:
        """True when error-recovery nodes are present."""
        return self.root.has_error

    def walk(self) -> Iterator[SyntaxNode]:
        return self.root.walk()

    @cached_property
    def _parents(self) -> dict[int, SyntaxNode]:
        parents: dict[int, SyntaxNode] = {}
        for node in self.root.walk():
            for c in node.children:
                parents[id(c)] = node
        return parents

    def parent(self, node: SyntaxNode) -> SyntaxNode | None:
        return self._parents.get(id(node))

    def ancestors(self, node: SyntaxNode) -> Iterator[SyntaxNode]:
        cur = self.parent(node)
        while cur is not None:
            yield cur
            cur = self.parent(cur)

    def enclosing(self, node: SyntaxNode, kind: str) -> SyntaxNode | None:
        return next((a for a in self.ancestors(node) if a.kind == kind), None)

    def text(self, node: SyntaxNode) -> str:
        return to_plain_code(node, self.unit)

    def __repr__(self) -> str:
        return f"SyntaxTree({self.unit.language.value}, {len(self.unit.data)} bytes, degraded={self.degraded})"


# --------------------------------------------------------------------------
# Grammar handles

_GRAMMARS = {Language.C: tree_sitter_c.language, Language.CPP: tree_sitter_cpp.language}
_local = threading.local()

_WRAP_PREFIX = b"void __spvr_fragment__(void) {\n"
_WRAP_SUFFIXES = (b"\n}\n", b"\n;}\n")


@lru_cache(maxsize=None)
def ts_language(language: Language) -> tree_sitter.Language:
    return tree_sitter.Language(_GRAMMARS[Language.from_name(language)]())


def _parser(language: Language) -> tree_sitter.Parser:
    # tree-sitter parsers are not safe to share between threads
    cache = getattr(_local, "parsers", None)
    if cache is None:
        cache = _local.parsers = {}
    if language not in cache:
        cache[language] = tree_sitter.Parser(ts_language(language))
    return cache[language]


def _error_count(node: tree_sitter.Node) -> int:
    if not node.has_error:
        return 0
    count = 1 if (node.is_error or node.is_missing) else 0
    return count + sum(_error_count(c) for c in node.children)


class _Converter:
    def __init__(self, unit: SourceUnit, offset: int):
        self.unit = unit
        self.data = unit.data
        self.lo = offset
        self.hi = offset + len(unit.data)

    def line_range(self, start: int, end: int) -> tuple[int, int]:
        last = end - 1 if end > start else start
        return self.unit.line_of(start), self.unit.line_of(last)

    def convert(self, node: tree_sitter.Node, field_name: str | None) -> list[SyntaxNode]:
        s, e = node.start_byte, node.end_byte
        if e <= self.lo and s < self.lo or s >= self.hi and e > self.hi:
            return []
        inside = self.lo <= s and e <= self.hi
        kids: list[SyntaxNode] = []
        for i, child in enumerate(node.children):
            kids.extend(self.convert(child, node.field_name_for_child(i)))
        if not inside:
            # wrapper node straddling the boundary: keep only its contents
            return kids
        start, end = s - self.lo, e - self.lo
        first, last = self.line_range(start, end)
        is_error = node.is_error or node.is_missing
        return [
            SyntaxNode(
                kind="MISSING" if node.is_missing else node.type,
                start=start,
                end=end,
                start_line=first,
                end_line=last,
                text=self.data[start:end].decode("utf-8", errors="replace"),
                is_named=node.is_named,
                children=tuple(kids),
                field_name=field_name,
                is_error=is_error,
                has_error=is_error or any(k.has_error for k in kids),
            )
        ]


def parse(unit: SourceUnit) -> SyntaxTree:
    """Parse ``unit`` into a :class:`SyntaxTree`.

    The raw text is tried first; if it produces error nodes, the text is also
    parsed inside a synthetic function body (and with a trailing ``;`` for bare
    expressions) and the variant with the fewest error nodes wins.
    """
    if not unit.text.strip():
        raise ParseFailure("empty input")
    parser = _parser(unit.language)
    variants = [(0, parser.parse(unit.data))]
    if variants[0][1].root_node.has_error:
        for suffix in _WRAP_SUFFIXES:
            variants.append((len(_WRAP_PREFIX), parser.parse(_WRAP_PREFIX + unit.data + suffix)))
    offset, tree = min(variants, key=lambda v: _error_count(v[1].root_node))
    conv = _Converter(unit, offset)
    children: list[SyntaxNode] = []
    for i, child in enumerate(tree.root_node.children):
        children.extend(conv.convert(child, tree.root_node.field_name_for_child(i)))
    named = [c for c in children if c.is_named and c.kind != "comment"]
    if not named or all(c.is_error for c in named):
        if not any(c.kind == "comment" for c in children):
            raise ParseFailure("grammar produced only error nodes")
    root = SyntaxNode(
        kind="translation_unit",
        start=0,
        end=len(unit.data),
        start_line=1,
        end_line=len(unit.line_starts),
        text=unit.text,
        is_named=True,
        children=tuple(children),
        has_error=any(c.has_error for c in children),
    )
    return SyntaxTree(unit, root, wrapped=offset > 0)


def parse_code(text: str, language: Language | str = Language.C) -> SyntaxTree:
    return parse(SourceUnit(text, Language.from_name(language)))


def strip_comments(unit: SourceUnit) -> SourceUnit:
    """Remove comments, keeping every other byte in place.

    Block comments become a single space so neighbouring tokens stay apart;
    line comments are dropped outright since their newline already separates
    tokens.
    """
    if not unit.text.strip():
        return unit
    tree = parse(unit)
    comments = [n for n in tree.walk() if n.kind == "comment"]
    if not comments:
        return unit
    out = bytearray()
    pos = 0
    data = unit.data
    for c in sorted(comments, key=lambda n: n.start):
        if c.start < pos:
            continue
        out += data[pos : c.start]
        out += b"" if c.text.startswith("//") else b" "
        pos = c.end
    out += data[pos:]
    return SourceUnit(out.decode("utf-8", errors="replace"), unit.language)


def to_plain_code(node: SyntaxNode, unit: SourceUnit) -> str:
    """Exact source slice covered by ``node``."""
    if not 0 <= node.start <= node.end <= len(unit.data):
        raise SpanOutOfRange(f"span {node.start}:{node.end} outside 0:{len(unit.data)}")
    return unit.data[node.start : node.end].decode("utf-8", errors="replace")


# --------------------------------------------------------------------------
# Kind taxonomy


@dataclass(frozen=True)
class KindTaxonomy:
    expression_kinds: frozenset[str]
    statement_kinds: frozenset[str]
    source: str = field(default="data", compare=False)

    def __post_init__(self) -> None:
        overlap = self.expression_kinds & self.statement_kinds
        if overlap:
            raise ValueError(f"kinds in both supertypes: {sorted(overlap)}")

    def contains(self, kind: str, supertype: Supertype) -> bool:
        if supertype is Supertype.EXPRESSION:
            return kind in self.expression_kinds
        return kind in self.statement_kinds

    def qualifies(self, kind: str) -> bool:
        return kind in self.expression_kinds or kind in self.statement_kinds


@lru_cache(maxsize=None)
def _taxonomy_data() -> dict:
    return json.loads(resources.files("spvr.data").joinpath("taxonomy.json").read_text("utf-8"))


@lru_cache(maxsize=None)
def taxonomy(language: Language | str = Language.C) -> KindTaxonomy:
    """Expression/statement kind sets used by MET extraction.

    Read from the grammar's supertype metadata when the binding exposes it,
    otherwise from the shipped data file.
    """
    language = Language.from_name(language)
    data = _taxonomy_data()
    excluded = set(data["excluded_atoms"]) | set(data["excluded_statements"])
    extras = set(data["extra_statements"])
    lang = ts_language(language)
    groups: dict[str, set[str]] = {}
    for sid in getattr(lang, "supertypes", ()) or ():
        name = lang.node_kind_for_id(sid).lstrip("_")
        if name in ("expression", "statement"):
            groups[name] = {lang.node_kind_for_id(k) for k in lang.subtypes(sid)}
    if "expression" in groups and "statement" in groups:
        return KindTaxonomy(
            frozenset(groups["expression"] - excluded),
            frozenset((groups["statement"] - excluded) | extras),
            source="grammar",
        )
    table = data[language.value]
    return KindTaxonomy(frozenset(table["expression"]), frozenset(table["statement"]), source="data")


def is_known_kind(kind: str, language: Language | str = Language.C) -> bool:
    lang = ts_language(Language.from_name(language))
    return bool(lang.id_for_node_kind(kind, True)) or bool(lang.id_for_node_kind(kind, False))


def is_subtype_of(
    kind: str, supertype: Supertype | str, language: Language | str = Language.C
) -> bool:
    if kind not in ("translation_unit",) and not is_known_kind(kind, language):
        raise UnknownKind(kind)
    return taxonomy(language).contains(kind, Supertype.from_name(supertype))
