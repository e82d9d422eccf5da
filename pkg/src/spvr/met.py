"""Minimum Edit Tree extraction.

An edit tree root is the first node, in pre-order, that is an expression or
statement kind, covers every edited span, and has no single child that
already covers them all. Running that search on both sides of a fix and
requiring the two root kinds to agree gives the MET and its type.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptyEdits, SpanOutOfRange
from .syntax import Language, SourceUnit, SyntaxNode, SyntaxTree, taxonomy

__all__ = [
    "EditSpan",
    "MergedNode",
    "MetStatus",
    "MetResult",
    "MinimumEditTree",
    "Origin",
    "Side",
    "build_met",
    "compute_edit_spans",
    "find_met",
    "get_minimum_tree",
    "lcs_pairs",
    "locate_met_online",
    "met_type",
    "span_for_lines",
]


class Side(str, enum.Enum):
    VULNERABLE = "vulnerable"
    FIXED = "fixed"


class Origin(str, enum.Enum):
    SHARED = "shared"
    VULNERABLE_ONLY = "vulnerable_only"
    FIXED_ONLY = "fixed_only"


@dataclass(frozen=True)
class EditSpan:
    side: Side
    line_range: tuple[int, int]
    byte_range: tuple[int, int]
    placeholder: bool = False

    @property
    def start(self) -> int:
        return self.byte_range[0]

    @property
    def end(self) -> int:
        return self.byte_range[1]


def span_for_lines(unit: SourceUnit, first: int, last: int, side: Side = Side.VULNERABLE,
                   placeholder: bool = False) -> EditSpan:
    """Edit span covering lines ``first..last`` of ``unit``.

    The byte range is trimmed to the non-blank content of those lines and a
    trailing ``;`` is dropped, so that a changed one-line statement resolves
    to its expression rather than the enclosing expression statement.
    """
    if first > last:
        raise SpanOutOfRange(f"empty line range {first}..{last}")
    start, _ = unit.line_bounds(first)
    _, end = unit.line_bounds(last)
    data = unit.data
    while start < end and data[start] in b" \t\r\f\v":
        start += 1
    while end > start and data[end - 1] in b" \t\r\f\v":
        end -= 1
    trimmed = end
    if trimmed > start and data[trimmed - 1] == ord(";"):
        trimmed -= 1
        while trimmed > start and data[trimmed - 1] in b" \t":
            trimmed -= 1
    if trimmed > start:
        end = trimmed
    return EditSpan(side, (first, last), (start, end), placeholder)


def lcs_pairs(a: Sequence, b: Sequence) -> list[tuple[int, int]]:
    """Index pairs of one longest common subsequence of ``a`` and ``b``."""
    pre = 0
    while pre < len(a) and pre < len(b) and a[pre] == b[pre]:
        pre += 1
    suf = 0
    while suf < len(a) - pre and suf < len(b) - pre and a[-1 - suf] == b[-1 - suf]:
        suf += 1
    ma, mb = a[pre : len(a) - suf], b[pre : len(b) - suf]
    n, m = len(ma), len(mb)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            row[j] = nxt[j + 1] + 1 if ma[i] == mb[j] else max(nxt[j], row[j + 1])
    pairs = [(k, k) for k in range(pre)]
    i = j = 0
    while i < n and j < m:
        if ma[i] == mb[j]:
            pairs.append((pre + i, pre + j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    pairs.extend((len(a) - suf + k, len(b) - suf + k) for k in range(suf))
    return pairs


def _nonblank(lines: list[str], lo: int, hi: int) -> list[int]:
    return [i for i in range(lo, hi) if lines[i].strip()]


def _anchor(lines: list[str], pos: int) -> int | None:
    """0-based index of the non-blank line preceding ``pos``, else following."""
    for i in range(pos - 1, -1, -1):
        if lines[i].strip():
            return i
    for i in range(pos, len(lines)):
        if lines[i].strip():
            return i
    return None


def compute_edit_spans(vuln: SourceUnit, fixed: SourceUnit) -> tuple[list[EditSpan], list[EditSpan]]:
    """Line-level LCS diff of two comment-stripped units.

    Each hunk of changed lines yields one span per side. When a hunk only
    inserts (or only deletes) lines, the other side gets a placeholder on the
    nearest non-blank line before the insertion point. Whitespace-only and
    blank-line changes are ignored.
    """
    v_lines, f_lines = vuln.lines, fixed.lines
    pairs = lcs_pairs([s.strip() for s in v_lines], [s.strip() for s in f_lines])
    pairs.append((len(v_lines), len(f_lines)))
    v_spans: list[EditSpan] = []
    f_spans: list[EditSpan] = []
    pi = pj = 0
    for i, j in pairs:
        v_changed = _nonblank(v_lines, pi, i)
        f_changed = _nonblank(f_lines, pj, j)
        if v_changed or f_changed:
            for unit, lines, changed, pos, side, out in (
                (vuln, v_lines, v_changed, pi, Side.VULNERABLE, v_spans),
                (fixed, f_lines, f_changed, pj, Side.FIXED, f_spans),
            ):
                if changed:
                    out.append(span_for_lines(unit, changed[0] + 1, changed[-1] + 1, side))
                    continue
                anchor = _anchor(lines, pos)
                if anchor is None:
                    offset = unit.line_bounds(min(pos, len(lines) - 1) + 1)[0]
                    out.append(EditSpan(side, (pos + 1, pos + 1), (offset, offset), placeholder=True))
                else:
                    out.append(span_for_lines(unit, anchor + 1, anchor + 1, side, placeholder=True))
        pi, pj = i + 1, j + 1
    return _dedupe(v_spans), _dedupe(f_spans)


def _dedupe(spans: list[EditSpan]) -> list[EditSpan]:
    seen: dict[tuple[int, int], EditSpan] = {}
    for s in spans:
        seen.setdefault(s.byte_range, s)
    return sorted(seen.values(), key=lambda s: s.byte_range)


def _byte_ranges(edits: Iterable[EditSpan | tuple[int, int]]) -> list[tuple[int, int]]:
    return [e.byte_range if isinstance(e, EditSpan) else (int(e[0]), int(e[1])) for e in edits]


def get_minimum_tree(root: SyntaxNode, edits: Iterable[EditSpan | tuple[int, int]],
                     language: Language | str = Language.C) -> SyntaxNode | None:
    ranges = _byte_ranges(edits)
    if not ranges:
        raise EmptyEdits("no edited spans")
    for s, e in ranges:
        if not root.contains_span(s, e):
            raise SpanOutOfRange(f"edit {s}:{e} outside root {root.start}:{root.end}")
    tax = taxonomy(language)

    def covers(node: SyntaxNode) -> bool:
        return all(node.start <= s and e <= node.end for s, e in ranges)

    def visit(node: SyntaxNode) -> SyntaxNode | None:
        any_child_contains = any(covers(c) for c in node.children)
        if tax.qualifies(node.kind) and covers(node) and not any_child_contains:
            return node
        for child in node.children:
            answer = visit(child)
            if answer is not None:
                return answer
        return None

    return visit(root)


def locate_met_online(v_tree: SyntaxTree, vuln_span: EditSpan | tuple[int, int]) -> SyntaxNode | None:
    """MET root for vulnerable code when only the flagged location is known."""
    return get_minimum_tree(v_tree.root, [vuln_span], v_tree.language)


@dataclass(frozen=True, eq=False)
class MergedNode:
    kind: str
    origin: Origin
    text: str
    children: tuple[MergedNode, ...] = ()

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


def _align_key(node: SyntaxNode) -> tuple[str, str]:
    return (node.kind, node.text if not node.children else "")


def _side_only(node: SyntaxNode, origin: Origin) -> MergedNode:
    return MergedNode(node.kind, origin, node.text, tuple(_side_only(c, origin) for c in node.children))


def merge_trees(v: SyntaxNode, f: SyntaxNode) -> MergedNode:
    """Overlay two edit trees; children are aligned by kind in order."""
    vk = [_align_key(c) for c in v.children]
    fk = [_align_key(c) for c in f.children]
    pairs = lcs_pairs(vk, fk)
    kids: list[MergedNode] = []
    pi = pj = 0
    for i, j in pairs + [(len(vk), len(fk))]:
        kids.extend(_side_only(c, Origin.VULNERABLE_ONLY) for c in v.children[pi:i])
        kids.extend(_side_only(c, Origin.FIXED_ONLY) for c in f.children[pj:j])
        if i < len(vk):
            kids.append(merge_trees(v.children[i], f.children[j]))
        pi, pj = i + 1, j + 1
    return MergedNode(v.kind, Origin.SHARED, v.text, tuple(kids))


@dataclass(frozen=True, eq=False)
class MinimumEditTree:
    v_root: SyntaxNode
    met_type: str
    f_root: SyntaxNode | None = None
    merged: MergedNode | None = None

    def __post_init__(self) -> None:
        if self.v_root.kind != self.met_type:
            raise ValueError("met_type must equal the vulnerable root kind")
        if self.f_root is not None and self.f_root.kind != self.met_type:
            raise ValueError("met_type must equal the fixed root kind")

    @property
    def origin_map(self) -> dict[int, Origin]:
        if self.merged is None:
            return {id(n): Origin.VULNERABLE_ONLY for n in self.v_root.walk()}
        return {id(n): n.origin for n in self.merged.walk()}

    def outline(self, named_only: bool = True) -> list[str]:
        """Indented one-line-per-node listing of the merged view."""
        lines: list[str] = []

        def emit(node: MergedNode, depth: int) -> None:
            if named_only and not node.kind.replace("_", "").isalnum():
                return
            label = node.kind if node.children else f"{node.kind} {node.text!r}"
            lines.append(f"{'  ' * depth}{label} [{node.origin.value}]")
            for c in node.children:
                emit(c, depth + 1)

        emit(self.merged or _side_only(self.v_root, Origin.VULNERABLE_ONLY), 0)
        return lines


class MetStatus(str, enum.Enum):
    OK = "ok"
    DIFFERENT_TYPES = "different_types"
    NO_MET = "no_met"
    NO_EDITS = "no_edits"


@dataclass(frozen=True, eq=False)
class MetResult:
    status: MetStatus
    met: MinimumEditTree | None = None
    v_node: SyntaxNode | None = None
    f_node: SyntaxNode | None = None
    v_edits: tuple[EditSpan, ...] = field(default=())
    f_edits: tuple[EditSpan, ...] = field(default=())


def find_met(v_tree: SyntaxTree, f_tree: SyntaxTree, v_edits: Sequence[EditSpan] | None = None,
             f_edits: Sequence[EditSpan] | None = None) -> MetResult:
    """Like :func:`build_met` but reports why no MET was produced."""
    if v_edits is None or f_edits is None:
        v_edits, f_edits = compute_edit_spans(v_tree.unit, f_tree.unit)
    edits = dict(v_edits=tuple(v_edits), f_edits=tuple(f_edits))
    if not v_edits or not f_edits:
        return MetResult(MetStatus.NO_EDITS, **edits)
    v_node = get_minimum_tree(v_tree.root, v_edits, v_tree.language)
    f_node = get_minimum_tree(f_tree.root, f_edits, f_tree.language)
    if v_node is None or f_node is None:
        return MetResult(MetStatus.NO_MET, v_node=v_node, f_node=f_node, **edits)
    if v_node.kind != f_node.kind:
        return MetResult(MetStatus.DIFFERENT_TYPES, v_node=v_node, f_node=f_node, **edits)
    met = MinimumEditTree(v_node, v_node.kind, f_node, merge_trees(v_node, f_node))
    return MetResult(MetStatus.OK, met, v_node, f_node, **edits)


def build_met(v_tree: SyntaxTree, f_tree: SyntaxTree, v_edits: Sequence[EditSpan] | None = None,
              f_edits: Sequence[EditSpan] | None = None) -> MinimumEditTree | None:
    return find_met(v_tree, f_tree, v_edits, f_edits).met


def met_type(met: MinimumEditTree) -> str:
    return met.met_type
