"""Zhang-Shasha ordered tree edit distance with unit costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..errors import EmptyTree
from ..syntax import SyntaxNode, SyntaxTree


@dataclass(frozen=True)
class LabeledTree:
    label: str
    children: tuple["LabeledTree", ...] = ()

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


TreeLike = Union[LabeledTree, SyntaxNode, SyntaxTree]


def labeled_tree(node: SyntaxNode, named_only: bool = False, leaf_text: bool = True) -> LabeledTree:
    """Kind labels for inner nodes; leaves also carry their token text."""
    kids = [c for c in node.children if c.is_named or not named_only]
    if not kids:
        return LabeledTree(f"{node.kind}:{node.text}" if leaf_text else node.kind)
    return LabeledTree(node.kind, tuple(labeled_tree(c, named_only, leaf_text) for c in kids))


def _as_labeled(t: TreeLike | None, named_only: bool, leaf_text: bool) -> LabeledTree:
    if t is None:
        raise EmptyTree("tree is None")
    if isinstance(t, SyntaxTree):
        if not t.unit.text.strip():
            raise EmptyTree("empty source")
        t = t.root
    if isinstance(t, SyntaxNode):
        return labeled_tree(t, named_only, leaf_text)
    return t


def _postorder(t: LabeledTree) -> tuple[list[str], list[int]]:
    """Labels and leftmost-leaf indices in post-order."""
    labels: list[str] = []
    lml: list[int] = []

    def visit(node: LabeledTree) -> int:
        first = None
        for c in node.children:
            leftmost = visit(c)
            if first is None:
                first = leftmost
        labels.append(node.label)
        lml.append(len(labels) - 1 if first is None else first)
        return lml[-1]

    visit(t)
    return labels, lml


def _keyroots(lml: list[int]) -> list[int]:
    seen: dict[int, int] = {}
    for i, l in enumerate(lml):
        seen[l] = i  # highest index sharing this leftmost leaf
    return sorted(seen.values())


def tree_edit_distance(t1: TreeLike, t2: TreeLike, named_only: bool = False, leaf_text: bool = True) -> int:
    """Insert, delete and relabel each cost 1."""
    a = _as_labeled(t1, named_only, leaf_text)
    b = _as_labeled(t2, named_only, leaf_text)
    la, lml_a = _postorder(a)
    lb, lml_b = _postorder(b)
    td = [[0] * len(lb) for _ in la]

    for i in _keyroots(lml_a):
        for j in _keyroots(lml_b):
            ai, bj = lml_a[i], lml_b[j]
            m, n = i - ai + 2, j - bj + 2
            fd = [[0] * n for _ in range(m)]
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, m):
                for y in range(1, n):
                    i1, j1 = ai + x - 1, bj + y - 1
                    if lml_a[i1] == ai and lml_b[j1] == bj:
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[x - 1][y - 1] + (la[i1] != lb[j1]),
                        )
                        td[i1][j1] = fd[x][y]
                    else:
                        p, q = lml_a[i1] - ai, lml_b[j1] - bj
                        fd[x][y] = min(fd[x - 1][y] + 1, fd[x][y - 1] + 1, fd[p][q] + td[i1][j1])
    return td[-1][-1]
