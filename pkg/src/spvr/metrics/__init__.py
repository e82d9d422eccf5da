"""Scoring candidates against ground truth."""

from __future__ import annotations

from .aggregate import edit_distance_rate, pass_at_k, perfect_patch
from .codebleu import CodeBleuScore, codebleu, dataflow_edges, tokenize
from .tree_edit import LabeledTree, labeled_tree, tree_edit_distance

__all__ = [
    "CodeBleuScore",
    "LabeledTree",
    "codebleu",
    "dataflow_edges",
    "edit_distance_rate",
    "labeled_tree",
    "pass_at_k",
    "perfect_patch",
    "tokenize",
    "tree_edit_distance",
]
