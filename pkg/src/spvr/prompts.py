"""Prompt assembly: CWE sentence, one rule directive, and trimmed code."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .errors import UnknownCwe, UnsupportedMetType
from .met import MinimumEditTree
from .rules import (
    DEF, FOR, IF, MODELED_TYPES, RuleConfig, RuleFinding, _header, _variable_refs,
    fallback_instruction, possible_variables,
)
from .syntax import Language, SyntaxNode, SyntaxTree

__all__ = [
    "CweEntry",
    "PromptBundle",
    "PromptConfig",
    "PromptVariant",
    "assemble_prompts",
    "cwe_info",
    "cwe_table",
    "regenerate_code",
]

CWE_SENTENCE = re.compile(r"^This (\w+) has a problem of (.+)\.$")


@dataclass(frozen=True)
class CweEntry:
    cwe_id: str
    name: str
    rank: int

    @property
    def description(self) -> str:
        # official one-line names double as the prompt description
        return self.name


@lru_cache(maxsize=None)
def cwe_table() -> dict[str, CweEntry]:
    raw = json.loads(resources.files("spvr.data").joinpath("cwe_top25_2023.json").read_text("utf-8"))
    return {e["cwe_id"]: CweEntry(e["cwe_id"], e["name"], e["rank"]) for e in raw["entries"]}


def cwe_info(cwe_id: str, met_type: str) -> str:
    entry = cwe_table().get(cwe_id.strip().upper())
    if entry is None:
        raise UnknownCwe(cwe_id)
    return f"This {met_type} has a problem of {entry.description}."


@lru_cache(maxsize=None)
def _prompt_template() -> dict:
    return json.loads(resources.files("spvr.data").joinpath("prompt_template.json").read_text("utf-8"))


# --------------------------------------------------------------------------
# code regeneration


def _statement_blocks(root: SyntaxNode) -> list[SyntaxNode]:
    """Statements directly inside the bodies of an if/for MET."""
    bodies: list[SyntaxNode] = []
    if root.kind == IF:
        bodies += [c for c in root.children if c.field_name == "consequence"]
        alt = root.child_by_field("alternative")
        if alt is not None:
            bodies += [c for c in alt.named_children]
    else:
        bodies += [c for c in root.children if c.field_name == "body"]
    stmts: list[SyntaxNode] = []
    for body in bodies:
        if body.kind == "compound_statement":
            stmts += [c for c in body.named_children if c.kind != "comment"]
        else:
            stmts.append(body)
    return stmts


def _keeps(stmt: SyntaxNode, tree: SyntaxTree, keep: set[str]) -> bool:
    if stmt.kind == "return_statement":
        return True
    if stmt.first("string_literal") is not None or stmt.first("concatenated_string") is not None:
        return True
    return any(r.key in keep for r in _variable_refs([stmt], tree))


def _lines_within(tree: SyntaxTree, start: int, end: int, skip: Sequence[tuple[int, int]] = ()) -> list[str]:
    """Source lines overlapping ``[start, end)``, clipped to that range.

    Lines whose remaining content lies entirely inside ``skip`` ranges are
    dropped.
    """
    unit = tree.unit
    out = []
    for line in range(unit.line_of(start), unit.line_of(max(start, end - 1)) + 1):
        lo, hi = unit.line_bounds(line)
        lo, hi = max(lo, start), min(hi, end)
        kept = [
            b for b in range(lo, hi)
            if unit.data[b] not in b" \t\r" and not any(s <= b < e for s, e in skip)
        ]
        if kept:
            out.append(unit.data[lo:hi].decode("utf-8", errors="replace"))
    return out


def _fit(lines: list[str], budget: int, minimum: int = 1) -> str:
    """Join lines, dropping trailing ones past the character budget."""
    out: list[str] = []
    size = 0
    for i, line in enumerate(lines):
        size += len(line) + (1 if out else 0)
        if size > budget and i >= minimum:
            break
        out.append(line)
    return "\n".join(out)


def _tail_end(root: SyntaxNode, tree: SyntaxTree) -> int:
    func = tree.enclosing(root, DEF)
    body = func.child_by_field("body") if func is not None else None
    stmts = body.named_children if body is not None else tree.root.named_children
    ends = [s.end for s in stmts if s.kind != "comment" and s.start >= root.end]
    return max([root.end] + ends)


def regenerate_code(tree: SyntaxTree, met: MinimumEditTree | SyntaxNode, keep_vars: Iterable[str] = (),
                    budget: int = 3000) -> str:
    """Trimmed code shown to the model.

    if/for: header kept, body statements kept only when they mention a kept
    variable, hold a string literal, or return. function_definition: the
    function from the top. Other types: the MET and the code after it.
    """
    root = met.v_root if isinstance(met, MinimumEditTree) else met
    if root.kind in (IF, FOR):
        keep = {re.sub(r"\s+", "", v) for v in keep_vars}
        dropped = [(s.start, s.end) for s in _statement_blocks(root) if not _keeps(s, tree, keep)]
        lines = _lines_within(tree, root.start, root.end, dropped)
        return _fit(lines, budget)
    if root.kind == DEF:
        return _fit(_lines_within(tree, root.start, root.end), budget)
    lines = _lines_within(tree, root.start, _tail_end(root, tree))
    met_lines = tree.unit.line_of(max(root.start, root.end - 1)) - tree.unit.line_of(root.start) + 1
    return _fit(lines, budget, minimum=met_lines)


def default_keep_vars(met: MinimumEditTree | SyntaxNode, tree: SyntaxTree, cfg: RuleConfig | None = None) -> list[str]:
    """Header variables plus possible-variable-use predictions."""
    root = met.v_root if isinstance(met, MinimumEditTree) else met
    header = [r.text for r in _variable_refs(_header(root), tree)] if root.kind in (IF, FOR) else []
    return list(dict.fromkeys(header + possible_variables(root, tree, cfg)))


# --------------------------------------------------------------------------
# assembly


class PromptVariant(str, enum.Enum):
    FULL = "full"
    WITHOUT_MET = "without_met"
    WITHOUT_CWE = "without_cwe"
    SOLE = "sole"


@dataclass(frozen=True)
class PromptConfig:
    regen_budget: int = 3000
    max_prompts: int = 3
    variant: PromptVariant = PromptVariant.FULL


@dataclass(frozen=True)
class PromptBundle:
    sample_id: str
    ordinal: int
    met_type: str
    cwe_part: str
    met_part: str
    regen_code: str
    assembled: str
    check_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "ordinal": self.ordinal,
            "met_type": self.met_type,
            "check_id": self.check_id,
            "text": self.assembled,
        }


def _assemble(cwe_part: str, met_part: str, regen: str, met_type: str, language: Language) -> str:
    tpl = _prompt_template()
    fence = "cpp" if language is Language.CPP else "c"
    directive = tpl["format_directive"].format(met_type=met_type, fence_lang=fence)
    text = tpl["layout"].format(
        cwe_part=cwe_part, met_part=met_part, regen_code=regen, fence_lang=fence, format_directive=directive
    )
    # ablation variants leave a part empty; drop the blank header line it leaves
    head, sep, rest = text.partition("The code to repair is:")
    head = "".join(line + "\n" for line in head.split("\n") if line)
    return head + sep + rest


def assemble_prompts(sample_id: str, cwe_id: str, met: MinimumEditTree | SyntaxNode, tree: SyntaxTree,
                     findings: Sequence[RuleFinding], cfg: PromptConfig | None = None,
                     rule_cfg: RuleConfig | None = None) -> list[PromptBundle]:
    """One bundle per finding (at most ``cfg.max_prompts``), or one fallback."""
    cfg = cfg or PromptConfig()
    root = met.v_root if isinstance(met, MinimumEditTree) else met
    met_type = root.kind
    if met_type not in MODELED_TYPES:
        raise UnsupportedMetType(met_type)
    cwe_part = cwe_info(cwe_id, met_type)
    regen = regenerate_code(tree, root, default_keep_vars(root, tree, rule_cfg), cfg.regen_budget)

    parts: list[tuple[str, str | None]] = [(f.instruction, f.check_id.value) for f in findings[: cfg.max_prompts]]
    if not parts:
        parts = [(fallback_instruction(met_type), None)]
    if cfg.variant is PromptVariant.WITHOUT_MET or cfg.variant is PromptVariant.SOLE:
        parts = [("", None)]
    if cfg.variant is PromptVariant.WITHOUT_CWE:
        cwe_part = ""
    if cfg.variant is PromptVariant.SOLE:
        cwe_part = _prompt_template()["sole_llm"]

    bundles = []
    for ordinal, (met_part, check) in enumerate(parts, 1):
        text = _assemble(cwe_part, met_part, regen, met_type, tree.language)
        bundles.append(PromptBundle(sample_id, ordinal, met_type, cwe_part, met_part, regen, text, check))
    return bundles
