"""Pull a candidate patch of the expected MET type out of raw model output."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import ParseFailure
from .syntax import Language, SyntaxNode, SyntaxTree, parse_code, to_plain_code

__all__ = ["ExtractionStatus", "RepairCandidate", "extract_patch", "fenced_blocks", "reparses_to"]

# ``` or ~~~ fences with an optional info string; an unterminated final fence
# runs to the end of the text
_FENCE = re.compile(r"^[ \t]*(```|~~~)[^\n]*\n(.*?)(?:^[ \t]*\1[ \t]*$|\Z)", re.DOTALL | re.MULTILINE)


class ExtractionStatus(str, enum.Enum):
    EXACT = "Exact"
    FENCE_STRIPPED = "FenceStripped"
    FAILED = "Failed"


@dataclass(frozen=True)
class RepairCandidate:
    sample_id: str
    ordinal: int
    attempt: int
    code: str
    extraction_status: ExtractionStatus

    @property
    def ok(self) -> bool:
        return self.extraction_status is not ExtractionStatus.FAILED

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "ordinal": self.ordinal,
            "attempt": self.attempt,
            "status": self.extraction_status.value,
            "code": self.code,
        }


def fenced_blocks(text: str) -> list[str]:
    return [m.group(2) for m in _FENCE.finditer(text)]


def _parse(text: str, language: Language) -> SyntaxTree | None:
    if not text.strip():
        return None
    try:
        return parse_code(text, language)
    except ParseFailure:
        return None


def _first_clean(tree: SyntaxTree, met_type: str) -> SyntaxNode | None:
    for node in tree.walk():
        if node.kind == met_type and not node.has_error and not node.is_error:
            return node
    return None


def reparses_to(code: str, met_type: str, language: Language | str = Language.C) -> bool:
    """True when ``code`` parses cleanly and a ``met_type`` node spans all of it."""
    stripped = code.strip()
    tree = _parse(stripped, Language.from_name(language))
    if tree is None or tree.degraded:
        return False
    size = len(tree.unit.data)
    return any(n.kind == met_type and n.start == 0 and n.end == size for n in tree.walk())


def _pick(text: str, met_type: str, language: Language, clean_only: bool) -> str | None:
    tree = _parse(text, language)
    if tree is None or (clean_only and tree.degraded):
        return None
    node = _first_clean(tree, met_type)
    if node is None:
        return None
    code = to_plain_code(node, tree.unit)
    return code if reparses_to(code, met_type, language) else None


def extract_patch(raw_text: str, met_type: str, language: Language | str = Language.C,
                  sample_id: str = "", ordinal: int = 1, attempt: int = 1) -> RepairCandidate:
    """First ``met_type`` subtree in the reply.

    Tries the whole reply, then each fenced block in order, then the
    error-free parts of the whole reply. Failure is a status, never raised.
    """
    lang = Language.from_name(language)

    def done(code: str, status: ExtractionStatus) -> RepairCandidate:
        return RepairCandidate(sample_id, ordinal, attempt, code, status)

    code = _pick(raw_text, met_type, lang, clean_only=True)
    if code is not None:
        return done(code, ExtractionStatus.EXACT)
    for block in fenced_blocks(raw_text):
        code = _pick(block, met_type, lang, clean_only=False)
        if code is not None:
            return done(code, ExtractionStatus.FENCE_STRIPPED)
    unfenced = _FENCE.sub(lambda m: m.group(2), raw_text)
    code = _pick(unfenced, met_type, lang, clean_only=False)
    if code is not None:
        return done(code, ExtractionStatus.FENCE_STRIPPED)
    return done("", ExtractionStatus.FAILED)
