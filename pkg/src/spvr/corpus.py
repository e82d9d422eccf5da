"""Vulnerable/fixed function pairs: JSONL ingestion and MET-type statistics."""

from __future__ import annotations

import io
import json
import logging
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .errors import MalformedRecord, ParseFailure
from .met import MetResult, MetStatus, find_met
from .rules import MODELED_TYPES
from .syntax import Language, SourceUnit, SyntaxTree, parse, strip_comments

log = logging.getLogger(__name__)

__all__ = [
    "Corpus",
    "MetStats",
    "RepairSample",
    "dump",
    "filter_top25",
    "ingest",
    "met_type_stats",
    "sample_bucket",
]

CWE_ID = re.compile(r"^CWE-\d+$")
OTHERS = "others"
DIFFERENT = "of different types"
BUCKETS = MODELED_TYPES + (OTHERS, DIFFERENT)


@dataclass
class RepairSample:
    id: str
    cwe_id: str
    vuln: SourceUnit
    fixed: SourceUnit | None = None
    parse_degraded: bool = False
    vuln_lines: tuple[int, int] | None = None
    _met: MetResult | None = field(default=None, repr=False, compare=False)

    @property
    def language(self) -> Language:
        return self.vuln.language

    def vuln_tree(self) -> SyntaxTree:
        return parse(self.vuln)

    def met_result(self) -> MetResult:
        """MET of the pair, computed once."""
        if self._met is None:
            if self.fixed is None:
                raise ValueError(f"sample {self.id} has no fixed code")
            self._met = find_met(parse(self.vuln), parse(self.fixed))
        return self._met

    def to_record(self) -> dict:
        rec = {"id": self.id, "cwe_id": self.cwe_id, "language": self.language.value,
               "vuln_code": self.vuln.text}
        if self.fixed is not None:
            rec["fixed_code"] = self.fixed.text
        if self.vuln_lines is not None:
            rec["vuln_lines"] = list(self.vuln_lines)
        return rec


@dataclass
class Corpus:
    samples: list[RepairSample] = field(default_factory=list)
    dropped_identical: int = 0

    def __iter__(self) -> Iterator[RepairSample]:
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self) -> dict[str, RepairSample]:
        return {s.id: s for s in self.samples}


def _field(rec: Mapping, name: str, line_no: int, required: bool = True) -> str | None:
    value = rec.get(name)
    if value is None:
        if required:
            raise MalformedRecord(line_no, f"missing {name}")
        return None
    if not isinstance(value, str):
        raise MalformedRecord(line_no, f"{name} must be a string")
    return value


def _degraded(unit: SourceUnit) -> bool:
    try:
        return parse(unit).degraded
    except ParseFailure:
        return True


def _stripped(unit: SourceUnit) -> SourceUnit:
    # text the grammar rejects outright keeps its comments; it is flagged
    # as degraded and left out of the statistics anyway
    try:
        return strip_comments(unit)
    except ParseFailure:
        return unit


def _content(unit: SourceUnit) -> list[str]:
    """Non-blank lines with surrounding whitespace removed."""
    return [line.strip() for line in unit.text.splitlines() if line.strip()]


def _lines(source: str | Path | IO[str] | Iterable[str]) -> Iterable[str]:
    if isinstance(source, Path):
        return source.read_text("utf-8").splitlines()
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def ingest(source: str | Path | IO[str] | Iterable[str]) -> Corpus:
    """Read JSONL records, strip comments, and drop pairs left identical.

    ``source`` is a path, a JSONL string, or an iterable of lines.
    """
    corpus = Corpus()
    seen: set[str] = set()
    for line_no, line in enumerate(_lines(source), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise MalformedRecord(line_no, "record is not an object")
        sid = rec.get("id")
        if not isinstance(sid, (str, int)) or isinstance(sid, bool) or str(sid) == "":
            raise MalformedRecord(line_no, "missing id")
        sid = str(sid)
        if sid in seen:
            raise MalformedRecord(line_no, f"duplicate id {sid!r}")
        cwe = _field(rec, "cwe_id", line_no).strip().upper()
        if not CWE_ID.match(cwe):
            raise MalformedRecord(line_no, f"bad cwe_id {rec['cwe_id']!r}")
        vuln_code = _field(rec, "vuln_code", line_no)
        fixed_code = _field(rec, "fixed_code", line_no, required=False)
        try:
            language = Language.from_name(_field(rec, "language", line_no, required=False) or "c")
        except ValueError as exc:
            raise MalformedRecord(line_no, str(exc)) from None

        vuln_lines = rec.get("vuln_lines")
        if vuln_lines is not None:
            if (not isinstance(vuln_lines, list) or len(vuln_lines) != 2
                    or not all(isinstance(n, int) and n >= 1 for n in vuln_lines) or vuln_lines[0] > vuln_lines[1]):
                raise MalformedRecord(line_no, "vuln_lines must be [first, last] 1-based line numbers")
            vuln_lines = (vuln_lines[0], vuln_lines[1])

        vuln = _stripped(SourceUnit(vuln_code, language))
        fixed = _stripped(SourceUnit(fixed_code, language)) if fixed_code is not None else None
        if fixed is not None and _content(fixed) == _content(vuln):
            corpus.dropped_identical += 1
            continue
        seen.add(sid)
        corpus.samples.append(RepairSample(sid, cwe, vuln, fixed, _degraded(vuln), vuln_lines))
    log.info("ingested %d samples, dropped %d identical pairs", len(corpus), corpus.dropped_identical)
    return corpus


def dump(corpus: Corpus, out: Path | IO[str]) -> None:
    lines = "".join(json.dumps(s.to_record(), ensure_ascii=False) + "\n" for s in corpus)
    if isinstance(out, Path):
        out.write_text(lines, "utf-8")
    else:
        out.write(lines)


def filter_top25(corpus: Corpus, cwe_table: Mapping[str, object] | None = None) -> Corpus:
    if cwe_table is None:
        from .prompts import cwe_table as load

        cwe_table = load()
    return Corpus([s for s in corpus if s.cwe_id in cwe_table], corpus.dropped_identical)


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class MetStats:
    """Per-bucket counts over samples with a parseable vulnerable side.

    ``excluded`` holds samples left out: degraded parses and pairs without
    fixed code.
    """

    counts: dict[str, int]
    excluded: int = 0

    @classmethod
    def from_counts(cls, counts: Mapping[str, int] | Sequence[int], excluded: int = 0) -> "MetStats":
        if not isinstance(counts, Mapping):
            if len(counts) != len(BUCKETS):
                raise ValueError(f"expected {len(BUCKETS)} counts")
            counts = dict(zip(BUCKETS, counts))
        unknown = set(counts) - set(BUCKETS)
        if unknown:
            raise ValueError(f"unknown buckets {sorted(unknown)}")
        return cls({b: int(counts.get(b, 0)) for b in BUCKETS}, excluded)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def share(self, *buckets: str) -> float:
        return sum(self.counts[b] for b in buckets) / self.total if self.total else 0.0

    @property
    def percentages(self) -> dict[str, float]:
        return {b: 100 * self.share(b) for b in BUCKETS}

    @property
    def coverage(self) -> float:
        """Percent of samples whose MET is one of the six modeled types."""
        return 100 * self.share(*MODELED_TYPES)

    @property
    def same_type_share(self) -> float:
        """Percent of samples whose two sides agree on MET type."""
        return 100 * (1 - self.share(DIFFERENT)) if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"met_type": b, "quantity": self.counts[b], "percentage": round(self.percentages[b], 2)}
                for b in BUCKETS
            ],
            "total": self.total,
            "excluded": self.excluded,
            "coverage": round(self.coverage, 2),
            "same_type_share": round(self.same_type_share, 2),
        }

    def render(self) -> str:
        width = max(len(b) for b in BUCKETS)
        rows = [f"{'MET type':<{width}}  {'Quantity':>8}  {'Percentage':>10}"]
        for b in BUCKETS:
            rows.append(f"{b:<{width}}  {self.counts[b]:>8}  {self.percentages[b]:>9.2f}%")
        rows.append(f"{'total':<{width}}  {self.total:>8}")
        rows.append(f"six-type coverage {self.coverage:.2f}%, same-type share {self.same_type_share:.2f}%")
        return "\n".join(rows)


def bucket_of(result: MetResult) -> str:
    if result.status is MetStatus.DIFFERENT_TYPES:
        return DIFFERENT
    if result.status is MetStatus.OK and result.met.met_type in MODELED_TYPES:
        return result.met.met_type
    # unmodeled kinds and edits without any qualifying subtree
    return OTHERS


def sample_bucket(sample: RepairSample) -> str | None:
    """Stats bucket of one sample, or None when it is excluded."""
    if sample.parse_degraded or sample.fixed is None:
        return None
    try:
        return bucket_of(sample.met_result())
    except ParseFailure:
        return None


def met_type_stats(corpus: Corpus | Iterable[RepairSample], jobs: int = 1) -> MetStats:
    samples = list(corpus)
    if jobs > 1 and len(samples) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            buckets = list(pool.map(sample_bucket, samples, chunksize=16))
    else:
        buckets = [sample_bucket(s) for s in samples]
    counts = Counter(b for b in buckets if b is not None)
    return MetStats.from_counts(counts, excluded=sum(1 for b in buckets if b is None))
