"""End-to-end stages: repair (MET, rules, prompts, completions, extraction) and eval."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Corpus, RepairSample, ingest
from .errors import (
    AuthError, ConfigError, EndpointError, MissingTruth, ParseFailure, SpanOutOfRange, UnknownCwe,
    UnmatchedPrompt,
)
from .extract import extract_patch
from .gateway import ChatAdapter, Gateway, HttpChatAdapter, MockAdapter, ModelConfig
from .met import MetStatus, Side, find_met, locate_met_online, span_for_lines
from .metrics import codebleu, pass_at_k, perfect_patch, tree_edit_distance
from .metrics.aggregate import edit_distance_rate
from .prompts import PromptBundle, PromptConfig, PromptVariant, assemble_prompts
from .rules import MODELED_TYPES, RuleConfig, run_rules
from .syntax import Language, SyntaxNode, SyntaxTree, parse, parse_code, to_plain_code

log = logging.getLogger(__name__)

__all__ = ["EvalReport", "RepairArtifacts", "RunConfig", "prepare_sample", "run_eval", "run_repair"]


# --------------------------------------------------------------------------
# configuration


def _sub(cls, data: Mapping | None, name: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown {name} settings: {sorted(extra)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} settings: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    corpus: Path | None = None
    output_dir: Path = Path("spvr-out")
    cache_dir: Path | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    rules: RuleConfig = field(default_factory=RuleConfig)
    prompts: PromptConfig = field(default_factory=PromptConfig)
    k: int = 3
    distance_threshold: int = 5
    mock_script: Path | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.distance_threshold < 1:
            raise ConfigError("distance_threshold must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping, base: Path | None = None) -> "RunConfig":
        """Build from a JSON object; relative paths resolve against ``base``."""
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown settings: {sorted(extra)}")

        def path(key: str) -> Path | None:
            value = data.get(key)
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() or base is None else base / p

        prompt_data = dict(data.get("prompts") or {})
        if "variant" in prompt_data:
            try:
                prompt_data["variant"] = PromptVariant(prompt_data["variant"])
            except ValueError:
                raise ConfigError(f"unknown prompt variant {prompt_data['variant']!r}") from None
        try:
            model = ModelConfig.from_dict(data.get("model") or {})
        except TypeError as exc:
            raise ConfigError(f"bad model settings: {exc}") from None
        kwargs = dict(
            corpus=path("corpus"),
            cache_dir=path("cache_dir"),
            mock_script=path("mock_script"),
            model=model,
            rules=_sub(RuleConfig, data.get("rules"), "rules"),
            prompts=_sub(PromptConfig, prompt_data, "prompts"),
        )
        if "output_dir" in data:
            kwargs["output_dir"] = path("output_dir")
        for key in ("k", "distance_threshold", "jobs"):
            if key in data:
                if not isinstance(data[key], int) or isinstance(data[key], bool):
                    raise ConfigError(f"{key} must be an integer")
                kwargs[key] = data[key]
        return cls(**kwargs)

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data, Path(path).parent)


def _write_jsonl(path: Path, rows: Iterable[Mapping]) -> None:
    path.write_text("".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows), "utf-8")


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text("utf-8").splitlines() if line.strip()]


# --------------------------------------------------------------------------
# repair


@dataclass
class Prepared:
    """A sample ready for completion, or the reason it is not."""

    sample: RepairSample
    bundles: list[PromptBundle] = field(default_factory=list)
    truth: str | None = None
    met_type: str | None = None
    reason: str | None = None


def _online_met(sample: RepairSample, tree: SyntaxTree) -> SyntaxNode | None:
    first, last = sample.vuln_lines
    span = span_for_lines(sample.vuln, first, last, Side.VULNERABLE)
    return locate_met_online(tree, span)


def prepare_sample(sample: RepairSample, cfg: RunConfig) -> Prepared:
    """MET, rule findings and prompt bundles for one sample."""
    out = Prepared(sample)
    try:
        tree = parse(sample.vuln)
    except ParseFailure:
        out.reason = "ParseFailure"
        return out
    if sample.fixed is not None:
        try:
            result = find_met(tree, parse(sample.fixed))
        except ParseFailure:
            out.reason = "ParseFailure"
            return out
        if result.status is not MetStatus.OK:
            out.reason = {
                MetStatus.DIFFERENT_TYPES: "DifferentTypes",
                MetStatus.NO_MET: "NoMet",
                MetStatus.NO_EDITS: "NoEdits",
            }[result.status]
            return out
        met_root = result.met.v_root
        out.truth = to_plain_code(result.met.f_root, sample.fixed)
    elif sample.vuln_lines is not None:
        try:
            met_root = _online_met(sample, tree)
        except SpanOutOfRange:
            out.reason = "SpanOutOfRange"
            return out
        if met_root is None:
            out.reason = "NoMet"
            return out
    else:
        out.reason = "NoFixedCode"
        return out

    out.met_type = met_root.kind
    if met_root.kind not in MODELED_TYPES:
        out.reason = "UnsupportedMetType"
        return out
    findings = run_rules(met_root, tree, cfg.rules)
    try:
        out.bundles = assemble_prompts(sample.id, sample.cwe_id, met_root, tree, findings, cfg.prompts, cfg.rules)
    except UnknownCwe:
        out.reason = "UnknownCwe"
    return out


@dataclass
class RepairArtifacts:
    prompts: Path
    candidates: Path
    truth: Path
    unsupported: Path
    supported: int = 0
    unsupported_count: int = 0
    network_calls: int = 0


def _adapter(cfg: RunConfig) -> ChatAdapter:
    if cfg.model.endpoint_url.startswith("mock:"):
        if cfg.mock_script is None:
            raise ConfigError("a mock endpoint needs mock_script")
        try:
            script = json.loads(Path(cfg.mock_script).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read mock script: {exc}") from None
        return MockAdapter(script)
    return HttpChatAdapter()


def run_repair(cfg: RunConfig, corpus: Corpus | None = None, adapter: ChatAdapter | None = None) -> RepairArtifacts:
    """Run every sample through MET, rules, prompts, completion and extraction."""
    if corpus is None:
        if cfg.corpus is None:
            raise ConfigError("no corpus configured")
        corpus = ingest(Path(cfg.corpus))
    adapter = adapter or _adapter(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway = Gateway(cfg.model, adapter, cfg.cache_dir or out_dir / "cache")

    prompts, candidates, truth, unsupported = [], [], [], []
    for sample in corpus:
        prep = prepare_sample(sample, cfg)
        if prep.reason is not None:
            unsupported.append({"sample_id": sample.id, "reason": prep.reason, "met_type": prep.met_type})
            continue
        jobs = [(b.sample_id, b.ordinal, b.assembled) for b in prep.bundles]
        try:
            records = gateway.complete_many(jobs)
        except AuthError:
            raise
        except (EndpointError, UnmatchedPrompt) as exc:
            log.warning("sample %s: completion failed: %s", sample.id, exc)
            unsupported.append({"sample_id": sample.id, "reason": type(exc).__name__, "met_type": prep.met_type})
            continue
        prompts += [dict(b.to_dict(), cwe_id=sample.cwe_id) for b in prep.bundles]
        if prep.truth is not None:
            truth.append({"sample_id": sample.id, "met_type": prep.met_type, "code": prep.truth,
                          "language": sample.language.value})
        for rec in records:
            cand = extract_patch(rec.raw_text, prep.met_type, sample.language, rec.sample_id, rec.ordinal, rec.attempt)
            candidates.append(dict(cand.to_dict(), met_type=prep.met_type, language=sample.language.value))

    art = RepairArtifacts(out_dir / "prompts.jsonl", out_dir / "candidates.jsonl", out_dir / "truth.jsonl",
                          out_dir / "unsupported.jsonl")
    _write_jsonl(art.prompts, prompts)
    _write_jsonl(art.candidates, candidates)
    _write_jsonl(art.truth, truth)
    _write_jsonl(art.unsupported, unsupported)
    art.supported = len(corpus) - len(unsupported)
    art.unsupported_count = len(unsupported)
    art.network_calls = gateway.network_calls
    log.info("repair: %d supported, %d unsupported, %d model calls", art.supported, len(unsupported),
             gateway.network_calls)
    return art


# --------------------------------------------------------------------------
# evaluation


@dataclass
class SampleRow:
    sample_id: str
    met_type: str
    best_codebleu: float
    min_tree_edit_distance: int | None
    perfect: bool
    components: dict[str, float]
    attempts: list[bool]


@dataclass
class EvalReport:
    rows: list[SampleRow]
    k: int
    threshold: int

    @property
    def pass_count(self) -> int:
        return pass_at_k([r.attempts for r in self.rows], self.k)[0] if self.rows else 0

    @property
    def pass_rate(self) -> float:
        return self.pass_count / len(self.rows) if self.rows else 0.0

    def to_dict(self) -> dict:
        n = len(self.rows)
        mean = lambda xs: sum(xs) / n if n else 0.0  # noqa: E731
        per_type: dict[str, list[SampleRow]] = defaultdict(list)
        for r in self.rows:
            per_type[r.met_type].append(r)
        return {
            "samples": n,
            "k": self.k,
            "pass_at_k": {"count": self.pass_count, "rate": round(self.pass_rate, 6)},
            "codebleu": {
                "total": round(mean([r.best_codebleu for r in self.rows]), 6),
                **{c: round(mean([r.components[c] for r in self.rows]), 6)
                   for c in ("ngram", "weighted_ngram", "syntax", "dataflow")},
            },
            "edit_distance": {
                "threshold": self.threshold,
                "rate": round(edit_distance_rate([r.min_tree_edit_distance for r in self.rows], self.threshold), 6),
            },
            "by_met_type": {
                t: {"samples": len(rs), "pass_count": pass_at_k([r.attempts for r in rs], self.k)[0]}
                for t, rs in sorted(per_type.items())
            },
            "rows": [
                {"sample_id": r.sample_id, "met_type": r.met_type, "best_codebleu": round(r.best_codebleu, 6),
                 "min_tree_edit_distance": r.min_tree_edit_distance, "perfect": r.perfect}
                for r in self.rows
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "met_type", "best_codebleu", "min_tree_edit_distance", "perfect"])
        for r in self.rows:
            dist = "" if r.min_tree_edit_distance is None else r.min_tree_edit_distance
            w.writerow([r.sample_id, r.met_type, f"{r.best_codebleu:.6f}", dist, int(r.perfect)])
        return buf.getvalue()


_ZERO = {"ngram": 0.0, "weighted_ngram": 0.0, "syntax": 0.0, "dataflow": 0.0}


def _score_sample(sample_id: str, truth: Mapping, cands: list[Mapping], k: int) -> SampleRow:
    ref = truth["code"]
    lang = Language.from_name(truth.get("language", "c"))
    ref_tree = parse_code(ref, lang)
    attempts = [False] * k
    best, best_parts, best_dist = 0.0, dict(_ZERO), None
    for c in cands:
        if not 1 <= c["attempt"] <= k or c["status"] == "Failed" or not c["code"].strip():
            continue
        if perfect_patch(c["code"], ref):
            attempts[c["attempt"] - 1] = True
        score = codebleu(c["code"], ref, language=lang)
        if score.total > best:
            best, best_parts = score.total, {key: v for key, v in score.to_dict().items() if key != "total"}
        try:
            d = tree_edit_distance(parse_code(c["code"], lang), ref_tree)
        except ParseFailure:
            continue
        best_dist = d if best_dist is None else min(best_dist, d)
    return SampleRow(sample_id, truth.get("met_type", ""), best, best_dist, any(attempts), best_parts, attempts)


def run_eval(candidates: Path | list[Mapping], truth: Path | list[Mapping], k: int = 3, threshold: int = 5,
             out_dir: Path | None = None, allow_empty: bool = False) -> EvalReport:
    """Score candidates against truth; every truth sample gets one row."""
    cand_rows = _read_jsonl(candidates) if isinstance(candidates, (str, Path)) else list(candidates)
    truth_rows = _read_jsonl(truth) if isinstance(truth, (str, Path)) else list(truth)
    truth_map = {t["sample_id"]: t for t in truth_rows}
    if not cand_rows and not allow_empty:
        raise MissingTruth("no candidates to evaluate")
    grouped: dict[str, list[Mapping]] = defaultdict(list)
    for c in cand_rows:
        if c["sample_id"] not in truth_map:
            raise MissingTruth(f"no ground truth for sample {c['sample_id']!r}")
        grouped[c["sample_id"]].append(c)
    order = list(truth_map) if cand_rows else []
    rows = [_score_sample(sid, truth_map[sid], grouped.get(sid, []), k) for sid in order]
    report = EvalReport(rows, k, threshold)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")
        (out_dir / "report.csv").write_text(report.to_csv(), "utf-8")
    return report
