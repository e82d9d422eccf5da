"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .corpus import Corpus, filter_top25, ingest, met_type_stats
from .errors import ConfigError, MalformedRecord, MissingTruth, SpvrError
from .met import MetStatus, find_met
from .pipeline import RunConfig, prepare_sample, run_eval, run_repair
from .rules import run_rules
from .syntax import parse

log = logging.getLogger("spvr")

EXIT_OK, EXIT_CONFIG, EXIT_EMPTY = 0, 1, 2


class EmptyInput(SpvrError):
    """Nothing usable to work on."""


def _load_records(path: Path) -> Corpus:
    """A single JSON object, a JSON array, or JSON Lines."""
    text = path.read_text("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return ingest(text)
    if isinstance(data, dict):
        data = [data]
    if isinstance(data, list):
        return ingest(json.dumps(r) for r in data)
    raise MalformedRecord(1, "expected an object, an array, or JSON lines")


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {}
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.cache_dir is not None:
        changes["cache_dir"] = args.cache_dir
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _emit(obj, out: Path | None = None) -> None:
    text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, "utf-8")


def _one_sample(args: argparse.Namespace):
    corpus = _load_records(args.input)
    if not len(corpus):
        raise EmptyInput(f"no usable sample in {args.input}")
    return corpus


def cmd_met(args: argparse.Namespace, cfg: RunConfig) -> int:
    results = []
    for sample in _one_sample(args):
        if sample.fixed is None:
            raise ConfigError(f"sample {sample.id} has no fixed_code")
        v_tree = parse(sample.vuln)
        res = find_met(v_tree, parse(sample.fixed))
        row = {
            "sample_id": sample.id,
            "status": res.status.value,
            "vuln_edit_lines": [list(e.line_range) for e in res.v_edits],
            "fixed_edit_lines": [list(e.line_range) for e in res.f_edits],
            "vuln_kind": res.v_node.kind if res.v_node is not None else None,
            "fixed_kind": res.f_node.kind if res.f_node is not None else None,
        }
        if res.status is MetStatus.OK:
            row["met_type"] = res.met.met_type
            row["met_lines"] = list(res.met.v_root.line_span)
            if args.outline:
                row["outline"] = res.met.outline()
        results.append(row)
    _emit(results if len(results) > 1 else results[0])
    return EXIT_OK if any(r["status"] == "ok" for r in results) else EXIT_EMPTY


def cmd_rules(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = []
    for sample in _one_sample(args):
        v_tree = parse(sample.vuln)
        res = find_met(v_tree, parse(sample.fixed)) if sample.fixed is not None else None
        if res is None or res.met is None:
            out.append({"sample_id": sample.id, "met_type": None, "findings": []})
            continue
        findings = run_rules(res.met.v_root, v_tree, cfg.rules)
        out.append({"sample_id": sample.id, "met_type": res.met.met_type,
                     "findings": [f.to_dict() for f in findings]})
    _emit(out if len(out) > 1 else out[0])
    return EXIT_OK if any(r["met_type"] for r in out) else EXIT_EMPTY


def cmd_prompt(args: argparse.Namespace, cfg: RunConfig) -> int:
    rows = []
    for sample in _one_sample(args):
        prep = prepare_sample(sample, cfg)
        if prep.reason is not None:
            log.warning("sample %s skipped: %s", sample.id, prep.reason)
            continue
        rows += [{"sample_id": b.sample_id, "ordinal": b.ordinal, "text": b.assembled} for b in prep.bundles]
    text = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, "utf-8")
    return EXIT_OK if rows else EXIT_EMPTY


def cmd_repair(args: argparse.Namespace, cfg: RunConfig) -> int:
    changes = {}
    if args.corpus is not None:
        changes["corpus"] = args.corpus
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.mock_script is not None:
        changes["mock_script"] = args.mock_script
        if not cfg.model.endpoint_url.startswith("mock:"):
            changes["model"] = dataclasses.replace(cfg.model, endpoint_url="mock://")
    cfg = dataclasses.replace(cfg, **changes)
    if cfg.corpus is None:
        raise ConfigError("no corpus given (use --corpus or the config file)")
    corpus = ingest(Path(cfg.corpus))
    if not len(corpus):
        raise EmptyInput("corpus has no usable samples")
    art = run_repair(cfg, corpus)
    _emit({"supported": art.supported, "unsupported": art.unsupported_count,
           "model_calls": art.network_calls, "candidates": str(art.candidates)})
    return EXIT_OK if art.supported else EXIT_EMPTY


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    k = args.k if args.k is not None else cfg.k
    threshold = args.threshold if args.threshold is not None else cfg.distance_threshold
    report = run_eval(args.candidates, args.truth, k, threshold, args.out, args.allow_empty)
    summary = report.to_dict()
    summary.pop("rows")
    _emit(summary)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace, cfg: RunConfig) -> int:
    path = args.corpus or cfg.corpus
    if path is None:
        raise ConfigError("no corpus given")
    corpus = ingest(Path(path))
    if args.top25:
        corpus = filter_top25(corpus)
    stats = met_type_stats(corpus, jobs=cfg.jobs)
    if stats.total == 0:
        raise EmptyInput("no sample with a parseable vulnerable side")
    _emit(dict(stats.to_dict(), dropped_identical=corpus.dropped_identical))
    if not args.json_only:
        sys.stdout.write(stats.render() + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spvr", description=__doc__)
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    p.add_argument("--jobs", type=int, help="worker processes for per-sample work")
    p.add_argument("--cache-dir", type=Path, help="completion cache directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("met", help="locate the minimum edit tree of a sample")
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--outline", action="store_true", help="include the merged tree outline")
    s.set_defaults(func=cmd_met)

    s = sub.add_parser("rules", help="run the inspection checks on a sample")
    s.add_argument("--input", type=Path, required=True)
    s.set_defaults(func=cmd_rules)

    s = sub.add_parser("prompt", help="assemble repair prompts")
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_prompt)

    s = sub.add_parser("repair", help="prompts, completions and candidate extraction")
    s.add_argument("--corpus", type=Path)
    s.add_argument("--out", type=Path, help="output directory")
    s.add_argument("--mock-script", type=Path, help="answer prompts from a pattern-to-replies JSON map")
    s.set_defaults(func=cmd_repair)

    s = sub.add_parser("eval", help="score candidates against ground truth")
    s.add_argument("--candidates", type=Path, required=True)
    s.add_argument("--truth", type=Path, required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--threshold", type=int, help="tree edit distance threshold")
    s.add_argument("--out", type=Path, help="directory for report.json and report.csv")
    s.add_argument("--allow-empty", action="store_true", help="report zero rows instead of failing")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="MET-type distribution of a corpus")
    s.add_argument("--corpus", type=Path)
    s.add_argument("--top25", action="store_true", help="keep only top-25 CWE samples")
    s.add_argument("--json-only", action="store_true")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except EmptyInput as exc:
        log.error("%s", exc)
        return EXIT_EMPTY
    except (ConfigError, MalformedRecord, MissingTruth, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except SpvrError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
