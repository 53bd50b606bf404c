"""Command-line surface: index, run, eval, sweep, validate.

Exit codes: 0 success, 1 task failures (failed questions or validation
errors), 2 usage/configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .model import Phase, validate_submission
from .retrieval import Index, ingest_corpus, read_corpus_jsonl
from .runner import ConfigError, evaluate_submissions, load_config, run_batch, run_sweep

USAGE_ERROR = 2


def cmd_index(args) -> int:
    corpus_path = Path(args.corpus)
    if not corpus_path.exists():
        print(f"corpus file not found: {corpus_path}", file=sys.stderr)
        return USAGE_ERROR
    with open(corpus_path, "r", encoding="utf-8") as fh:
        index = ingest_corpus(read_corpus_jsonl(fh), stem=not args.no_stem)
    index.save(args.out)
    print(f"indexed {index.doc_count} documents, {index.term_count} terms "
          f"({index.fingerprint}) -> {args.out}")
    if index.doc_count == 0:
        print("warning: the corpus produced an empty index", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    config = load_config(args.config)
    phase = Phase.parse(args.phase) if args.phase else None
    return run_batch(config, args.questions, args.out, mode=args.mode,
                     phase=phase, concurrency=args.concurrency)


def cmd_eval(args) -> int:
    corpus_lookup = None
    if args.index:
        index = Index.load(args.index)
        corpus_lookup = index.get_document
    phase = Phase.parse(args.phase) if args.phase else Phase.B
    status, report = evaluate_submissions(
        args.gold, args.submissions, args.out, phase=phase, corpus_lookup=corpus_lookup)
    print(report.render_text(), end="")
    return status


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    return run_sweep(config, args.questions, args.out,
                     mode=args.mode, concurrency=args.concurrency)


def cmd_validate(args) -> int:
    corpus_lookup = None
    if args.index:
        index = Index.load(args.index)
        corpus_lookup = index.get_document
    phase = Phase.parse(args.phase) if args.phase else Phase.B
    raw = Path(args.submission).read_bytes()
    violations = validate_submission(raw, phase, corpus_lookup)
    for violation in violations:
        print(violation)
    errors = [v for v in violations if v.severity == "error"]
    if not violations:
        print("submission is valid")
    return 1 if errors else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bioqa",
        description="Retrieval-augmented biomedical QA pipeline and evaluation harness",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build the embedded index from a JSONL corpus")
    p_index.add_argument("--corpus", required=True, help="line-delimited JSON corpus file")
    p_index.add_argument("--out", required=True, help="index output path")
    p_index.add_argument("--no-stem", action="store_true",
                         help="analyzer variant without stemming")
    p_index.set_defaults(fn=cmd_index)

    p_run = sub.add_parser("run", help="run every configured system over a question batch")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--questions", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--mode", choices=("record", "replay"), default=None)
    p_run.add_argument("--phase", choices=("a", "aplus", "b"), default=None)
    p_run.add_argument("--concurrency", type=int, default=None)
    p_run.set_defaults(fn=cmd_run)

    p_eval = sub.add_parser("eval", help="score submissions against a gold file")
    p_eval.add_argument("--gold", required=True)
    p_eval.add_argument("--out", required=True, help="report output path")
    p_eval.add_argument("--phase", choices=("a", "aplus", "b"), default=None)
    p_eval.add_argument("--index", default=None, help="check snippet offsets against this index")
    p_eval.add_argument("submissions", nargs="+")
    p_eval.set_defaults(fn=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="compare sweep models over one question batch")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--questions", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--mode", choices=("record", "replay"), default=None)
    p_sweep.add_argument("--concurrency", type=int, default=None)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_validate = sub.add_parser("validate", help="check a submission file's invariants")
    p_validate.add_argument("--submission", required=True)
    p_validate.add_argument("--phase", choices=("a", "aplus", "b"), default=None)
    p_validate.add_argument("--index", default=None)
    p_validate.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
