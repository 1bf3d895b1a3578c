"""Command line interface.

    advisor serve --port N --kb DIR --data DIR [--ui DIR]
    advisor validate DIR
    advisor stats DIR [--json]
    advisor consult --kb DIR --topic ID --answers FILE

The ADVISOR_KB_DIR environment variable supplies the default for --kb.
consult exit codes encode the decision: 0 approve, 2 deny, 3 no decision,
4 answer-file mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .admin import KbSnapshot, ReloadError, load_kb_dir, validate_all, _now
from .consultation import Decision, QueryPrompt, start_session, submit_answer
from .knowledge import kb_stats

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DENY = 2
EXIT_NO_DECISION = 3
EXIT_ANSWERS = 4
EXIT_USAGE = 64


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advisor", description="Legal advisory consultation service")
    sub = parser.add_subparsers(dest="command", required=True)

    default_kb = os.environ.get("ADVISOR_KB_DIR")

    p_serve = sub.add_parser("serve", help="run the HTTP consultation service")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--kb", default=default_kb, required=default_kb is None)
    p_serve.add_argument("--data", required=True)
    p_serve.add_argument("--ui", default=None, help="directory of built UI assets to serve at /")

    p_validate = sub.add_parser("validate", help="validate a knowledge base directory")
    p_validate.add_argument("kb_dir")

    p_stats = sub.add_parser("stats", help="print the regulation statistics table")
    p_stats.add_argument("kb_dir")
    p_stats.add_argument("--json", action="store_true", dest="as_json")

    p_consult = sub.add_parser("consult", help="run one consultation from an answers file")
    p_consult.add_argument("--kb", default=default_kb, required=default_kb is None)
    p_consult.add_argument("--topic", required=True)
    p_consult.add_argument("--answers", required=True)

    return parser


def _load_snapshot(kb_dir: str) -> KbSnapshot:
    kb, catalogue, frames = load_kb_dir(Path(kb_dir))
    return KbSnapshot(1, kb, catalogue, frames, _now())


def cmd_serve(args) -> int:
    from .service import create_app

    try:
        app = create_app(Path(args.kb), Path(args.data), ui_dir=args.ui)
    except ReloadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for diag in exc.report.diagnostics:
            print(f"  {diag}", file=sys.stderr)
        return EXIT_VALIDATION

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_validate(args) -> int:
    if not Path(args.kb_dir).is_dir():
        print(f"error: {args.kb_dir} is not a readable directory", file=sys.stderr)
        return EXIT_USAGE
    try:
        snapshot = _load_snapshot(args.kb_dir)
    except ReloadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # parse errors carry file:line positions
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = validate_all(snapshot)
    for diag in report.diagnostics:
        print(diag)
    if not report.ok:
        print(f"{len(report.errors)} error(s)", file=sys.stderr)
        return EXIT_VALIDATION
    print("OK")
    return EXIT_OK


def cmd_stats(args) -> int:
    if not Path(args.kb_dir).is_dir():
        print(f"error: {args.kb_dir} is not a readable directory", file=sys.stderr)
        return EXIT_USAGE
    try:
        snapshot = _load_snapshot(args.kb_dir)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    stats = kb_stats(snapshot.catalogue, snapshot.kb)
    if args.as_json:
        print(json.dumps(stats, ensure_ascii=False, indent=2))
        return EXIT_OK
    print(f"{'No':>2}  {'Regulation':<62}{'Rules':>6}")
    for i, reg in enumerate(stats["regulations"], start=1):
        print(f"{i:>2}  {reg['name']:<62}{reg['declared_rule_count']:>6}")
    print(f"{'':>2}  {'Total':<62}{stats['total_declared']:>6}")
    for topic_id, count in stats["topics"].items():
        print(f"topic {topic_id}: {count} implemented rules")
    return EXIT_OK


def cmd_consult(args) -> int:
    try:
        snapshot = _load_snapshot(args.kb)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = validate_all(snapshot)
    if not report.ok:
        for diag in report.errors:
            print(f"error: {diag}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        answers = [
            line.strip()
            for line in Path(args.answers).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        session, step = start_session(snapshot.catalogue, snapshot.kb, args.topic)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    consumed = 0
    while isinstance(step, QueryPrompt):
        if consumed >= len(answers):
            print("error: consultation incomplete, answers file exhausted", file=sys.stderr)
            return EXIT_ANSWERS
        answer = answers[consumed]
        consumed += 1
        try:
            step = submit_answer(session, snapshot.catalogue, step.query_id, answer)
        except Exception as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ANSWERS
    if consumed < len(answers):
        print(
            f"error: {len(answers) - consumed} trailing answer(s) rejected, consultation "
            f"ended after {consumed}",
            file=sys.stderr,
        )
        return EXIT_ANSWERS

    assert isinstance(step, Decision)
    print(json.dumps(step.to_dict(), ensure_ascii=False))
    if step.ok_code == 1:
        return EXIT_OK
    if step.ok_code == 2:
        return EXIT_DENY
    return EXIT_NO_DECISION


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "stats":
        return cmd_stats(args)
    if args.command == "consult":
        return cmd_consult(args)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
