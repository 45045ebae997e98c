"""Command line entry point.

Exit codes: 0 success, 1 validation findings, 2 usage/config/extraction
error, 3 at least one analysis failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .analyses import REGISTRY
from .engine import load_config, run_study
from .errors import RepomineError, SchemaError
from .extractors import ExtractorKind, ExtractorSpec, extract_git
from .model import summary_counts, validate
from .persistence import load_model, save_model

EXIT_OK, EXIT_FINDINGS, EXIT_ERROR, EXIT_FAILED = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _summary(model) -> str:
    return " ".join(f"{k}={v}" for k, v in summary_counts(model).items())


def cmd_extract(args) -> int:
    name = args.name or os.path.basename(os.path.abspath(args.repo))
    try:
        model = extract_git(ExtractorSpec(ExtractorKind.GIT, args.repo, name))
        save_model(model, args.out)
    except (RepomineError, OSError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    print(_summary(model))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        if args.workers:
            config.workers = args.workers
        report = run_study(config, REGISTRY)
    except (RepomineError, OSError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    print(report.table())
    failed = [r for r in report.records if r.status != "OK"]
    for r in failed:
        _err(f"{r.source}/{r.analysis}: {r.message}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_validate(args) -> int:
    try:
        model = load_model(args.model, check=False)
    except (SchemaError, OSError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    report = validate(model)
    for v in report.violations:
        print(f"{v.rule}\t{v.offending_id}\t{v.message}")
    if not report.ok:
        _err(f"{len(report.violations)} violation(s)")
        return EXIT_FINDINGS
    print(f"ok {_summary(model)}")
    return EXIT_OK


def cmd_list_analyses(args) -> int:
    for kind in sorted(REGISTRY):
        print(kind)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repomine", description="Mine version control histories.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract a git repository into a model file")
    p.add_argument("--repo", required=True, help="path to a local git repository")
    p.add_argument("--name", help="source name (default: repository directory name)")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("run", help="run a study from a JSON config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, help="override the config's worker count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list-analyses", help="print the registered analysis kinds")
    p.set_defaults(func=cmd_list_analyses)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
