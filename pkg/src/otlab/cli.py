"""Command line entry point ``otlab``.

Exit codes: 0 when every exact invariant passed, 1 when one failed,
2 for usage, configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from otlab import lab
from otlab.space import SpaceError, build_space


def _cmd_run(args) -> int:
    cfg = lab.ExperimentConfig.from_json(args.config)
    out = Path(args.output or cfg.output_dir)
    report = lab.run(cfg)
    files = []
    for fmt in args.format:
        files += lab.emit_report(report, out, fmt)
    for c in report["checks"]:
        if not c["passed"]:
            print(f"FAIL {c['kind']} {c['name']}: value={c['value']} threshold={c['threshold']}",
                  file=sys.stderr)
    for f in files:
        print(f)
    return 0 if report["passed"] else 1


def _cmd_build_space(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = json.load(fh)
    space = build_space(spec)
    text = json.dumps(space.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
        print(args.output)
    return 0


def _cmd_audit_example(args) -> int:
    cfg = lab.ExperimentConfig(experiment="arc_space_audit", seed=0,
                               params={"depth": args.depth, "resolution": args.resolution})
    report = lab.run(cfg)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: value={c['value']!r} "
              f"expected={c['threshold']!r}")
    if args.output:
        for f in lab.emit_report(report, args.output, "json"):
            print(f)
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otlab", description="Optimal transport lab on finite geodesic spaces.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="experiment config (JSON)")
    r.add_argument("-o", "--output", help="output directory (default: config output_dir)")
    r.add_argument("--format", action="append", choices=("json", "csv"),
                   help="report format; repeat for both (default: json and csv)")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("build-space", help="resolve a space spec to an explicit space")
    b.add_argument("spec", help="space spec (JSON)")
    b.add_argument("-o", "--output", default="-", help="output file ('-' for stdout)")
    b.set_defaults(func=_cmd_build_space)

    a = sub.add_parser("audit-example", help="audit the dyadic arc space")
    a.add_argument("--depth", type=int, default=4)
    a.add_argument("--resolution", type=int, default=4)
    a.add_argument("-o", "--output", help="also write report.json here")
    a.set_defaults(func=_cmd_audit_example)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "format", None) is None and args.command == "run":
        args.format = ["json", "csv"]
    try:
        lab.workers()
        return args.func(args)
    except (lab.ConfigError, SpaceError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"otlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
