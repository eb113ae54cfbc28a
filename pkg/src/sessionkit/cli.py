"""Command-line front end.

    sessionkit check <protocols.sj> [NAME NAME]   parse + duality report
    sessionkit demo [--secure] [--transport sim|tcp] [--items N] [--branch ...]
    sessionkit attack (original|secure) [--leak-cred]
    sessionkit modelcheck (original|secure) [--attacker] [--k N] [PROPERTY...]

Exit codes: 0 success / all checks hold, 1 check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import data_path
from .attacks import run_attack
from .demo import DemoConfig, run_purchase
from .errors import BoundExceeded, ProtocolSyntaxError
from .modelcheck import PROPERTIES, build_model, check, explore
from .protocols import dual, is_dual, parse_protocol_file, render_protocol
from .transcript import format_transcript, transcript_json


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sessionkit",
        description="session-typed channels, secure delegation, and a protocol checker",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse a protocol file, optionally check a dual pair")
    p.add_argument("file", help="protocol source file")
    p.add_argument("names", nargs="*", help="two declaration names to check for duality")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("demo", help="run the three-party purchase scenario")
    p.add_argument("--transport", choices=("sim", "tcp"), default="sim")
    p.add_argument("--secure", action="store_true",
                   help="SRP on every connection + credentialed delegation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--items", type=int, default=2, help="iterations before the branch")
    p.add_argument("--branch", choices=("CHECKOUT", "EXIT"), default="CHECKOUT")
    p.add_argument("--registry", help="SRP registry file (defaults to the bundled one)")
    p.add_argument("--timeout-ms", type=int, default=5000)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("attack", help="scripted delegation-signal interception attack")
    p.add_argument("mode", choices=("original", "secure"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--leak-cred", action="store_true",
                   help="hand the session credential to the attacker out of band")
    p.add_argument("--timeout-ms", type=int, default=5000)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("modelcheck", help="explore the delegation protocol model")
    p.add_argument("mode", choices=("original", "secure"))
    p.add_argument("properties", nargs="*",
                   help=f"properties to check (default all): {', '.join(PROPERTIES)}")
    p.add_argument("--attacker", action="store_true")
    p.add_argument("--all", action="store_true", dest="all_props")
    p.add_argument("--k", type=int, default=1, help="unacked messages (0..2)")
    p.add_argument("--bound", type=int, default=10**6)
    p.add_argument("--json", action="store_true")
    return parser


def cmd_check(args) -> int:
    try:
        text = open(args.file, encoding="utf-8").read()
        decls = parse_protocol_file(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProtocolSyntaxError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        return 1
    report = {"command": "check", "file": args.file,
              "protocols": list(decls), "ok": True}
    if args.names:
        if len(args.names) != 2:
            print("error: duality check needs exactly two names", file=sys.stderr)
            return 2
        a, b = args.names
        missing = [n for n in (a, b) if n not in decls]
        if missing:
            print(f"error: no such protocol: {', '.join(missing)}", file=sys.stderr)
            return 1
        report["pair"] = [a, b]
        report["dual"] = is_dual(decls[a], decls[b])
        report["ok"] = report["dual"]
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for name in decls:
            print(f"parsed {name}")
        if "dual" in report:
            print(f"{a} and {b}: {'dual' if report['dual'] else 'NOT dual'}")
    return 0 if report["ok"] else 1


def cmd_demo(args) -> int:
    config = DemoConfig(transport=args.transport, secure=args.secure,
                        seed=args.seed, timeout=args.timeout_ms / 1000.0,
                        registry_path=args.registry)
    result = run_purchase(config, iterations=args.items,
                          checkout=args.branch == "CHECKOUT")
    if args.json:
        doc = json.loads(transcript_json(result.events))
        doc.update({"command": "demo", "outcomes": result.outcomes, "ok": result.ok})
        print(json.dumps(doc, indent=2))
    else:
        print(format_transcript(result.events))
        for role, outcome in sorted(result.outcomes.items()):
            print(f"{role}: {outcome}")
    return 0 if result.ok else 1


def cmd_attack(args) -> int:
    result = run_attack(args.mode, seed=args.seed, leak_cred=args.leak_cred,
                        timeout=args.timeout_ms / 1000.0)
    if args.json:
        doc = json.loads(transcript_json(result.events))
        doc.update({
            "command": "attack", "mode": args.mode,
            "verdict": result.verdict, "reason": result.reason,
            "stolen": [{"type": v.type_name, "data": v.data.decode("utf-8", "replace")}
                       for v in result.stolen],
            "outcomes": result.outcomes,
        })
        print(json.dumps(doc, indent=2))
    else:
        print(format_transcript(result.events))
        print(f"verdict: {result.verdict} ({result.reason})")
        for v in result.stolen:
            print(f"stolen: {v.type_name} = {v.data.decode('utf-8', 'replace')}")
    return 0  # the verdict is the output, not the exit status


def cmd_modelcheck(args) -> int:
    props = tuple(args.properties) if args.properties and not args.all_props \
        else PROPERTIES
    unknown = [p for p in props if p not in PROPERTIES]
    if unknown:
        print(f"error: unknown properties: {', '.join(unknown)}", file=sys.stderr)
        return 2
    model = build_model(args.mode, args.attacker, args.k, bound=args.bound)
    try:
        exploration = explore(model)
    except BoundExceeded as exc:
        print(f"bound exceeded: {exc}", file=sys.stderr)
        return 1
    verdicts = [check(model, p, exploration) for p in props]
    doc = {
        "command": "modelcheck", "mode": args.mode, "attacker": args.attacker,
        "k": args.k, "states": exploration.states,
        "verdicts": [
            {"property": v.property, "holds": v.holds, "detail": v.detail,
             "witness": [list(step) for step in v.witness] if v.witness else None}
            for v in verdicts
        ],
        "ok": all(v.holds for v in verdicts),
    }
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(f"mode={args.mode} attacker={args.attacker} k={args.k} "
              f"states={exploration.states}")
        for v in verdicts:
            print(f"  {v.property:18s} {'holds' if v.holds else 'FAILS'}"
                  + (f"  ({v.detail})" if not v.holds else ""))
            if v.witness:
                for role, action, chan, payload in v.witness:
                    print(f"      {role} {action:10s} {chan:5s} {payload}")
    return 0 if doc["ok"] else 1


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # property names may appear anywhere after the mode; argparse cannot
    # intermix a trailing nargs="*" positional with flags, so lift them out
    props = []
    if argv and argv[0] == "modelcheck":
        props = [t for t in argv if t in PROPERTIES]
        argv = [t for t in argv if t not in PROPERTIES]
    parser = _parser()
    args = parser.parse_args(argv)
    if args.command == "modelcheck":
        if args.properties:  # anything left over is not a known property
            parser.error(f"unknown properties: {', '.join(args.properties)}")
        args.properties = props
    handlers = {"check": cmd_check, "demo": cmd_demo,
                "attack": cmd_attack, "modelcheck": cmd_modelcheck}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
