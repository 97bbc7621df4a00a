"""Command-line front end for the attack designer and launcher.

Exit codes: 0 on success, 1 when the request itself is invalid (bad spec,
unknown target, malformed scenario), 2 when something failed at runtime
(launcher unreachable or refusing, scenario step aborted).
"""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from gridtwin.device.objects import RosterError, load_roster
from gridtwin.scada.engine import DEFAULT_IP as DEFAULT_SCADA_IP
from gridtwin.sploit.attacks import AttackSpec, Sploit
from gridtwin.sploit.client import LauncherClient, SploitError, SploitRuntimeError
from gridtwin.sploit.scenario import (
    BUILTIN_SCENARIOS,
    execute_scenario,
    load_scenario_file,
)
from gridtwin.vnet.fabric import FabricError
from gridtwin.vnet.launcher import DEFAULT_PORT


def _load_yaml(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise SploitError(f"no such file: {path}") from exc
    except yaml.YAMLError as exc:
        raise SploitError(f"cannot parse {path}: {exc}") from exc


def _build_sploit(args) -> Sploit:
    host, _, port = args.launcher.rpartition(":")
    if not host or not port.isdigit():
        raise SploitError(f"--launcher must be HOST:PORT, got {args.launcher!r}")
    roster = load_roster(_load_yaml(args.roster)) if args.roster else None
    network_doc = _load_yaml(args.network) if args.network else None
    return Sploit(
        LauncherClient(host, int(port)),
        roster=roster,
        network_doc=network_doc,
        scada_ip=args.scada_ip,
        client_id=args.client_id,
    )


# ----------------------------------------------------------------------
# verbs
# ----------------------------------------------------------------------


def cmd_targets(args) -> int:
    sploit = _build_sploit(args)
    points = sploit.list_targets()
    if args.json:
        print(json.dumps(points, indent=2))
        return 0
    fmt = "{:<28} {:<12} {:<8} {:<13} {:<7} {}"
    print(fmt.format("PATH", "KIND", "DEVICE", "ZONE", "SWITCH", "CANDIDATES"))
    for p in points:
        print(fmt.format(p["path"], p["kind"], p["device"], p["zone"],
                         p["switch"], ",".join(p["candidate_switches"])))
    print(f"{len(points)} attackable point(s)")
    return 0


def cmd_launch(args) -> int:
    sploit = _build_sploit(args)
    spec = AttackSpec.from_dict(_load_yaml(args.spec))
    handle = sploit.launch(spec)
    print(f"launched {handle.attack_id}: {len(handle.rules)} rule(s)")
    for pr in handle.planned:
        print(f"  {pr.switch}  {pr.rule_id}  {pr.note}")
    return 0


def cmd_scenario_run(args) -> int:
    sploit = _build_sploit(args)
    builder = BUILTIN_SCENARIOS.get(args.scenario)
    if builder is not None:
        script = builder()
    else:
        script = load_scenario_file(args.scenario)
    run = execute_scenario(sploit, script)
    report = run.report()
    report_path = args.report or f"{script.name}.report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    for event in run.events:
        bits = [f"step {event.get('step')}", event.get("action", "")]
        if "attack_id" in event:
            bits.append(event["attack_id"])
        if "watch_id" in event:
            bits.append(f"armed watch {event['watch_id']} on {event['armed_on']}")
        if "error" in event:
            bits.append(event["error"])
        print("  ".join(str(b) for b in bits))
    print(f"report written to {report_path}")
    if not run.ok:
        print(f"scenario failed: {run.error}", file=sys.stderr)
        return 2
    print(f"scenario {script.name} ok: {len(run.events)} event(s)")
    return 0


def cmd_status(args) -> int:
    sploit = _build_sploit(args)
    state = sploit.status()
    if args.json:
        print(json.dumps(state, indent=2))
        return 0
    if not state["rules"] and not state["watches"]:
        print("no attack rules or watches installed")
        return 0
    for r in state["rules"]:
        print(f"rule   {r['switch']:<7} {r['rule_id']:<28} hits={r['hit_count']}")
    for w in state["watches"]:
        fired = "fired" if w["fired"] else "armed"
        print(f"watch  {w['switch']:<7} {w['watch_id']:<28} {fired}")
    return 0


def cmd_stop_all(args) -> int:
    sploit = _build_sploit(args)
    removed = sploit.stop_all()
    print(f"removed {removed} rule(s)/watch(es)")
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sploit",
        description="Design and launch man-in-the-middle attacks on the twin's fabric.")
    parser.add_argument("--launcher", default=f"127.0.0.1:{DEFAULT_PORT}",
                        metavar="HOST:PORT", help="launcher control endpoint")
    parser.add_argument("--roster", metavar="FILE",
                        help="device roster override (YAML)")
    parser.add_argument("--network", metavar="FILE",
                        help="network layout override (YAML)")
    parser.add_argument("--scada-ip", default=DEFAULT_SCADA_IP,
                        help="supervisory endpoint address for path tracing")
    parser.add_argument("--client-id", default="sploit",
                        help="ownership label on installed rules")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("targets", help="enumerate attackable points")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("launch", help="install one attack from a spec file")
    p.add_argument("spec", help="attack spec file (YAML/JSON)")
    p.set_defaults(func=cmd_launch)

    p_sc = sub.add_parser("scenario", help="scripted attack scenarios")
    sc_sub = p_sc.add_subparsers(dest="scenario_verb", required=True)
    p = sc_sub.add_parser("run", help="run a scenario file or builtin")
    p.add_argument("scenario",
                   help=f"scenario file, or one of {sorted(BUILTIN_SCENARIOS)}")
    p.add_argument("--report", metavar="FILE",
                   help="where to write the run report (JSON)")
    p.set_defaults(func=cmd_scenario_run)

    p = sub.add_parser("status", help="list installed attack rules and watches")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("stop-all", help="remove everything this tool installed")
    p.set_defaults(func=cmd_stop_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SploitError, RosterError, FabricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SploitRuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
