"""``twin`` command line: boot the stack, check it, run experiments.

Exit codes: 0 success, 1 bad configuration or script, 2 runtime failure
(twin not running, component died, experiment bundle failed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import signal
import sys
import threading
import urllib.error
import urllib.request

from gridtwin.harness.config import TwinConfig, TwinConfigError, load_twin_config
from gridtwin.harness.experiment import (
    BUILTIN_EXPERIMENTS,
    ExperimentError,
    load_builtin_experiment,
    load_experiment_file,
    run_experiment,
)
from gridtwin.harness.twin import Twin, TwinError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="twin",
        description="Boot and drive the four-zone microgrid twin.")
    p.add_argument("--config", metavar="FILE",
                   help="twin config file (default: $TWIN_CONFIG or packaged)")
    sub = p.add_subparsers(dest="verb", required=True)

    sub.add_parser("up", help="start every component and stay up until killed")
    sub.add_parser("down", help="ask a running twin to shut down")
    status = sub.add_parser("status", help="show component health")
    status.add_argument("--json", action="store_true", dest="as_json")

    exp = sub.add_parser("experiment", help="run a scripted experiment")
    expsub = exp.add_subparsers(dest="expverb", required=True)
    run = expsub.add_parser("run", help="boot a twin, run the script, bundle results")
    run.add_argument("script",
                     help=f"script file, or one of: {', '.join(BUILTIN_EXPERIMENTS)}")
    run.add_argument("--out", metavar="DIR",
                     help="bundle directory (default: runs/<name>)")
    run.add_argument("--fast", action="store_true",
                     help="drive the clock as fast as possible")
    return p


def _health_url(cfg: TwinConfig) -> str:
    return f"http://{cfg.host}:{cfg.health_port}"


def _fetch_health(cfg: TwinConfig) -> dict | None:
    try:
        with urllib.request.urlopen(_health_url(cfg) + "/health", timeout=5) as resp:
            return json.load(resp)
    except (urllib.error.URLError, OSError):
        return None


def _cmd_up(cfg: TwinConfig) -> int:
    if cfg.mode == "fast":
        print("error: fast mode only makes sense for 'experiment run' — "
              "the clock does not advance on its own", file=sys.stderr)
        return 1
    twin = Twin(cfg)
    twin.up()
    h = twin.health()
    print(f"twin up ({h['devices']} devices)")
    for name, port in sorted(twin.ports.items()):
        print(f"  {name}: {cfg.host}:{port}")
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        while not stop.is_set() and twin.state == "up":
            stop.wait(0.5)
    except KeyboardInterrupt:
        pass
    twin.down()
    print("twin down")
    return 0


def _cmd_down(cfg: TwinConfig) -> int:
    req = urllib.request.Request(_health_url(cfg) + "/shutdown", data=b"",
                                 method="POST")
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            json.load(resp)
    except (urllib.error.URLError, OSError):
        print(f"twin is not running on {_health_url(cfg)}", file=sys.stderr)
        return 2
    print("twin stopping")
    return 0


def _cmd_status(cfg: TwinConfig, as_json: bool) -> int:
    health = _fetch_health(cfg)
    if health is None:
        if as_json:
            print(json.dumps({"ok": False, "state": "down"}))
        else:
            print(f"twin is down (nothing on {_health_url(cfg)})")
        return 2
    if as_json:
        print(json.dumps(health, indent=2))
        return 0
    parts = " ".join(f"{k}={v}" for k, v in health["components"].items())
    print(f"twin {health['state']} (mode={health['mode']}, "
          f"t={health['now_ms']:.0f}ms, devices={health['devices']})")
    print(f"  components: {parts}")
    print("  ports: " + " ".join(f"{k}={v}"
                                 for k, v in sorted(health["ports"].items())))
    return 0


def _cmd_experiment_run(cfg: TwinConfig, args) -> int:
    if os.path.exists(args.script):
        script = load_experiment_file(args.script)
    else:
        script = load_builtin_experiment(args.script)
    if args.fast:
        cfg = dataclasses.replace(cfg, mode="fast")
    outdir = args.out or os.path.join("runs", script.name)

    twin = Twin(cfg)
    twin.up()
    try:
        report = run_experiment(twin, script, outdir)
    finally:
        twin.down()

    for step in report["steps"]:
        mark = "ok" if step["ok"] else f"FAILED: {step['error']}"
        extras = {k: v for k, v in step.items()
                  if k not in ("step", "kind", "ok", "error")}
        detail = " ".join(f"{k}={v}" for k, v in extras.items())
        print(f"step {step['step']} {step['kind']} {mark}"
              + (f" ({detail})" if detail else ""))
    verdict = "ok" if report["ok"] else f"failed at step {report['failed_at']}"
    print(f"bundle: {outdir} ({verdict})")
    return 0 if report["ok"] else 2


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_twin_config(args.config)
        if args.verb == "up":
            return _cmd_up(cfg)
        if args.verb == "down":
            return _cmd_down(cfg)
        if args.verb == "status":
            return _cmd_status(cfg, args.as_json)
        if args.verb == "experiment":
            return _cmd_experiment_run(cfg, args)
        raise AssertionError(args.verb)
    except (TwinConfigError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TwinError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
