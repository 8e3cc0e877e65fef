"""Command-line entry points.

    ghsim run <scenario> [--until S] [--out DIR] [--headless]
    ghsim serve <scenario> [--listen HOST:PORT] [--users FILE] [--speed N]
    ghsim export --url URL -u USER -p PASS [--from T --to T] [-o FILE]
    ghsim verify [--fast]

``run`` executes a scenario headless and leaves the artifacts (event log,
CSV export, notification outbox, telemetry store) in the output directory.
``serve`` runs the simulation in real or accelerated time behind the HTTP
service. ``export`` is a thin client of a running service. ``verify`` runs
the acceptance suite and prints one line per criterion.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .scenario import ScenarioParseError, ScenarioValidationError, load_scenario


def _load(path: str):
    try:
        return load_scenario(path)
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2)


def cmd_run(args) -> int:
    from .runner import SimHost

    sc = _load(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    host = SimHost(
        sc,
        event_log_path=out / "events.log",
        store_path=out / "telemetry.sqlite" if args.store else None,
        outbox_path=out / "outbox.jsonl",
    )
    until = args.until if args.until is not None else sc.sim.duration

    def progress(now):
        print(f"  day {int(now // 86400)} done (sim t={int(now)} s)")

    host.run_headless(until, progress=None if args.headless else progress)
    csv = host.export_csv(0, host.world.clock.now)
    (out / "export.csv").write_text(csv, encoding="utf-8", newline="")
    host.close()
    if not args.headless:
        w = host.world
        print(f"finished at sim t={w.clock.now:.0f} s "
              f"({w.gateway.stored_count} readings stored, "
              f"{len(w.events.events)} events)")
        print(f"artifacts in {out}/: events.log, export.csv, outbox.jsonl"
              + (", telemetry.sqlite" if args.store else ""))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .auth import SessionManager, UserStore
    from .runner import SimHost
    from .service import create_app

    sc = _load(args.scenario)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    host = SimHost(
        sc,
        event_log_path=(out / "events.log") if out else None,
        store_path=(out / "telemetry.sqlite") if out and args.store else None,
        outbox_path=(out / "outbox.jsonl") if out else None,
    )
    host.speed = args.speed
    host.world.clock.speed = args.speed
    users = UserStore.load(args.users or Path(__file__).parent / "data" / "users.json")
    sessions = SessionManager(users)
    frontend = args.frontend or _default_frontend()
    app = create_app(host, sessions, frontend_dir=frontend)
    host.start()
    hostname, _, port = args.listen.partition(":")
    try:
        uvicorn.run(app, host=hostname or "127.0.0.1", port=int(port or 8000),
                    log_level="warning")
    finally:
        host.close()
    return 0


def _default_frontend():
    for candidate in (Path(__file__).resolve().parents[2] / "frontend" / "dist",
                      Path("frontend/dist")):
        if candidate.is_dir():
            return candidate
    return None


def cmd_export(args) -> int:
    import httpx

    base = args.url.rstrip("/")
    with httpx.Client(base_url=base, timeout=30.0) as client:
        resp = client.post("/api/login", json={"username": args.username,
                                               "password": args.password})
        if resp.status_code != 200:
            print(f"login failed: {resp.status_code} {resp.text}", file=sys.stderr)
            return 1
        token = resp.json()["token"]
        params = {}
        if args.time_from is not None:
            params["from"] = args.time_from
        if args.time_to is not None:
            params["to"] = args.time_to
        if args.node is not None:
            params["node"] = args.node
        if args.kind is not None:
            params["kind"] = args.kind
        resp = client.get("/api/export", params=params,
                          headers={"Authorization": f"Bearer {token}"})
        if resp.status_code != 200:
            print(f"export failed: {resp.status_code} {resp.text}", file=sys.stderr)
            return 1
    if args.output:
        Path(args.output).write_text(resp.text, encoding="utf-8", newline="")
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(resp.text)
    return 0


def cmd_verify(args) -> int:
    from . import acceptance

    results = acceptance.run_all(fast=args.fast)
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"[{mark}] {r.name}: {r.details}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghsim",
                                     description="greenhouse control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario headless and write artifacts")
    p_run.add_argument("scenario")
    p_run.add_argument("--until", type=float, default=None, help="stop at sim time (s)")
    p_run.add_argument("--out", default="out", help="artifact directory")
    p_run.add_argument("--store", action="store_true", help="persist the SQLite store")
    p_run.add_argument("--headless", action="store_true", help="no progress output")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve the HTTP API and web panel")
    p_serve.add_argument("scenario")
    p_serve.add_argument("--listen", default="127.0.0.1:8000")
    p_serve.add_argument("--users", default=None, help="user store JSON")
    p_serve.add_argument("--speed", type=float, default=1.0,
                         help="sim seconds per wall second (0 = free run)")
    p_serve.add_argument("--out", default=None, help="artifact directory")
    p_serve.add_argument("--store", action="store_true")
    p_serve.add_argument("--frontend", default=None, help="static UI directory")
    p_serve.set_defaults(func=cmd_serve)

    p_exp = sub.add_parser("export", help="download CSV from a running service")
    p_exp.add_argument("--url", default="http://127.0.0.1:8000")
    p_exp.add_argument("-u", "--username", default="operator")
    p_exp.add_argument("-p", "--password", required=True)
    p_exp.add_argument("--from", dest="time_from", default=None,
                       help="sim seconds or ISO-8601 UTC")
    p_exp.add_argument("--to", dest="time_to", default=None)
    p_exp.add_argument("--node", type=int, default=None)
    p_exp.add_argument("--kind", default=None)
    p_exp.add_argument("-o", "--output", default=None)
    p_exp.set_defaults(func=cmd_export)

    p_ver = sub.add_parser("verify", help="run the acceptance criteria")
    p_ver.add_argument("--fast", action="store_true",
                       help="shorten the long-horizon criteria (smoke check)")
    p_ver.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
