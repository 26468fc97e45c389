"""Command-line entry point.

Exit codes: 0 when every checked property holds, 1 on a protocol-property
violation, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from . import audit
from .metrics import format_table, snapshot
from .protocol import DEFAULT_DELTA_T
from .registry import Registry, RegistryError
from .sim import (
    LINK_CG,
    LINK_CS,
    LINK_GS,
    ConfigError,
    LinkConfig,
    Run,
    Topology,
    adversary_block_scenario,
    adversary_replay_scenario,
    adversary_tamper_scenario,
    handshake_recovered,
    load_script,
    provision_registry,
    run_scenario,
)
from .wire import FRAME_BITS

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2
REGISTRY_ENV = "LIGHTIOT_REGISTRY"


class UsageError(Exception):
    pass


def _delay(text: str):
    try:
        if "-" in text.strip("-"):
            lo, hi = text.split("-", 1)
            return int(lo), int(hi)
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad delay {text!r}; use N or LOW-HIGH") from None


def read_config(path: str) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{n}: expected key=value")
                k, v = line.split("=", 1)
                out[k.strip().replace("-", "_")] = v.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="RNG seed (mandatory)")
    p.add_argument("--delta-t", type=int, default=DEFAULT_DELTA_T, help="freshness window in ms")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--config", help="key=value file supplying defaults for any flag")


def _add_links(p: argparse.ArgumentParser) -> None:
    for short, name in (("cg", "client-gateway"), ("gs", "gateway-server"), ("cs", "client-server")):
        p.add_argument(f"--delay-{short}", type=_delay, default=0, help=f"{name} delay, ms or LOW-HIGH")
        p.add_argument(f"--loss-{short}", type=float, default=0.0, help=f"{name} loss probability")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lightiot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("provision", help="create a registry of fresh credentials")
    _add_common(p)
    p.add_argument("--clients", type=int, default=1)
    p.add_argument("--gateways", type=int, default=1)
    p.add_argument("--registry", help=f"output path (default ${REGISTRY_ENV})")

    for name, help_ in (("pair", "pair every registered client"),
                        ("auth", "run authentications for already paired clients")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        _add_links(p)
        p.add_argument("--registry", help=f"registry path (default ${REGISTRY_ENV})")
        p.add_argument("--save", action="store_true", help="write the updated registry back")
        if name == "auth":
            p.add_argument("--sessions", type=int, default=1)

    p = sub.add_parser("simulate", help="pair and authenticate over a simulated network")
    _add_common(p)
    _add_links(p)
    p.add_argument("--clients", type=int, default=1)
    p.add_argument("--gateways", type=int, default=1)
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--adversary", help="JSON adversary script")
    p.add_argument("--registry", help="start from this registry instead of fresh credentials")
    p.add_argument("--transcript", help="write the transcript as JSON lines")
    p.add_argument("--batch", type=int, default=1, help="run seeds seed..seed+N-1 in parallel")

    p = sub.add_parser("attack", help="run one adversary scenario")
    _add_common(p)
    _add_links(p)
    p.add_argument("--scenario", choices=("replay", "tamper", "block", "trace"), required=True)
    p.add_argument("--message", choices=tuple(FRAME_BITS))
    p.add_argument("--staleness", type=int, default=None, help="replay delay in ms")
    p.add_argument("--bit", type=int, default=None, help="bit to flip (default: sweep all)")
    p.add_argument("--sessions", type=int, default=100, help="sessions for the trace scenario")

    p = sub.add_parser("report", help="run the full scenario suite and print the audit report")
    _add_common(p)
    p.add_argument("--trace-sessions", type=int, default=100)
    return parser


def _parse(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
        # set_defaults values skip type conversion; re-run them through the actions
        for action in sub._actions:
            value = getattr(args, action.dest, None)
            if isinstance(value, str) and action.type is not None and action.dest in cfg \
                    and value == cfg[action.dest]:
                setattr(args, action.dest, action.type(value))
            if action.dest in cfg and action.const is True and isinstance(value, str):
                setattr(args, action.dest, value.lower() in ("1", "true", "yes"))
    if args.seed is None and args.command != "provision":
        raise UsageError("--seed is required; runs are never seeded from ambient randomness")
    if args.command == "provision" and args.seed is None:
        raise UsageError("--seed is required to provision credentials")
    return args


def _links(args) -> dict[str, LinkConfig]:
    return {
        LINK_CG: LinkConfig(args.delay_cg, args.loss_cg),
        LINK_GS: LinkConfig(args.delay_gs, args.loss_gs),
        LINK_CS: LinkConfig(args.delay_cs, args.loss_cs),
    }


def _registry_path(args) -> Optional[str]:
    return args.registry or os.environ.get(REGISTRY_ENV)


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _run_summary(run: Run) -> dict:
    rep = snapshot(run)
    mismatched = [
        s for s in run.sessions
        if s.phase == "authentication" and s.ok and s.client_key != s.gateway_key
    ]
    return {
        "seed": run.seed,
        "verdict": run.verdict,
        "sessions": [s.to_dict() for s in run.sessions],
        "mismatched_keys": len(mismatched),
        "overhead": rep.to_dict(),
    }


def _render(args, summary: dict, table: Optional[str] = None) -> str:
    if args.format == "json":
        return json.dumps(summary, indent=2, sort_keys=True)
    lines = []
    for k in ("seed", "scenario", "message", "verdict", "mismatched_keys"):
        if k in summary:
            lines.append(f"{k}: {summary[k]}")
    if table:
        lines += ["", table]
    return "\n".join(lines)


def cmd_provision(args) -> int:
    path = _registry_path(args)
    if not path:
        raise UsageError(f"--registry or ${REGISTRY_ENV} is required")
    if args.clients < 1 or args.gateways < 1:
        raise UsageError("need at least one client and one gateway")
    reg = provision_registry(args.clients, args.gateways, args.seed)
    reg.save(path)
    _emit(args, f"provisioned {args.clients} client(s) and {args.gateways} gateway(s) -> {path}")
    return EXIT_OK


def _load_registry(args) -> tuple[Registry, str]:
    path = _registry_path(args)
    if not path:
        raise UsageError(f"--registry or ${REGISTRY_ENV} is required")
    try:
        return Registry.load(path), path
    except (OSError, RegistryError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load registry {path}: {exc}") from exc


def _cmd_registry_run(args, sessions: int, paired: bool) -> int:
    reg, path = _load_registry(args)
    from .registry import CLIENT, GATEWAY

    topo = Topology(
        clients=len(reg.tuples(CLIENT)),
        gateways=len(reg.tuples(GATEWAY)),
        delta_t=args.delta_t,
    )
    run = run_scenario(topo, _links(args), seed=args.seed, n_sessions=sessions,
                       registry=reg, paired=paired)
    if args.save:
        reg.save(path)
    summary = _run_summary(run)
    _emit(args, _render(args, summary, format_table(snapshot(run))))
    ok = run.verdict == "ok" and summary["mismatched_keys"] == 0
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_pair(args) -> int:
    return _cmd_registry_run(args, 0, paired=False)


def cmd_auth(args) -> int:
    if args.sessions < 1:
        raise UsageError("--sessions must be at least 1")
    return _cmd_registry_run(args, args.sessions, paired=True)


def cmd_simulate(args) -> int:
    if args.clients < 1 or args.gateways < 1 or args.sessions < 0 or args.batch < 1:
        raise UsageError("clients and gateways must be >= 1, sessions >= 0, batch >= 1")
    links = _links(args)
    script = load_script(args.adversary) if args.adversary else []
    registry = _load_registry(args)[0] if args.registry else None
    topo = Topology(clients=args.clients, gateways=args.gateways, delta_t=args.delta_t)

    def one(seed: int) -> Run:
        reg = Registry.loads(registry.dumps()) if registry is not None else None
        return run_scenario(topo, links, script, seed, args.sessions, registry=reg)

    seeds = [args.seed + i for i in range(args.batch)]
    if args.batch > 1:
        with ThreadPoolExecutor() as pool:
            runs = list(pool.map(one, seeds))
    else:
        runs = [one(args.seed)]

    if args.transcript:
        with open(args.transcript, "w", encoding="utf-8") as fh:
            for run in runs:
                for line in run.transcript_lines():
                    fh.write(line + "\n")

    summaries = [_run_summary(r) for r in runs]
    honest = not script and all(lc.loss_prob == 0 for lc in links.values())
    ok = all(s["mismatched_keys"] == 0 for s in summaries)
    if honest:
        ok = ok and all(r.verdict == "ok" for r in runs)
    payload = summaries[0] if len(summaries) == 1 else {"runs": summaries}
    table = format_table(snapshot(runs[0])) if len(runs) == 1 else None
    if args.format == "text" and len(runs) > 1:
        text = "\n".join(f"seed {s['seed']}: {s['verdict']}, mismatched keys {s['mismatched_keys']}"
                         for s in summaries)
    else:
        text = _render(args, payload, table)
    _emit(args, text)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_attack(args) -> int:
    links = _links(args)
    dt = args.delta_t
    if args.scenario in ("replay", "tamper", "block") and not args.message:
        raise UsageError(f"--message is required for the {args.scenario} scenario")
    summary: dict = {"seed": args.seed, "scenario": args.scenario, "message": args.message}

    if args.scenario == "replay":
        staleness = args.staleness if args.staleness is not None else 2 * dt
        run = adversary_replay_scenario(args.message, staleness, args.seed, dt, links)
        verdicts = [e["verdict"] for e in run.injected_events()]
        verdict = verdicts[0] if verdicts else "not-delivered"
        summary.update(staleness=staleness, verdict=verdict)
        must_reject = staleness >= dt
        ok = verdict != "accepted" if must_reject else True
        if not must_reject and verdict == "accepted":
            summary["note"] = "replay inside the freshness window was accepted"

    elif args.scenario == "tamper":
        bits = [args.bit] if args.bit is not None else range(FRAME_BITS[args.message])
        rows = []
        for b in bits:
            if not 0 <= b < FRAME_BITS[args.message]:
                raise UsageError(f"--bit must lie in [0, {FRAME_BITS[args.message]})")
            run = adversary_tamper_scenario(args.message, b, args.seed, dt, links)
            auth = run.sessions_of("authentication")
            done = bool(auth) and auth[0].ok
            rows.append({
                "bit": b,
                "recipient_verdict": next(
                    e["verdict"] for e in run.events if e["kind"] == args.message and not e["injected"]
                ),
                "handshake_completed": done,
                "keys_match": (auth[0].client_key == auth[0].gateway_key) if done else None,
            })
        completed = sum(r["handshake_completed"] for r in rows)
        summary.update(trials=len(rows), completed_handshakes=completed, flips=rows,
                       verdict="rejected" if completed == 0 else "completed")
        ok = completed == 0

    elif args.scenario == "block":
        run = adversary_block_scenario(args.message, args.seed, dt, links)
        ok = handshake_recovered(run, args.message)
        summary.update(verdict="recovered" if ok else "not-recovered",
                       attempts=[s.to_dict() for s in run.sessions])

    else:
        run = run_scenario(Topology(delta_t=dt), links, seed=args.seed, n_sessions=args.sessions)
        problems = audit.untraceability_violations(run)
        ok = not problems and run.verdict == "ok"
        summary.update(sessions=args.sessions, violations=problems,
                       verdict="untraceable" if ok else "traceable")

    _emit(args, _render(args, summary))
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_report(args) -> int:
    report = audit.run_suite(args.seed, args.delta_t, args.trace_sessions)
    if args.format == "json":
        text = audit.dumps(report).rstrip("\n")
    else:
        from .metrics import OverheadReport

        ov = OverheadReport(**report["honest"]["overhead"])
        lines = [f"seed: {args.seed}", f"passed: {report['passed']}", "", format_table(ov), "",
                 "Replay (stale / within window)"]
        for k, r in report["replay"].items():
            lines.append(f"  {k}: {r['stale_verdict']} / {r['within_window_verdict']}")
        lines.append("Tamper sweep (trials, completed handshakes)")
        for k, t in report["tamper"].items():
            lines.append(f"  {k}: {t['trials']}, {t['completed_handshakes']}")
        lines.append("Block recovery")
        for k, b in report["block"].items():
            lines.append(f"  {k}: {'recovered' if b['recovered'] else 'NOT recovered'}")
        lines.append(f"Trace: {len(report['trace']['violations'])} violation(s) over "
                     f"{report['trace']['sessions']} sessions")
        lines.append("Known exposures")
        lines += [f"  - {e}" for e in report["known_exposures"]]
        text = "\n".join(lines)
    _emit(args, text)
    return EXIT_OK if report["passed"] else EXIT_VIOLATION


COMMANDS = {
    "provision": cmd_provision,
    "pair": cmd_pair,
    "auth": cmd_auth,
    "simulate": cmd_simulate,
    "attack": cmd_attack,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except (UsageError, ConfigError) as exc:
        print(f"lightiot: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
