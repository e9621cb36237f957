"""Single command-line entry point wiring all components.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Machine-readable
results go to stdout; logs go to stderr. ``THROTTLEKIT_SEED`` supplies the
seed when no ``--seed`` flag is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .emulator.metrics import read_archive
from .emulator.report import (
    MergeError,
    deltas_vs_baseline,
    load_series,
    oracle_bound_check,
    render_table,
    series_csv,
)
from .emulator.runner import ExperimentConfig, run_experiment
from .gateway import GatewayConfig
from .gateway import serve as serve_gateway
from .oracle import load_instance, solve_to_json
from .telemetry import Aggregator, TelemetryServer
from .workload import (
    SynthConfig,
    build_real_dataset,
    gen_synthetic,
    parse_access_log,
    save_dataset,
)

log = logging.getLogger("throttlekit")


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage errors with exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_listen(value: str, default_port: int) -> tuple[str, int]:
    host, _, port = value.partition(":")
    return host or "127.0.0.1", int(port) if port else default_port


def _parse_range(value: str) -> tuple[int, int]:
    lo, _, hi = value.partition(":")
    return int(lo), int(hi)


def build_parser() -> _Parser:
    # global flags live on a parent parser with SUPPRESS defaults so they are
    # accepted both before and after the subcommand without clobbering
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="experiment seed (fallback: THROTTLEKIT_SEED)")
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON experiment config file (used by `run`)")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="debug logging on stderr")

    parser = _Parser(prog="throttlekit", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=f"throttlekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: _Parser(parents=[common], **kw))

    p = sub.add_parser("serve-gateway", help="run the rate-limited multiply service")
    p.add_argument("--listen", default="127.0.0.1:8080", help="host:port to bind")
    p.add_argument("--capacity", type=float, default=100.0, help="token bucket capacity")
    p.add_argument("--rate-per-min", type=float, default=80.0, help="token refill rate per minute")
    p.add_argument("--initial-tokens", type=float, default=None, help="starting tokens (default: capacity)")
    p.add_argument("--no-admin", action="store_true", help="disable /stats and /reset")
    p.add_argument("--backlog", type=int, default=2048, help="listen backlog")
    p.add_argument("--keepalive-timeout", type=float, default=350.0, help="idle connection timeout (s)")

    p = sub.add_parser("serve-telemetry", help="run the UDP telemetry aggregator")
    p.add_argument("--telemetry-listen", default="127.0.0.1:9090", help="host:port to bind")
    p.add_argument("--limiter-rate-per-min", type=float, default=None, help="limiter rate delivered in snapshots")
    p.add_argument("--horizon", type=float, default=60.0, help="report staleness horizon (s)")

    p = sub.add_parser("gen", help="generate a synthetic request trace")
    p.add_argument("--clients", type=int, required=True)
    p.add_argument("--range", dest="request_range", required=True, metavar="LO:HI", help="per-client request count range")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=None, help="exact total request count")
    p.add_argument("--horizon", type=float, default=300.0)
    p.add_argument("--arrival-mode", choices=("wrapped", "absolute", "gaps"), default="wrapped")
    p.add_argument("--arrival-scale", type=float, default=None, help="exponential scale in seconds (default: derived)")
    p.add_argument("--start-offset-max", type=float, default=10.0)

    p = sub.add_parser("ingest", help="build a trace from an access log (timestamp_iso8601,ip CSV)")
    p.add_argument("--log", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip", type=int, default=0, help="events to skip before taking --size")

    p = sub.add_parser("run", help="run an emulation experiment")
    p.add_argument("--profile", choices=("real", "synth5", "synth100"), default=None)
    p.add_argument("--strategy", choices=("ub", "wb", "atb", "aatb"), default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--clock", choices=("virtual", "wall"), default=None)
    p.add_argument("--dataset", default=None, help="trace file (default: generate from profile)")
    p.add_argument("--size", type=int, default=None, help="generated dataset size")
    p.add_argument("--dataset-seed", type=int, default=None)
    p.add_argument("--time-scale", type=float, default=None, help="wall-clock compression factor")
    p.add_argument("--gateway-url", default=None, help="external gateway (wall clock)")
    p.add_argument("--telemetry-addr", default=None, help="external telemetry host:port (wall clock)")
    p.add_argument("--out", default=None, help="metrics archive directory")

    p = sub.add_parser("oracle", help="solve an offline scheduling instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--exact", action="store_true", help="exhaustive optimum instead of greedy")

    p = sub.add_parser("report", help="summarize metrics archives")
    p.add_argument("archives", nargs="+", help="archive directories")
    p.add_argument("--baseline", default=None, help="strategy for percentage deltas")
    p.add_argument("--csv", default=None, help="write plot-ready CSV here ('-' for stdout)")
    p.add_argument("--oracle-check", action="store_true", help="verify runs against the offline bound")

    return parser


def _resolve_seed(args) -> int | None:
    seed = getattr(args, "seed", None)
    if seed is not None:
        return seed
    env = os.environ.get("THROTTLEKIT_SEED")
    return int(env) if env else None


def _cmd_serve_gateway(args) -> int:
    serve_gateway(
        GatewayConfig(
            capacity=args.capacity,
            rate_per_min=args.rate_per_min,
            listen=_parse_listen(args.listen, 8080),
            initial_tokens=args.initial_tokens,
            admin_endpoints=not args.no_admin,
            backlog=args.backlog,
            keepalive_timeout=args.keepalive_timeout,
        )
    )
    return 0


def _cmd_serve_telemetry(args) -> int:
    server = TelemetryServer(
        listen=_parse_listen(args.telemetry_listen, 9090),
        aggregator=Aggregator(horizon=args.horizon, limiter_rate_pm=args.limiter_rate_per_min),
    )
    host, port = server.address
    print(f"telemetry listening on {host}:{port}", flush=True)
    server.serve_forever()
    return 0


def _cmd_gen(args, seed: int) -> int:
    config = SynthConfig(
        num_clients=args.clients,
        request_range=_parse_range(args.request_range),
        horizon=args.horizon,
        seed=seed,
        size=args.size,
        arrival_mode=args.arrival_mode,
        arrival_scale_s=args.arrival_scale,
        start_offset_max=args.start_offset_max,
    )
    ds = gen_synthetic(config)
    digest = save_dataset(ds, args.out)
    print(json.dumps({"out": args.out, "requests": len(ds), "clients": ds.user_count,
                      "last_timestamp": ds.last_timestamp, "sha256": digest}))
    return 0


def _cmd_ingest(args, seed: int) -> int:
    events = parse_access_log(args.log)
    ds = build_real_dataset(events, size=args.size, seed=seed, skip=args.skip)
    digest = save_dataset(ds, args.out)
    print(json.dumps({"out": args.out, "requests": len(ds), "users": ds.user_count,
                      "last_timestamp": ds.last_timestamp, "sha256": digest}))
    return 0


def _cmd_run(args, seed: int | None) -> int:
    base: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            base = json.load(fh)
    overrides = {
        "profile": args.profile,
        "strategy": args.strategy,
        "runs": args.runs,
        "clock": args.clock,
        "dataset": args.dataset,
        "size": args.size,
        "dataset_seed": args.dataset_seed,
        "time_scale": args.time_scale,
        "gateway_url": args.gateway_url,
        "telemetry_addr": args.telemetry_addr,
        "out_dir": args.out,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if seed is not None:
        base["seed"] = seed
    elif "seed" not in base:
        base["seed"] = 0
    config = ExperimentConfig.from_dict(base)
    result = run_experiment(config)
    sys.stdout.write(result.summary.csv_text())
    if config.out_dir:
        log.info("archive written to %s", config.out_dir)
    return 0


def _cmd_oracle(args) -> int:
    instance = load_instance(args.instance)
    print(json.dumps(solve_to_json(instance, exact=args.exact), sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    series = load_series(args.archives)
    deltas = deltas_vs_baseline(series, args.baseline) if args.baseline else None
    print(render_table(series, deltas))
    if args.csv:
        text = series_csv(series)
        if args.csv == "-":
            sys.stdout.write(text)
        else:
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write(text)
    if args.oracle_check:
        for path in args.archives:
            meta, runs = read_archive(path)
            for row in oracle_bound_check(meta, runs):
                print(json.dumps({"archive": path, **row}, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    seed = _resolve_seed(args)
    try:
        if args.command == "serve-gateway":
            return _cmd_serve_gateway(args)
        if args.command == "serve-telemetry":
            return _cmd_serve_telemetry(args)
        if args.command == "gen":
            return _cmd_gen(args, seed or 0)
        if args.command == "ingest":
            return _cmd_ingest(args, seed or 0)
        if args.command == "run":
            return _cmd_run(args, seed)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "report":
            return _cmd_report(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (MergeError, ValueError, OSError, RuntimeError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
