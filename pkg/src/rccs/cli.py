"""Command-line interface: simulate | serve | client | report."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__


def _suite_configs(suite: str, seed: int, duration: float | None):
    from . import scenarios as sc
    from dataclasses import replace

    def dur(cfg, default=None):
        d = duration if duration is not None else default
        return replace(cfg, duration=d) if d is not None else cfg

    if suite == "validation":
        return [dur(c) for c in sc.validation_grid(seed=seed)]
    if suite == "effectiveness":
        return [dur(sc.effectiveness(v, seed=seed))
                for v in ("mpc", "a-mpc", "oa-mpc", "r-ccs")]
    if suite == "chaos":
        return [dur(sc.chaos(v, seed=seed)) for v in ("oa-mpc", "r-ccs")]
    if suite == "starvation":
        return [dur(sc.starvation(v, seed=seed)) for v in ("oa-mpc", "r-ccs")]
    if suite == "switch":
        return [dur(sc.cloud_switch(seed=seed))]
    raise ValueError(f"unknown suite {suite!r}")


def cmd_simulate(args) -> int:
    from . import scenarios as sc
    from . import sim

    if bool(args.config) == bool(args.suite):
        print("simulate: give either a config file or --suite", file=sys.stderr)
        return 2
    if args.config:
        configs = [sc.load(args.config)]
    else:
        configs = _suite_configs(args.suite, args.seed, args.duration)

    os.makedirs(args.out, exist_ok=True)
    results = []
    for cfg in configs:
        ideal = sim.run_ideal(cfg)
        res = sim.run_scenario(cfg, reference=ideal)
        results.append(res)
        tag = f"{cfg.name}-seed{cfg.seed}"
        sim.export(ideal.tenants[0].trace,
                   os.path.join(args.out, f"{tag}-ideal.csv"))
        for tr in res.tenants:
            suffix = f"-{tr.name}" if len(res.tenants) > 1 else ""
            sim.export(tr.trace, os.path.join(args.out, f"{tag}{suffix}.csv"))
        print(f"{tag}: " + ", ".join(
            f"{tr.name}/{tr.variant} clre={tr.metrics.clre_final:.2f}"
            f"{' FELL' if tr.metrics.failed else ''}"
            for tr in res.tenants))

    import csv
    rows = sim.summarize(results)
    path = os.path.join(args.out, "summary.csv")
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve
    cfg = ServiceConfig()
    if args.config:
        from . import scenarios as sc
        scfg = sc.load(args.config)
        cfg = ServiceConfig(k_v=scfg.k_v, k_u=scfg.k_u, h_q=scfg.h_q,
                            mpc=scfg.mpc)
    serve(args.port, cfg, host=args.host)
    return 0


def cmd_client(args) -> int:
    from . import scenarios as sc
    from .client import client_run

    cfg = sc.load(args.config)
    trace, stats = client_run(cfg, args.endpoint, out_path=args.out,
                              tick_scale=args.tick_scale)
    print(f"ticks={stats.ticks} overruns={stats.overruns} "
          f"requests={stats.requests} responses={stats.responses} "
          f"transport_errors={stats.transport_errors} "
          f"median_rtt={stats.median_rtt * 1e3:.1f} ms "
          f"{'FELL' if trace.failed_at is not None else 'ok'}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    from .report import format_table, run_report
    rows = run_report(args.traces, args.out)
    print(format_table(rows))
    print(f"wrote {os.path.join(args.out, 'summary.csv')} and figures")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rccs",
                                description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--log-level",
                   default=os.environ.get("RCCS_LOG_LEVEL", "WARNING"))
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario or a named suite")
    s.add_argument("config", nargs="?", help="scenario config JSON")
    s.add_argument("--suite", choices=("validation", "effectiveness", "chaos",
                                       "starvation", "switch"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=None,
                   help="override run length (s)")
    s.add_argument("--out", default="traces", help="output directory")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("serve", help="run the controller service")
    s.add_argument("port", type=int)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--config", help="scenario config to take the controller "
                                    "parameterization from")
    s.set_defaults(fn=cmd_serve)

    s = sub.add_parser("client", help="live wall-clock run against a service")
    s.add_argument("config", help="scenario config JSON")
    s.add_argument("--endpoint", action="append", required=True,
                   help="service URL, or name=URL (repeatable)")
    s.add_argument("--out", default=None, help="trace CSV path")
    s.add_argument("--tick-scale", type=float, default=1.0,
                   help="wall-clock stretch factor for slow hosts")
    s.set_defaults(fn=cmd_client)

    s = sub.add_parser("report", help="summary table + figures from traces")
    s.add_argument("traces", nargs="+", help="trace CSV files")
    s.add_argument("--out", default="report", help="output directory")
    s.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    try:
        return args.fn(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
