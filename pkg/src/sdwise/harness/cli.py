"""Command line: ``sdwise run`` and ``sdwise sweep``."""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
from dataclasses import replace

from ..controller import STRATEGIES
from .config import ConfigError, load_config
from .export import ExportError, export
from ..metrics import efficiency
from .scenarios import SCENARIOS, InvalidScenario, default_scenario, run

EXIT_CONFIG = 2
FULL_SCALE_PACKETS = 5000
SWEEP_PARAMS = {"ttl": ("ttl_s", int), "beacon": ("beacon_s", float), "payload": ("payload", int),
                "frequency": ("frequencies", float)}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="scenario config file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--ttl", type=int, help="flow entry TTL in seconds")
    p.add_argument("--beacon-interval", type=float, help="beacon period T in seconds")
    p.add_argument("--payload", type=int, help="application payload in bytes")
    p.add_argument("--packets", type=int, help="packets per testbed flow")
    p.add_argument("--full-scale", action="store_true", help=f"send {FULL_SCALE_PACKETS} packets per flow")
    p.add_argument("--no-log", action="store_true", help="skip the per-event log")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdwise", description="Software-defined sensor network simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run one scenario and export its metrics"))
    sw = sub.add_parser("sweep", help="run a scenario once per parameter value")
    _common(sw)
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sw.add_argument("--values", required=True, help="comma separated values")
    return parser


def scenario_from_args(args):
    if args.config:
        sc = load_config(args.config)
        if args.scenario and args.scenario != sc.name:
            sc = replace(default_scenario(args.scenario), **{
                k: getattr(sc, k) for k in ("seed", "strategy", "payload", "ttl_s", "beacon_s")})
    else:
        sc = default_scenario(args.scenario or "testbed")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.strategy:
        changes["strategy"] = args.strategy
        if sc.name == "geo100":
            changes["strategies"] = (args.strategy,)
    if args.ttl is not None:
        changes["ttl_s"] = args.ttl
    if args.beacon_interval is not None:
        changes["beacon_s"] = args.beacon_interval
    if args.payload is not None:
        changes["payload"] = args.payload
    if args.packets is not None:
        changes["packets"] = args.packets
    if args.full_scale:
        changes["packets"] = FULL_SCALE_PACKETS
    if args.no_log:
        changes["log_events"] = False
    return replace(sc, **changes).validate()


def summarize(result) -> list:
    lines = []
    for label, ledger in result.ledgers.items():
        rtts = [s.seconds for s in ledger.rtt_samples]
        mean = f"{statistics.mean(rtts) * 1000:.2f} ms" if rtts else "n/a"
        energy = statistics.mean(ledger.energy_uj.values()) if ledger.energy_uj else 0.0
        lines.append(f"{label}: rtt samples={len(rtts)} mean={mean} efficiency={efficiency(ledger):.4f} "
                     f"signaling={ledger.signaling_total} rules={sum(ledger.installed_rules.values())} "
                     f"mean energy={energy:.1f} uJ")
    for f, rate, delay, c in result.fencing_rows:
        lines.append(f"f={f:g} Hz: rate={rate:.2f} B/s mean delay={delay:.3f} s cost={c:.3f}")
    if result.optimum:
        f, c, fa, ca = result.optimum
        lines.append(f"optimal frequency {f:g} Hz (cost {c:.3f}); uniform-phase model {fa:.3f} Hz (cost {ca:.3f})")
    return lines


def cmd_run(args) -> int:
    sc = scenario_from_args(args)
    result = run(sc)
    paths = export(result, args.out)
    for line in summarize(result):
        print(line)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    sc = scenario_from_args(args)
    field, convert = SWEEP_PARAMS[args.param]
    try:
        values = [convert(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --values {args.values!r} for {args.param}", "--values") from None
    if not values:
        raise ConfigError("no sweep values given", "--values")
    if args.param == "frequency":
        runs = [run(replace(sc, name="fencing", frequencies=tuple(values)).validate())]
    else:
        runs = [run(replace(sc, **{field: v}).validate()) for v in values]
    paths = export(runs, args.out)
    for r in runs:
        for line in summarize(r):
            print(line)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return {"run": cmd_run, "sweep": cmd_sweep}[args.command](args)
    except (ConfigError, InvalidScenario) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
