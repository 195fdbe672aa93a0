"""CSV and event-log export.  Headers are fixed; see HEADERS."""

from __future__ import annotations

import csv
import os

HEADERS = {
    "rtt.csv": ("src", "dst", "hops", "payload", "rtt_s"),
    "efficiency.csv": ("ttl", "beacon_T", "payload", "efficiency"),
    "signaling.csv": ("node", "strategy", "count"),
    "rules.csv": ("node", "strategy", "count"),
    "energy.csv": ("node", "strategy", "microjoules"),
    "fencing.csv": ("frequency", "rate", "mean_delay", "cost"),
}


class ExportError(OSError):
    pass


def write_csv(path: str, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from None


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.9g}"
    return x


def strategy_label(result, label: str) -> str:
    sc = result.scenario
    return sc.strategy if (sc.name == "testbed" and label == "chain") else str(label)


def rows_for(result) -> dict:
    rows = {name: [] for name in HEADERS}
    for label, ledger in result.ledgers.items():
        strategy = strategy_label(result, label)
        for s in ledger.rtt_samples:
            rows["rtt.csv"].append((s.src, s.dst, _fmt(s.hops), s.payload, _fmt(s.seconds)))
        nodes = sorted(result.networks[label].nodes) if label in result.networks else sorted(ledger.energy_uj)
        for n in nodes:
            rows["signaling.csv"].append((n, strategy, ledger.signaling.get(n, 0)))
            rows["rules.csv"].append((n, strategy, ledger.installed_rules.get(n, 0)))
            rows["energy.csv"].append((n, strategy, _fmt(ledger.energy_uj.get(n, 0.0))))
    rows["efficiency.csv"] = [tuple(_fmt(v) for v in r) for r in result.efficiency_rows()]
    rows["fencing.csv"] = [tuple(_fmt(v) for v in r) for r in result.fencing_rows]
    return rows


def events_text(result) -> str:
    out = []
    for label, text in result.logs:
        out.append(f"# run {result.scenario.name} {strategy_label(result, label)} seed={result.scenario.seed}\n")
        out.append(text)
    return "".join(out)


def export(results, out_dir: str) -> list:
    """Write every CSV plus ``events.log`` for one run or a list of runs; returns the paths."""
    if not isinstance(results, (list, tuple)):
        results = [results]
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"{out_dir}: {exc.strerror or exc}") from None
    rows = {name: [] for name in HEADERS}
    for result in results:
        for name, part in rows_for(result).items():
            rows[name].extend(part)
    paths = []
    for name, header in HEADERS.items():
        path = os.path.join(out_dir, name)
        write_csv(path, header, rows[name])
        paths.append(path)
    path = os.path.join(out_dir, "events.log")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for result in results:
                fh.write(events_text(result))
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from None
    paths.append(path)
    return paths
