"""Measurement ledger filled by hooks in the medium, nodes and controller."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .packet import SIGNALING, PacketType, is_group


class EmptyResult:
    """Returned instead of a number when a filter selects no samples."""

    def __repr__(self):
        return "EmptyResult()"

    def __bool__(self):
        return False


EMPTY = EmptyResult()


@dataclass
class RttSample:
    src: int
    dst: int
    hops: int | None
    payload: int
    seconds: float


@dataclass
class MetricLedger:
    sinks: frozenset = frozenset()
    hop_lookup: object = None  # callable (src, dst) -> hops, for non-sink destinations
    groups: dict = field(default_factory=dict)
    rtt_samples: list = field(default_factory=list)
    delivered_payload_bytes: int = 0
    delivered_packets: int = 0
    total_air_bytes: int = 0
    transmissions: int = 0
    response_times_us: list = field(default_factory=list)
    signaling: dict = field(default_factory=dict)
    signaling_by_type: dict = field(default_factory=dict)
    beacons: int = 0
    reports: int = 0
    installed_rules: dict = field(default_factory=dict)
    energy_uj: dict = field(default_factory=dict)
    activation_delays: list = field(default_factory=list)
    peripheral_log: list = field(default_factory=list)
    context_log: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    _open: dict = field(default_factory=dict, repr=False)

    # hooks

    def on_tx(self, sender, packet, nbytes):
        self.total_air_bytes += nbytes
        self.transmissions += 1
        typ = packet.typ
        if typ in SIGNALING:
            self.signaling[sender] = self.signaling.get(sender, 0) + 1
            self.signaling_by_type[typ] = self.signaling_by_type.get(typ, 0) + 1
        elif typ == PacketType.BEACON:
            self.beacons += 1
        elif typ == PacketType.REPORT:
            self.reports += 1

    def rtt_open(self, src, seq, dst, now_us, payload, td_hop):
        if dst in self.sinks:
            hops = td_hop
        elif self.hop_lookup is not None and not is_group(dst):
            hops = self.hop_lookup(src, dst)
        else:
            hops = None
        expect = set(self.groups.get(dst, ())) if is_group(dst) else None
        self._open[(src, seq)] = (dst, now_us, hops, payload, expect)

    def rtt_ack(self, node, seq, acker, now_us):
        rec = self._open.get((node, seq))
        if rec is None:
            return
        dst, sent, hops, payload, expect = rec
        if expect is None:
            if acker != dst:
                return
            del self._open[(node, seq)]
        else:
            if acker not in expect:
                return
            expect.discard(acker)
            if self.hop_lookup is not None:
                hops = self.hop_lookup(node, acker)
            if not expect:
                del self._open[(node, seq)]
        self.rtt_samples.append(RttSample(node, dst, hops, payload, (now_us - sent) / 1e6))

    def delivered(self, node, src, nbytes, now_us):
        self.delivered_payload_bytes += nbytes
        self.delivered_packets += 1

    def rule_installed(self, node):
        self.installed_rules[node] = self.installed_rules.get(node, 0) + 1

    def response_time(self, us):
        self.response_times_us.append(us)

    def peripheral_applied(self, node, periph, enable, now_us, authority):
        self.peripheral_log.append((now_us, node, int(periph), bool(enable), authority))

    def context_sent(self, node, now_us):
        self.context_log.append((now_us, node))

    def count(self, name, node=None, n=1):
        self.counters[name] = self.counters.get(name, 0) + n

    @property
    def signaling_total(self) -> int:
        return sum(self.signaling.values())


def efficiency(ledger: MetricLedger) -> float:
    if ledger.total_air_bytes == 0:
        return 0.0
    return ledger.delivered_payload_bytes / ledger.total_air_bytes


def select_rtt(ledger: MetricLedger, src=None, dst=None, hops=None, payload=None) -> list:
    out = []
    for s in ledger.rtt_samples:
        if src is not None and s.src != src:
            continue
        if dst is not None and s.dst != dst:
            continue
        if hops is not None and s.hops != hops:
            continue
        if payload is not None and s.payload != payload:
            continue
        out.append(s.seconds)
    return out


def cdf(samples) -> list:
    """Empirical CDF as sorted (value, fraction of samples <= value) pairs."""
    xs = sorted(samples)
    n = len(xs)
    out = []
    for i, x in enumerate(xs):
        if i + 1 < n and xs[i + 1] == x:
            continue
        out.append((x, (i + 1) / n))
    return out


def cdf_at(samples, value) -> float:
    xs = list(samples)
    return sum(1 for x in xs if x <= value) / len(xs)


def rtt_stats(ledger: MetricLedger, **filters):
    """(mean, stddev, cdf) of the selected RTTs, or EMPTY."""
    xs = select_rtt(ledger, **filters)
    if not xs:
        return EMPTY
    mean = sum(xs) / len(xs)
    var = sum((x - mean) ** 2 for x in xs) / (len(xs) - 1) if len(xs) > 1 else 0.0
    return mean, math.sqrt(var), cdf(xs)
