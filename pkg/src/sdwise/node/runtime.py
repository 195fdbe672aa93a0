"""SD-WISE node: forwarding pipeline, topology discovery and NF runtime."""

from __future__ import annotations

import logging
import struct
from collections import deque
from dataclasses import dataclass, field

from .. import wire
from ..compliance.attestation import EMPTY_DIGEST, digest
from ..flow_engine import (
    AcceptedIds, Action, ActionKind, Decision, FlowEntry, FlowTable, Loc, Op, Window, WiseState,
    decode_entry, execute, install, lookup,
)
from ..packet import (
    BROADCAST, CONTROLLER, CONTROLLER_BOUND, DEFAULT_NET, DOWNLINK, MalformedPacket, Packet,
    PacketType as T, decode, is_group,
)
from ..simnet import DutyCycle, EventKind, Kernel, Medium, US
from ..wire import ConfigKey, Peripheral
from .functions import GEO_UNICAST, REGISTRY, NodeContext

log = logging.getLogger(__name__)

CTRL = "ctrl"


@dataclass
class NodeParams:
    beacon_interval_us: int = 10 * US
    report_interval_us: int = 20 * US
    first_report_us: int = 20 * US
    beacon_holdoff_us: int = 50_000
    proc_base_us: int = 2_000
    proc_jitter_us: int = 1_000
    queue_size: int = 8
    request_timeout_us: int = 2 * US
    link_latency_us: int = 0
    tx_level: int = 2
    multicast_cache_us: int = 60 * US
    net: int = DEFAULT_NET


@dataclass
class NeighborEntry:
    id: int
    rssi: float
    battery: int
    last_heard: int


@dataclass
class SinkDistance:
    next_hop: int | None = None
    hop: int | None = None
    fresh_until: int = -1


@dataclass
class Pending:
    kind: str  # "rule", "geo", "mcast"
    key: tuple
    packet: Packet | None = None
    app: bytes = b""
    extra: dict = field(default_factory=dict)


def dst_window(addr: int) -> Window:
    return Window(Loc.PACKET, 2, Op.EQ, Loc.CONST, addr, 2)


def src_window(addr: int) -> Window:
    return Window(Loc.PACKET, 4, Op.EQ, Loc.CONST, addr, 2)


class Node:
    def __init__(self, addr: int, pos, kernel: Kernel, medium: Medium, params: NodeParams | None = None,
                 rng=None, metrics=None, sink: bool = False, duty: DutyCycle | None = None):
        self.addr = addr
        self.kernel = kernel
        self.medium = medium
        self.params = params or NodeParams()
        self.rng = rng
        self.metrics = metrics if metrics is not None else _NullMetrics()
        self.sink = sink
        self.energy = medium.attach(addr, pos, duty)
        self._settled_us = kernel.now
        kernel.register(addr, self.on_event)

        self.state = WiseState()
        self.accepted = AcceptedIds(addr)
        self.table = FlowTable()
        self.neighbors: dict[int, NeighborEntry] = {}
        self.td = SinkDistance(hop=0) if sink else SinkDistance()
        self._rebroadcast_round: dict[int, int] = {}
        self.tx_level = self.params.tx_level
        self.cpu_free = 0
        self.radio_free = 0
        self.queue: deque = deque()
        self.outstanding: dict = {}

        self.coord = None
        self.neighbor_coords: dict = {}
        self.geo_cache: dict = {}
        self.mc_cache: dict = {}
        self.nfs: set = set()
        self.geo_unicast = False
        self.groups: set = set()

        self.peripherals = {p: True for p in Peripheral}
        self.restrictions: dict = {}
        self.tpm = None
        self.context_source = None
        self.context_period_us = None
        self._context_gen = 0
        self._sent_contexts: deque = deque(maxlen=8)
        self._seq = 0
        self.counters: dict = {}

    # plumbing

    @property
    def now(self) -> int:
        return self.kernel.now

    @property
    def duty(self) -> DutyCycle:
        return self.medium.duty[self.addr]

    @property
    def battery(self) -> int:
        return self.energy.battery

    @property
    def position(self):
        return self.medium.positions[self.addr]

    def count(self, name: str, n: int = 1):
        self.counters[name] = self.counters.get(name, 0) + n
        self.metrics.count(name, self.addr, n)

    def timer(self, delay_us: int, *payload):
        self.kernel.after(delay_us, self.addr, EventKind.TIMER, payload)

    def on_event(self, ev):
        if ev.kind is EventKind.RADIO:
            raw, level = ev.payload
            self.medium.charge(self.addr, "rx", self.medium.energy.rx_pj(len(raw)), len(raw))
            try:
                packet = decode(raw)
            except MalformedPacket:
                self.count("malformed")
                return
            if packet.nxh not in self.accepted:
                return
            self._enqueue(packet, level)
            return
        k = self.kernel
        tag = ev.payload[0]
        k.log.record(ev.time, ev.seq, ev.kind.value, self.addr, 0, 0, tag)
        if ev.kind is EventKind.LINK:
            self._enqueue(ev.payload[1], None)
        elif tag == "proc":
            self.handle_rx(ev.payload[1], ev.payload[2])
        elif tag == "tx":
            self._transmit_now(ev.payload[1])
        elif tag == "beacon":
            self._sink_beacon(ev.payload[1])
        elif tag == "rebroadcast":
            self._rebroadcast(ev.payload[1], ev.payload[2])
        elif tag == "report":
            self.td_report()
            self.timer(self.params.report_interval_us, "report")
        elif tag == "send":
            self.send_data(ev.payload[1], ev.payload[2])
        elif tag == "msend":
            self.send_multicast(ev.payload[1], ev.payload[2])
        elif tag == "context":
            if ev.payload[1] == self._context_gen:
                self.send_context()
                self.timer(self.context_period_us, "context", self._context_gen)
        elif tag == "call":
            ev.payload[1](self)

    def start(self, report_phase_us: int = 0):
        if self.sink:
            self.kernel.at(self.now, self.addr, EventKind.TIMER, ("beacon", 0))
        self.kernel.at(self.now + self.params.first_report_us + report_phase_us, self.addr,
                       EventKind.TIMER, ("report",))

    def finish(self):
        self.settle_energy()

    def settle_energy(self, duty: DutyCycle | None = None):
        self.medium.settle(self.addr, self._settled_us, self.now, duty)
        self._settled_us = self.now

    def _enqueue(self, packet: Packet, level):
        p = self.params
        start = max(self.now, self.cpu_free)
        jitter = self.rng.randrange(p.proc_jitter_us + 1) if (self.rng and p.proc_jitter_us) else 0
        self.cpu_free = start + p.proc_base_us + jitter
        self.kernel.at(self.cpu_free, self.addr, EventKind.TIMER, ("proc", packet, level))

    def transmit(self, packet: Packet):
        start = self.duty.next_on(max(self.now, self.radio_free))
        self.radio_free = start + self.medium.radio.airtime_us(packet.length)
        if start == self.now:
            self.medium.broadcast(self.addr, packet, self.tx_level)
        else:
            self.kernel.at(start, self.addr, EventKind.TIMER, ("tx", packet))

    def _transmit_now(self, packet: Packet):
        if not self.duty.is_on(self.now):
            start = self.duty.next_on(self.now)
            self.radio_free = max(self.radio_free, start + self.medium.radio.airtime_us(packet.length))
            self.kernel.at(start, self.addr, EventKind.TIMER, ("tx", packet))
            return
        self.medium.broadcast(self.addr, packet, self.tx_level)

    def packet(self, dst: int, typ: int, payload: bytes = b"", nxh: int = BROADCAST) -> Packet:
        return Packet(self.params.net, dst, self.addr, int(typ), nxh=nxh, payload=payload)

    # forwarding pipeline

    def handle_rx(self, packet: Packet, level=None):
        typ = packet.typ
        if typ == T.BEACON:
            self.td_on_beacon(packet, level)
            return
        if packet.ttl <= 1:
            self.count("ttl_expired")
            return
        packet = packet.with_(ttl=packet.ttl - 1)
        if typ in DOWNLINK:
            self._downlink(packet)
        elif typ in CONTROLLER_BOUND:
            self._uplink(packet)
        elif packet.dst == self.addr:
            if typ == T.DATA:
                self._deliver(packet)
            elif typ == T.ACK:
                self._on_ack(packet)
        elif is_group(packet.dst) and typ == T.DATA and self._is_geo_target(packet):
            self._multicast_target(packet)
        else:
            self.forward(packet)

    def forward(self, packet: Packet, retry: bool = False):
        entry = lookup(self.table, packet, self.state, self.now)
        if entry is None:
            self._miss(packet, retry)
            return
        try:
            outcome = execute(entry.actions, packet, self.state)
        except (IndexError, ValueError):
            self.count("action_error")
            return
        self._apply(outcome, retry)

    def _apply(self, outcome, retry=False):
        d = outcome.decision
        if d in (Decision.FORWARD, Decision.BROADCAST):
            self.transmit(outcome.packet)
        elif d == Decision.DROP:
            self.count("rule_drop")
        elif d == Decision.ASK:
            self._miss(outcome.packet, retry)
        elif d == Decision.FUNCTION:
            self._invoke(outcome, retry)

    def _invoke(self, outcome, retry=False):
        handler = REGISTRY.get(outcome.fn_id) if outcome.fn_id in self.nfs else None
        if handler is None:
            self.count("nf_missing")
            return
        packet = outcome.packet
        ctx = NodeContext(self.addr, self.coord, self.neighbor_coords, self.state)
        decision, nxh = handler(packet, ctx, outcome.fn_args)
        if decision == Decision.FORWARD:
            self.transmit(packet.with_(nxh=nxh))
        elif decision == Decision.ASK:
            self.count("geo_local_minimum")
            if is_group(packet.dst):
                self.count("geo_multicast_stuck")
            else:
                self._miss(packet, retry, force_rule=True)
        else:
            self.count("protocol_error")

    def _miss(self, packet: Packet, retry: bool = False, force_rule: bool = False):
        key = ("rule", packet.src, packet.dst)
        self._queue_push(Pending("rule", key, packet))
        if self._should_request(key):
            self.send_up(self.packet(CONTROLLER, T.RULE_REQUEST, wire.header_of(packet.encode())))
            self.count("rule_request")

    def _should_request(self, key) -> bool:
        t = self.outstanding.get(key)
        if t is not None and self.now - t < self.params.request_timeout_us:
            return False
        self.outstanding[key] = self.now
        return True

    def _queue_push(self, item: Pending):
        if len(self.queue) >= self.params.queue_size:
            self.queue.popleft()
            self.count("queue_drop")
        self.queue.append(item)

    def _retry_queue(self):
        pending = list(self.queue)
        self.queue.clear()
        for item in pending:
            if item.kind == "rule":
                self.forward(item.packet, retry=True)
            elif item.kind == "geo":
                self._geo_resume(item)
            elif item.kind == "mcast":
                self._fan_out(item.key[1], item.key[2], item.app, item.extra.get("src"), pending_item=item)

    # controller channel

    def send_up(self, packet: Packet):
        if self.sink:
            self.kernel.after(self.params.link_latency_us, CTRL, EventKind.LINK, (self.addr, packet))
            return
        if self.td.next_hop is None:
            self.count("no_route_to_sink")
            return
        self.transmit(packet.with_(nxh=self.td.next_hop))

    def _uplink(self, packet: Packet):
        if self.sink:
            self.send_up(packet)
            return
        entry0 = self.table.entry0
        if entry0 is None:
            self.count("no_route_to_sink")
            return
        entry0.hits += 1
        self.transmit(packet.with_(nxh=self.td.next_hop))

    def _downlink(self, packet: Packet):
        route, cursor, body = wire.unwrap_route(packet.payload)
        if cursor >= len(route) or route[cursor] != self.addr:
            self.count("route_mismatch")
            return
        installed = False
        if packet.typ == T.RULE_RESPONSE:
            installed = self._install_from_response(route, cursor, body)
        if cursor == len(route) - 1:
            self._downlink_final(packet.typ, body)
        else:
            self.transmit(packet.with_(payload=wire.advance_route(packet.payload), nxh=route[cursor + 1]))
        if installed:
            self._retry_queue()

    def _install_from_response(self, route, cursor, body) -> bool:
        rr = wire.RuleResponse.decode(body)
        if cursor < rr.path_start:
            return False
        path = route[rr.path_start:]
        i = cursor - rr.path_start
        front = bool(rr.flags & wire.RULE_FRONT)
        entries = []
        if rr.flags & wire.RULE_DROP:
            if i == 0:
                entries.append(FlowEntry((dst_window(rr.dst),), (Action.drop(),), rr.ttl))
        else:
            if i < len(path) - 1:
                entries.append(FlowEntry((dst_window(rr.dst), src_window(rr.src)),
                                         (Action.forward(path[i + 1]),), rr.ttl))
            if i > 0:
                entries.append(FlowEntry((dst_window(rr.src), src_window(rr.dst)),
                                         (Action.forward(path[i - 1]),), rr.ttl))
        for entry in entries:
            self.install_entry(entry, front=front)
        self.outstanding.pop(("rule", rr.src, rr.dst), None)
        return bool(entries)

    def install_entry(self, entry: FlowEntry, front: bool = False):
        # an entry with the same match replaces the resident one
        self.table.entries = [e for e in self.table.entries if e.windows != entry.windows]
        evicted = install(self.table, entry, self.now, front=front)
        if evicted is not None:
            self.count("rule_evicted")
        self.metrics.rule_installed(self.addr)

    def _downlink_final(self, typ, body: bytes):
        if typ == T.CONFIG:
            self.apply_config(wire.decode_config(body))
        elif typ == T.NF_DEPLOY:
            self._deploy(body)
        elif typ == T.GEO_RESPONSE:
            self._geo_response(body)
        elif typ == T.ATTEST_CHALLENGE:
            self._attest(body)

    # topology discovery

    def _set_route(self, next_hop: int, hop: int):
        self.td = SinkDistance(next_hop, hop, self.now + 2 * self.params.beacon_interval_us)
        self.table.set_entry0(FlowEntry((dst_window(CONTROLLER),), (Action.forward(next_hop),)))

    def td_on_beacon(self, packet: Packet, level):
        b = wire.Beacon.decode(packet.payload)
        sender = packet.src
        self.neighbors[sender] = NeighborEntry(sender, level if level is not None else 0.0,
                                               b.battery, self.now)
        if self.sink:
            return
        td = self.td
        fresh = td.hop is not None and self.now <= td.fresh_until
        if not fresh or b.distance + 1 < td.hop:
            self._set_route(sender, b.distance + 1)
        elif sender == td.next_hop and b.distance + 1 == td.hop:
            td.fresh_until = self.now + 2 * self.params.beacon_interval_us
        if self._rebroadcast_round.get(b.sink, -1) != b.round:
            self._rebroadcast_round[b.sink] = b.round
            self.timer(self.params.beacon_holdoff_us, "rebroadcast", b.sink, b.round)

    def _rebroadcast(self, sink: int, rnd: int):
        if self.td.hop is None:
            return
        beacon = wire.Beacon(sink, rnd, self.battery, self.td.hop)
        self.transmit(self.packet(BROADCAST, T.BEACON, beacon.encode()))

    def _sink_beacon(self, rnd: int):
        beacon = wire.Beacon(self.addr, rnd, self.battery, 0)
        self.transmit(self.packet(BROADCAST, T.BEACON, beacon.encode()))
        self.timer(self.params.beacon_interval_us, "beacon", rnd + 1)

    def td_report(self) -> Packet:
        records = [(n.id, n.rssi) for n in self.neighbors.values()]
        report = self.packet(CONTROLLER, T.REPORT, wire.encode_report(self.battery, records))
        self.neighbors.clear()
        self.send_up(report)
        return report

    # application traffic

    def _next_seq(self) -> int:
        self._seq = (self._seq + 1) & 0xFFFF
        return self._seq

    def _app_payload(self, size: int, seq: int) -> bytes:
        return struct.pack(">H", seq) + bytes(max(0, size - 2))

    def send_data(self, dst: int, size: int) -> int:
        seq = self._next_seq()
        app = self._app_payload(size, seq)
        self.metrics.rtt_open(self.addr, seq, dst, self.now, len(app), self.td.hop)
        self._send_unicast(dst, T.DATA, app)
        return seq

    def _send_unicast(self, dst: int, typ, app: bytes):
        if self.geo_unicast:
            coord = self.geo_cache.get(dst)
            if coord is None:
                key = ("geo", dst)
                self._queue_push(Pending("geo", key, app=app, extra={"typ": typ}))
                if self._should_request(key):
                    self.send_up(self.packet(CONTROLLER, T.GEO_REQUEST, wire.encode_geo_request(dst)))
                return
            app = wire.encode_shim(coord) + app
        self.forward(self.packet(dst, typ, app))

    def _geo_resume(self, item: Pending):
        dst = item.key[1]
        if dst in self.geo_cache:
            self._send_unicast(dst, item.extra["typ"], item.app)
        else:
            self._queue_push(item)

    def _app_bytes(self, packet: Packet) -> bytes:
        if self.geo_unicast or is_group(packet.dst):
            return packet.payload[4:]
        return packet.payload

    def _deliver(self, packet: Packet):
        app = self._app_bytes(packet)
        self.metrics.delivered(self.addr, packet.src, len(app), self.now)
        self._send_unicast(packet.src, T.ACK, app[:2])

    def _on_ack(self, packet: Packet):
        seq = struct.unpack(">H", packet.payload[-2:])[0]
        self.metrics.rtt_ack(self.addr, seq, packet.src, self.now)

    # multicast

    def join_group(self, group: int):
        self.groups.add(group)
        self.send_up(self.packet(CONTROLLER, T.GROUP_JOIN, wire.encode_group(group)))

    def leave_group(self, group: int):
        self.groups.discard(group)
        self.send_up(self.packet(CONTROLLER, T.GROUP_LEAVE, wire.encode_group(group)))

    def send_multicast(self, group: int, size: int) -> int:
        seq = self._next_seq()
        app = self._app_payload(size, seq)
        self.metrics.rtt_open(self.addr, seq, group, self.now, len(app), self.td.hop)
        self._fan_out(group, self.addr, app, self.addr)
        return seq

    def _is_geo_target(self, packet: Packet) -> bool:
        shim = wire.decode_shim(packet.payload)
        return shim is not None and self.coord is not None and shim == wire.quantize(self.coord)

    def _multicast_target(self, packet: Packet):
        group, origin = packet.dst, packet.src
        app = packet.payload[4:]
        if group in self.groups:
            self.metrics.delivered(self.addr, origin, len(app), self.now)
            self._send_unicast(origin, T.ACK, app[:2])
        self._fan_out(group, origin, app, origin)

    def _fan_out(self, group, origin, app, src, pending_item=None):
        key = ("mcast", group, origin)
        cached = self.mc_cache.get((group, origin))
        if cached is None or cached[1] < self.now:
            item = pending_item or Pending("mcast", key, app=app, extra={"src": src})
            self._queue_push(item)
            if self._should_request(key):
                self.send_up(self.packet(CONTROLLER, T.GEO_REQUEST, wire.encode_geo_request(group, origin)))
            return
        for child, coord in cached[0]:
            if child == self.addr:
                continue
            copy = Packet(self.params.net, group, src, T.DATA, payload=wire.encode_shim(coord) + app)
            self.forward(copy)

    def _geo_response(self, body: bytes):
        target, origin, records = wire.decode_geo_response(body)
        if is_group(target):
            self.mc_cache[(target, origin)] = (records, self.now + self.params.multicast_cache_us)
            self.outstanding.pop(("mcast", target, origin), None)
        elif records:
            self.geo_cache[target] = records[0][1]
            self.outstanding.pop(("geo", target), None)
        self._retry_queue()

    # NF runtime

    def _deploy(self, body: bytes):
        fn_id, count = body[0], body[1]
        offset = 2
        if fn_id not in REGISTRY:
            self.count("nf_unknown")
            return
        self.nfs.add(fn_id)
        for _ in range(count):
            entry, offset = decode_entry(body, offset)
            if not any(e.same_rule(entry) for e in self.table.entries):
                self.install_entry(entry)
        self.geo_unicast = any(
            a.args and a.args[0] == fn_id and a.args[1] == GEO_UNICAST
            for e in self.table.entries for a in e.actions if a.kind == ActionKind.INVOKE_FUNCTION)

    # configuration

    def apply_config(self, pairs):
        changed = []
        for key, value in pairs:
            try:
                key = ConfigKey(key)
            except ValueError:
                self.count("config_unknown_key")
                continue
            if key == ConfigKey.DUTY_PERIOD or key == ConfigKey.DUTY_FRACTION:
                self.settle_energy()
                d = self.duty
                if key == ConfigKey.DUTY_PERIOD:
                    d = DutyCycle(struct.unpack(">I", value)[0], d.on_fraction, d.phase_us)
                else:
                    d = DutyCycle(d.period_us, struct.unpack(">H", value)[0] / 1000.0, d.phase_us)
                self.medium.duty[self.addr] = d
            elif key == ConfigKey.TX_LEVEL:
                if 1 <= value[0] <= len(self.medium.radio.tx_power_levels):
                    self.tx_level = value[0]
            elif key == ConfigKey.ACCEPT_ADD:
                self.accepted.add(struct.unpack(">H", value)[0])
            elif key == ConfigKey.ACCEPT_REMOVE:
                self.accepted.remove(struct.unpack(">H", value)[0])
            elif key == ConfigKey.STATE_WRITE:
                if value[0] < len(self.state):
                    self.state[value[0]] = value[1]
            elif key == ConfigKey.PERIPHERAL:
                if self.set_peripheral(value[0], bool(value[1]), authority=False):
                    changed.append(value[0])
            elif key == ConfigKey.RESTRICT:
                if self.set_peripheral(value[0], bool(value[1]), authority=True):
                    changed.append(value[0])
            elif key == ConfigKey.COORDS:
                records = wire.decode_coords(value)
                if records and records[0][0] == self.addr:
                    self.coord = records[0][1]
                    records = records[1:]
                self.neighbor_coords.update(dict(records))
            elif key == ConfigKey.INSTALL_ENTRY:
                entry, _ = decode_entry(value)
                self.install_entry(entry)
            elif key == ConfigKey.CONTEXT_PERIOD:
                self.set_context_period(struct.unpack(">I", value)[0])
        if changed:
            self.send_context()

    def set_peripheral(self, periph: int, enable: bool, authority: bool) -> bool:
        """Returns True when the request was applied."""
        if authority:
            self.restrictions[periph] = enable
        elif self.restrictions.get(periph) is False and enable:
            self.count("user_config_rejected")
            return False
        self.peripherals[periph] = enable
        self.metrics.peripheral_applied(self.addr, periph, enable, self.now, authority)
        return True

    def read_peripheral(self, periph: int):
        return self.peripherals.get(periph, False)

    # compliance

    def set_context_period(self, period_us: int, phase_us: int = 0):
        self._context_gen += 1
        self.context_period_us = period_us
        if period_us:
            self.timer(phase_us, "context", self._context_gen)

    def context(self) -> wire.ContextPayload:
        pos, orientation, owner = self.position, 0.0, 0
        if self.context_source is not None:
            pos, orientation, owner = self.context_source(self.now)
        sensors = tuple((0x80 | int(p), int(on)) for p, on in sorted(self.peripherals.items()))
        return wire.ContextPayload(pos, orientation, owner, sensors)

    def send_context(self):
        payload = self.context().encode()
        self._sent_contexts.append(digest(payload))
        self.metrics.context_sent(self.addr, self.now)
        self.send_up(self.packet(CONTROLLER, T.CONTEXT_REPORT, payload))

    def _attest(self, body: bytes):
        nonce, wanted = body[:16], body[16:48]
        report_digest = wanted if (wanted == EMPTY_DIGEST or wanted in self._sent_contexts) else (
            self._sent_contexts[-1] if self._sent_contexts else EMPTY_DIGEST)
        quote = self.tpm.quote(nonce, report_digest) if self.tpm is not None else bytes(32)
        self.send_up(self.packet(CONTROLLER, T.ATTEST_RESPONSE, quote))


class _NullMetrics:
    def __getattr__(self, name):
        return lambda *a, **k: None
