"""Controller: topology view, resource store and the southbound handlers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .. import wire
from ..compliance.context import restriction_pairs
from ..flow_engine import Action, FlowEntry, Loc, Op, Window, encode_entry
from ..node.functions import GEO_MULTICAST, GEO_UNICAST, is_registered
from ..packet import CONTROLLER, DEFAULT_NET, GROUP_BASE, MAX_PAYLOAD, Packet, PacketType as T, is_group, read_u16
from ..simnet import EventKind, Kernel, US
from .localization import rssi_to_distance, rssi_localize
from .paths import NoRoute, greedy_chain, hop_distances, shortest_path
from .steiner import nearest_node, steiner_tree

log = logging.getLogger(__name__)

STRATEGIES = ("shortest", "geo-ctrl", "geo-dist")
CTRL = "ctrl"


@dataclass
class ControllerParams:
    strategy: str = "shortest"
    entry_ttl_s: int = 60
    response_us: int = 1_000
    staleness_us: int = 60 * US
    drop_ttl_s: int = 5
    localization: str = "oracle"  # or "localized"
    move_threshold_m: float = 0.5
    net: int = DEFAULT_NET

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        if self.localization not in ("oracle", "localized"):
            raise ValueError(f"unknown localization mode {self.localization!r}")


@dataclass
class NodeRecord:
    id: int
    battery: int = 100
    last_report: int = -1
    coord: tuple | None = None
    provenance: str = ""
    trusted: bool = False


class TopologyView:
    def __init__(self, staleness_us: int):
        self.staleness_us = staleness_us
        self.nodes: dict[int, NodeRecord] = {}
        self.edges: dict[tuple, tuple] = {}  # (tx, rx) -> (rssi, last_seen)

    def node(self, nid: int) -> NodeRecord:
        rec = self.nodes.get(nid)
        if rec is None:
            rec = self.nodes[nid] = NodeRecord(nid)
        return rec

    def update(self, reporter: int, battery: int, records, now: int) -> int:
        rec = self.node(reporter)
        rec.battery = battery
        rec.last_report = now
        for nid, level in records:
            self.node(nid)
            self.edges[(nid, reporter)] = (level, now)
        return len(records)

    def graph(self, now: int) -> dict:
        g: dict = {n: set() for n in self.nodes}
        for (a, b), (_, seen) in self.edges.items():
            if now - seen <= self.staleness_us:
                g[a].add(b)
        return g

    def neighbors(self, nid: int, now: int) -> set:
        return self.graph(now).get(nid, set())

    def coords(self) -> dict:
        return {n: r.coord for n, r in self.nodes.items() if r.coord is not None}


class ResourceStore:
    """Controller-side view of node resources; mutated only by controller events."""

    def __init__(self):
        self.records: dict[int, dict] = {}

    def record(self, nid: int) -> dict:
        rec = self.records.get(nid)
        if rec is None:
            rec = self.records[nid] = {
                "peripherals": {p: True for p in wire.Peripheral},
                "restrictions": {},
                "duty": None,
                "tx_level": None,
                "nfs": set(),
                "updated": 0,
            }
        return rec

    def restrict(self, nid: int, periph: int, enable: bool, now: int):
        rec = self.record(nid)
        rec["restrictions"][periph] = enable
        rec["peripherals"][periph] = enable
        rec["updated"] = now

    def user_request(self, nid: int, periph: int, enable: bool, now: int) -> bool:
        rec = self.record(nid)
        if enable and rec["restrictions"].get(periph) is False:
            return False
        rec["peripherals"][periph] = enable
        rec["updated"] = now
        return True

    def observe(self, nid: int, sensors, now: int):
        rec = self.record(nid)
        for sid, value in sensors:
            if sid & 0x80:
                try:
                    rec["peripherals"][wire.Peripheral(sid & 0x7F)] = bool(value)
                except ValueError:
                    pass
        rec["updated"] = now

    def snapshot(self) -> dict:
        return {n: {k: (dict(v) if isinstance(v, dict) else set(v) if isinstance(v, set) else v)
                    for k, v in rec.items()}
                for n, rec in sorted(self.records.items())}


def trigger_entry(fn_id: int, scope: str) -> FlowEntry:
    """Permanent entry that hands DATA/ACK traffic to ``fn_id``."""
    if scope == "unicast":
        window = Window(Loc.PACKET, 2, Op.LT, Loc.CONST, GROUP_BASE, 2)
        return FlowEntry((window,), (Action.invoke(fn_id, GEO_UNICAST),))
    if scope == "multicast":
        window = Window(Loc.PACKET, 2, Op.GE, Loc.CONST, GROUP_BASE, 2)
        return FlowEntry((window,), (Action.invoke(fn_id, GEO_MULTICAST),))
    raise ValueError(f"unknown trigger scope {scope!r}")


class Controller:
    def __init__(self, kernel: Kernel, sinks, params: ControllerParams | None = None, metrics=None,
                 positions: dict | None = None, anchors: dict | None = None, radio=None, tx_level: int = 2):
        self.kernel = kernel
        self.params = params or ControllerParams()
        self.sinks = sorted(sinks)
        self.metrics = metrics
        self.topology = TopologyView(self.params.staleness_us)
        self.resources = ResourceStore()
        self.groups: dict[int, set] = {}
        self._trees: dict = {}
        self.radio = radio
        self.tx_level = tx_level
        self.anchors = dict(anchors or {})
        self.flagged: set = set()
        self.compliance = None
        self.counters: dict = {}
        self.response_times: list = []
        self.coords_pushed: set = set()
        for s in self.sinks:
            self.topology.node(s)
        if positions:
            for nid, pos in positions.items():
                rec = self.topology.node(nid)
                if self.params.localization == "oracle" or nid in self.anchors or nid in self.sinks:
                    rec.coord, rec.provenance = (float(pos[0]), float(pos[1])), "oracle"
        kernel.register(CTRL, self.on_event)

    @property
    def now(self) -> int:
        return self.kernel.now

    def count(self, name: str, n: int = 1):
        self.counters[name] = self.counters.get(name, 0) + n

    # southbound transport

    def on_event(self, ev):
        sink, packet = ev.payload
        self.kernel.log.record(ev.time, ev.seq, ev.kind.value, CTRL, packet.length, 0, f"from={sink} typ={packet.typ}")
        self.receive(packet)

    def route_to(self, nid: int) -> list:
        graph = self.topology.graph(self.now)
        best = None
        for s in self.sinks:
            if s == nid:
                return [s]
            try:
                path = shortest_path(graph, s, nid)
            except NoRoute:
                continue
            if best is None or len(path) < len(best):
                best = path
        if best is None:
            raise NoRoute(f"node {nid} unreachable from every sink")
        return best

    def send_downlink(self, typ, route: list, body: bytes, delay_us: int | None = None) -> Packet | None:
        if len(route) > wire.route_capacity(len(body)):
            self.count("route_too_long")
            return None
        packet = Packet(self.params.net, route[-1], CONTROLLER, int(typ), nxh=route[0],
                        payload=wire.wrap_route(route, body))
        return self.send_packet(packet, delay_us)

    def send_packet(self, packet: Packet, delay_us: int | None = None) -> Packet:
        """Hand a source-routed packet to the first sink on its route."""
        delay = self.params.response_us if delay_us is None else delay_us
        self.kernel.after(delay, packet.nxh, EventKind.LINK, (CTRL, packet))
        return packet

    def send_to(self, nid: int, typ, body: bytes, delay_us: int | None = None) -> Packet | None:
        try:
            route = self.route_to(nid)
        except NoRoute:
            self.count("downlink_unreachable")
            return None
        return self.send_downlink(typ, route, body, delay_us)

    def send_config(self, nid: int, pairs, delay_us: int | None = None) -> Packet | None:
        return self.send_to(nid, T.CONFIG, wire.encode_config(pairs), delay_us)

    def receive(self, packet: Packet):
        typ = packet.typ
        if packet.net != self.params.net:
            self.count("foreign_net")
            return
        if typ == T.REPORT:
            self.on_report(packet.src, packet.payload)
        elif typ == T.RULE_REQUEST:
            self.handle_rule_request(packet.src, packet.payload)
        elif typ == T.GEO_REQUEST:
            target, origin = wire.decode_geo_request(packet.payload)
            if is_group(target):
                self.handle_multicast_request(packet.src, target, origin)
            else:
                self.handle_geo_request(packet.src, target)
        elif typ in (T.GROUP_JOIN, T.GROUP_LEAVE):
            self.handle_group(packet.src, typ, read_u16(packet.payload, 0))
        elif typ == T.CONTEXT_REPORT:
            self.resources.observe(packet.src, wire.ContextPayload.decode(packet.payload).sensors, self.now)
            if self.compliance is not None:
                self.compliance.on_context(packet.src, packet.payload, self.now)
        elif typ == T.ATTEST_RESPONSE:
            if self.compliance is not None:
                self.compliance.on_attest(packet.src, packet.payload, self.now)
        else:
            self.count("unexpected_type")

    def _record_response(self):
        self.response_times.append(self.params.response_us)
        if self.metrics is not None:
            self.metrics.response_time(self.params.response_us)

    # topology

    def on_report(self, reporter: int, payload: bytes) -> int:
        battery, records = wire.decode_report(payload)
        n = self.topology.update(reporter, battery, records, self.now)
        if self.params.localization == "localized" and self.radio is not None:
            self.localize()
        return n

    def localize(self):
        power = self.radio.power(self.tx_level)
        ranges: dict = {}
        for (a, b), (level, seen) in self.topology.edges.items():
            if self.now - seen > self.params.staleness_us:
                continue
            d = rssi_to_distance(level, power, self.radio.pl0, self.radio.exponent, self.radio.d0)
            key = frozenset((a, b))
            ranges[key] = (ranges[key] + d) / 2 if key in ranges else d
        anchors = {n: self.topology.nodes[n].coord for n in self.anchors}
        previous = {n: r.coord for n, r in self.topology.nodes.items() if r.coord is not None}
        coords, self.flagged = rssi_localize(ranges, anchors, previous)
        moved = []
        for nid, c in coords.items():
            rec = self.topology.node(nid)
            if nid in self.anchors:
                continue
            if rec.coord is None or math.dist(rec.coord, c) > self.params.move_threshold_m:
                moved.append(nid)
            rec.coord, rec.provenance = c, "localized"
        if self.coords_pushed:
            targets = set(moved)
            graph = self.topology.graph(self.now)
            for nid in moved:
                targets |= graph.get(nid, set())
            for nid in sorted(targets & self.coords_pushed):
                self.push_coords(nid)
        return moved

    # rule synthesis

    def compute_path(self, src: int, dst: int, strategy: str | None = None) -> list:
        strategy = strategy or self.params.strategy
        graph = self.topology.graph(self.now)
        if strategy == "geo-ctrl":
            coords = self.topology.coords()
            if src in coords and dst in coords:
                return greedy_chain(graph, coords, src, dst)
        return shortest_path(graph, src, dst)

    def handle_rule_request(self, requester: int, header: bytes):
        fdst, fsrc = read_u16(header, 2), read_u16(header, 4)
        self._record_response()
        try:
            down = self.route_to(requester)
        except NoRoute:
            self.count("downlink_unreachable")
            return None
        front = self.params.strategy == "geo-dist"
        try:
            path = self.compute_path(requester, fdst)
        except NoRoute:
            self.count("no_route")
            rr = wire.RuleResponse(fsrc, fdst, self.params.drop_ttl_s, wire.RULE_DROP, len(down) - 1)
            return self.send_downlink(T.RULE_RESPONSE, down, rr.encode())
        flags = wire.RULE_FRONT if front else 0
        rr = wire.RuleResponse(fsrc, fdst, self.params.entry_ttl_s, flags, len(down) - 1)
        return self.send_downlink(T.RULE_RESPONSE, down + path[1:], rr.encode())

    def handle_geo_request(self, requester: int, target: int):
        self._record_response()
        rec = self.topology.nodes.get(target)
        records = [(target, rec.coord)] if rec is not None and rec.coord is not None else []
        if not records:
            self.count("unknown_coordinates")
        return self.send_to(requester, T.GEO_RESPONSE, wire.encode_geo_response(target, 0, records))

    # multicast

    def handle_group(self, nid: int, typ, group: int):
        if not is_group(group):
            self.count("bad_group")
            return
        members = self.groups.setdefault(group, set())
        if typ == T.GROUP_JOIN:
            members.add(nid)
        else:
            members.discard(nid)
        self._trees = {k: v for k, v in self._trees.items() if k[0] != group}

    def multicast_tree(self, group: int, origin: int) -> dict:
        """Children lists of the node-level multicast tree rooted at ``origin``."""
        key = (group, origin)
        if key in self._trees:
            return self._trees[key]
        members = sorted(self.groups.get(group, ()))
        if not members:
            raise NoRoute(f"group {group:#06x} has no members")
        coords = self.topology.coords()
        terminals = [origin] + [m for m in members if m != origin]
        tree = steiner_tree([coords[n] for n in terminals])
        ids = []
        by_coord = {}
        for n in terminals:
            by_coord.setdefault((float(coords[n][0]), float(coords[n][1])), n)
        for i, v in enumerate(tree.vertices):
            ids.append(by_coord[v] if i < tree.n_terminals else nearest_node(v, coords))
        adj: dict = {}
        for i, j in tree.edges:
            a, b = ids[i], ids[j]
            if a != b:
                adj.setdefault(a, set()).add(b)
                adj.setdefault(b, set()).add(a)
        children: dict = {}
        seen = {origin}
        frontier = [origin]
        while frontier:
            nxt = []
            for u in frontier:
                kids = sorted(v for v in adj.get(u, ()) if v not in seen)
                seen.update(kids)
                children[u] = kids
                nxt.extend(kids)
            frontier = nxt
        self._trees[key] = children
        return children

    def handle_multicast_request(self, requester: int, group: int, origin: int):
        self._record_response()
        try:
            kids = self.multicast_tree(group, origin).get(requester, [])
        except NoRoute:
            self.count("no_route")
            kids = []
        coords = self.topology.coords()
        records = [(k, coords[k]) for k in kids]
        return self.send_to(requester, T.GEO_RESPONSE, wire.encode_geo_response(group, origin, records))

    # network functions

    def deploy_nf(self, fn_id: int, targets, scope: str = "unicast") -> list:
        """Send the function binding plus its trigger entry to every target.

        Target selection (which nodes actually need the function) is the
        identity here: every node asked for gets it.
        """
        if not is_registered(fn_id):
            raise ValueError(f"network function {fn_id:#04x} is not registered on the nodes")
        entry = trigger_entry(fn_id, scope)
        body = bytes([fn_id, 1]) + encode_entry(entry)
        sent = []
        for nid in sorted(targets):
            if self.send_to(nid, T.NF_DEPLOY, body) is not None:
                sent.append(nid)
                self.resources.record(nid)["nfs"].add(fn_id)
            self.push_coords(nid)
        return sent

    def push_coords(self, nid: int) -> int:
        """CONFIG the node with its own and its neighbors' coordinates; returns packets sent."""
        coords = self.topology.coords()
        if nid not in coords:
            return 0
        graph = self.topology.graph(self.now)
        nbrs = [(n, coords[n]) for n in sorted(graph.get(nid, ())) if n in coords]
        try:
            route = self.route_to(nid)
        except NoRoute:
            self.count("downlink_unreachable")
            return 0
        room = MAX_PAYLOAD - 2 - 2 * len(route) - 3  # route header, config count, key, len
        per = max(1, room // 6 - 1)
        sent = 0
        while True:
            chunk = [(nid, coords[nid])] + nbrs[:per]
            nbrs = nbrs[per:]
            pairs = [(wire.ConfigKey.COORDS, wire.encode_coords(chunk))]
            if self.send_downlink(T.CONFIG, route, wire.encode_config(pairs)) is not None:
                sent += 1
            if not nbrs:
                break
        self.coords_pushed.add(nid)
        return sent

    # peripherals

    def set_restriction(self, nid: int, effects, delay_us: int | None = None) -> Packet | None:
        for p, on in effects:
            self.resources.restrict(nid, p, on, self.now)
        return self.send_config(nid, restriction_pairs(effects), delay_us)

    def user_peripheral(self, nid: int, periph: int, enable: bool) -> Packet | None:
        """User-side peripheral request; refused while an authority restriction holds."""
        if not self.resources.user_request(nid, periph, enable, self.now):
            self.count("user_request_refused")
            return None
        return self.send_config(nid, [(wire.ConfigKey.PERIPHERAL, bytes([int(periph), int(enable)]))])


def hop_table(graph: dict, sinks) -> dict:
    """Hop distance from every node to its nearest sink."""
    best: dict = {}
    for s in sinks:
        for n, d in hop_distances(graph, s, reverse=True).items():
            if d < best.get(n, math.inf):
                best[n] = d
    return best

