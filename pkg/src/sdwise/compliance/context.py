"""Contexts, zones and authority restriction rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..packet import Packet, PacketType, CONTROLLER, DEFAULT_NET
from ..wire import ConfigKey, ContextPayload, encode_config, wrap_route

DEFAULT_AUTHORITY = "default"


@dataclass(frozen=True)
class ContextRecord:
    node_id: int
    position: tuple
    orientation: float
    owner: int
    sensors: tuple = ()
    neighbors: tuple = ()
    timestamp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "orientation", self.orientation % 360.0)

    @classmethod
    def from_payload(cls, node_id: int, payload: bytes, timestamp: int, neighbors=()) -> "ContextRecord":
        c = ContextPayload.decode(payload)
        return cls(node_id, c.position, c.orientation, c.owner, c.sensors, tuple(neighbors), timestamp)


def _on_segment(p, a, b, eps=1e-9) -> bool:
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if abs(cross) > eps * max(1.0, math.dist(a, b)):
        return False
    return (min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps
            and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps)


def point_in_polygon(p, polygon) -> bool:
    """Even-odd rule; points on an edge or vertex count as inside."""
    n = len(polygon)
    inside = False
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        if _on_segment(p, a, b):
            return True
        if (a[1] > p[1]) != (b[1] > p[1]):
            x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if p[0] < x:
                inside = not inside
    return inside


@dataclass(frozen=True)
class Zone:
    polygon: tuple
    authority: str
    owners: frozenset | None = None  # None matches any owner


def discover_context(context: ContextRecord, zone_map, default: str = DEFAULT_AUTHORITY) -> str:
    """Authority of the first zone, in declaration order, matching position and owner."""
    for zone in zone_map:
        if zone.owners is not None and context.owner not in zone.owners:
            continue
        if point_in_polygon(context.position, zone.polygon):
            return zone.authority
    return default


def bearing(src, dst) -> float:
    """Compass-free bearing in degrees, counterclockwise from +x, in [0, 360)."""
    return math.degrees(math.atan2(dst[1] - src[1], dst[0] - src[0])) % 360.0


def angle_between(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


@dataclass(frozen=True)
class RestrictionRule:
    authority: str
    effects: tuple  # ((peripheral, enable), ...) applied when the predicate holds
    zone: tuple | None = None
    target: tuple | None = None
    half_window: float = 180.0
    owners: frozenset | None = None

    def holds(self, context: ContextRecord) -> bool:
        if self.zone is not None and not point_in_polygon(context.position, self.zone):
            return False
        if self.owners is not None and context.owner not in self.owners:
            return False
        if self.target is not None:
            off = angle_between(context.orientation, bearing(context.position, self.target))
            if off > self.half_window:
                return False
        return True


def evaluate(rule: RestrictionRule, context: ContextRecord) -> list:
    """Effects when the predicate holds; their inverses otherwise."""
    if rule.holds(context):
        return [(p, bool(on)) for p, on in rule.effects]
    return [(p, not on) for p, on in rule.effects]


@dataclass
class Authority:
    name: str
    rules: list = field(default_factory=list)

    def effects(self, context: ContextRecord) -> list:
        merged: dict = {}
        for rule in self.rules:
            for p, on in evaluate(rule, context):
                merged[p] = merged.get(p, True) and on
        return sorted(merged.items())


def restriction_pairs(effects) -> list:
    return [(ConfigKey.RESTRICT, bytes([int(p), int(bool(on))])) for p, on in effects]


def translate(effects, node_id: int, route=None, net: int = DEFAULT_NET) -> Packet:
    """One CONFIG packet carrying every effect as a (peripheral, value) pair."""
    if not effects:
        raise ValueError("no effects to translate")
    route = list(route) if route else [node_id]
    body = encode_config(restriction_pairs(effects))
    return Packet(net, node_id, CONTROLLER, PacketType.CONFIG, nxh=route[0], payload=wrap_route(route, body))
