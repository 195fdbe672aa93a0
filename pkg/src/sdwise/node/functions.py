"""Network functions pre-registered on every node, bound at run time by fnId."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..flow_engine import Decision
from ..wire import decode_shim

GEO_NEXT_HOP = 1

# INVOKE_FUNCTION argument selecting which traffic the geo function serves
GEO_UNICAST = b"U"
GEO_MULTICAST = b"M"


@dataclass
class NodeContext:
    addr: int
    coord: tuple | None
    neighbors: dict = field(default_factory=dict)  # id -> (x, y)
    state: object = None


def geo_next_hop(dest, own, neighbors: dict) -> int | None:
    """Neighbor strictly closer to ``dest`` than ``own``; None at a local minimum."""
    best, best_d = None, math.dist(own, dest)
    for nid in sorted(neighbors):
        d = math.dist(neighbors[nid], dest)
        if d < best_d:
            best, best_d = nid, d
    return best


def geo_handler(packet, ctx: NodeContext, args: bytes = b""):
    dest = decode_shim(packet.payload)
    if dest is None or ctx.coord is None:
        return Decision.DROP, None
    nxh = geo_next_hop(dest, ctx.coord, ctx.neighbors)
    if nxh is None:
        return Decision.ASK, None
    return Decision.FORWARD, nxh


REGISTRY = {GEO_NEXT_HOP: geo_handler}


def is_registered(fn_id: int) -> bool:
    return fn_id in REGISTRY
