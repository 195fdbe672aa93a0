"""Payload layouts carried inside SD-WISE packets.

All multi-byte fields are big-endian.  Coordinates travel as unsigned
fixed-point decimeters, two bytes per axis.

BEACON          sink(2) round(2) battery(1) distance(1)
REPORT          battery(1) count(1) count x [id(2) rssi(1, dBm + 200)]
RULE_REQUEST    header of the packet that missed (10)
GEO_REQUEST     target(2) origin(2)
GROUP_JOIN/LEAVE group(2)
CONTEXT_REPORT  posX(2) posY(2) orientation(2, tenths of a degree) owner(2)
                count(1) count x [sensor(1) value(2)]
ATTEST_RESPONSE quote(32)

Controller-originated packets (see ``packet.DOWNLINK``) start with a
source route: hops(1) cursor(1) hops x id(2), followed by a body:

RULE_RESPONSE   src(2) dst(2) ttl(2, s) flags(1) pathStart(1)
CONFIG          count(1) count x [key(1) len(1) value]
NF_DEPLOY       fnId(1) count(1) entries (see flow_engine.encode_entry)
GEO_RESPONSE    target(2) origin(2) count(1) count x [id(2) x(2) y(2)]
ATTEST_CHALLENGE nonce(16) reportDigest(32)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .packet import HEADER_LEN, MAX_PAYLOAD

RSSI_OFFSET = 200
COORD_SCALE = 10  # decimeters per meter


class ConfigKey(IntEnum):
    DUTY_PERIOD = 1      # u32 microseconds
    DUTY_FRACTION = 2    # u16 per mille
    TX_LEVEL = 3         # u8
    ACCEPT_ADD = 4       # u16
    ACCEPT_REMOVE = 5    # u16
    STATE_WRITE = 6      # index u8, value u8
    PERIPHERAL = 7       # peripheral u8, enable u8 (user request)
    RESTRICT = 8         # peripheral u8, enable u8 (authority directive)
    COORDS = 9           # [id(2) x(2) y(2)]..., first record is the node itself
    INSTALL_ENTRY = 10   # encoded flow entry
    CONTEXT_PERIOD = 11  # u32 microseconds between context reports


class Peripheral(IntEnum):
    CAMERA = 1
    GPS = 2
    MICROPHONE = 3
    ACCELEROMETER = 4


PERIPHERAL_NAMES = {p.name.lower(): p for p in Peripheral}

RULE_FRONT = 0x01
RULE_DROP = 0x02


def to_dm(value: float) -> int:
    dm = int(round(value * COORD_SCALE))
    if not 0 <= dm <= 0xFFFF:
        raise ValueError(f"coordinate {value} m outside the encodable range")
    return dm


def from_dm(value: int) -> float:
    return value / COORD_SCALE


def quantize(pos) -> tuple:
    return (from_dm(to_dm(pos[0])), from_dm(to_dm(pos[1])))


# beacon

@dataclass(frozen=True)
class Beacon:
    sink: int
    round: int
    battery: int
    distance: int

    def encode(self) -> bytes:
        return struct.pack(">HHBB", self.sink, self.round & 0xFFFF, self.battery, min(self.distance, 255))

    @classmethod
    def decode(cls, buf: bytes) -> "Beacon":
        return cls(*struct.unpack_from(">HHBB", buf))


# neighbor report

def encode_report(battery: int, neighbors) -> bytes:
    """``neighbors`` is a list of (id, rssi_dbm); strongest kept when over MTU."""
    room = (MAX_PAYLOAD - 2) // 3
    chosen = sorted(neighbors, key=lambda n: (-n[1], n[0]))[:room]
    chosen.sort(key=lambda n: n[0])
    out = bytearray([battery, len(chosen)])
    for nid, level in chosen:
        out += struct.pack(">HB", nid, max(0, min(255, int(round(level)) + RSSI_OFFSET)))
    return bytes(out)


def decode_report(buf: bytes) -> tuple[int, list]:
    battery, count = buf[0], buf[1]
    if len(buf) < 2 + 3 * count:
        raise ValueError("truncated report")
    records = []
    for i in range(count):
        nid, level = struct.unpack_from(">HB", buf, 2 + 3 * i)
        records.append((nid, level - RSSI_OFFSET))
    return battery, records


# source route envelope

def wrap_route(route, body: bytes, cursor: int = 0) -> bytes:
    return bytes([len(route), cursor]) + b"".join(struct.pack(">H", r) for r in route) + body


def unwrap_route(payload: bytes) -> tuple[list, int, bytes]:
    n, cursor = payload[0], payload[1]
    route = [struct.unpack_from(">H", payload, 2 + 2 * i)[0] for i in range(n)]
    return route, cursor, payload[2 + 2 * n:]


def advance_route(payload: bytes) -> bytes:
    return payload[:1] + bytes([payload[1] + 1]) + payload[2:]


def route_capacity(body_len: int) -> int:
    return (MAX_PAYLOAD - 2 - body_len) // 2


# rule response

@dataclass(frozen=True)
class RuleResponse:
    src: int
    dst: int
    ttl: int
    flags: int
    path_start: int

    def encode(self) -> bytes:
        return struct.pack(">HHHBB", self.src, self.dst, self.ttl, self.flags, self.path_start)

    @classmethod
    def decode(cls, buf: bytes) -> "RuleResponse":
        return cls(*struct.unpack_from(">HHHBB", buf))


# config

def encode_config(pairs) -> bytes:
    out = bytearray([len(pairs)])
    for key, value in pairs:
        out += bytes([int(key), len(value)]) + value
    return bytes(out)


def decode_config(buf: bytes) -> list:
    count, offset, pairs = buf[0], 1, []
    for _ in range(count):
        key, n = buf[offset], buf[offset + 1]
        pairs.append((key, bytes(buf[offset + 2:offset + 2 + n])))
        offset += 2 + n
    return pairs


def encode_coords(records) -> bytes:
    return b"".join(struct.pack(">HHH", nid, to_dm(x), to_dm(y)) for nid, (x, y) in records)


def decode_coords(buf: bytes) -> list:
    out = []
    for i in range(len(buf) // 6):
        nid, x, y = struct.unpack_from(">HHH", buf, 6 * i)
        out.append((nid, (from_dm(x), from_dm(y))))
    return out


# geographic routing

def encode_shim(pos) -> bytes:
    return struct.pack(">HH", to_dm(pos[0]), to_dm(pos[1]))


def decode_shim(payload: bytes) -> tuple | None:
    if len(payload) < 4:
        return None
    x, y = struct.unpack_from(">HH", payload)
    return (from_dm(x), from_dm(y))


def encode_geo_request(target: int, origin: int = 0) -> bytes:
    return struct.pack(">HH", target, origin)


def decode_geo_request(buf: bytes) -> tuple[int, int]:
    return struct.unpack_from(">HH", buf)


def encode_geo_response(target: int, origin: int, records) -> bytes:
    return struct.pack(">HHB", target, origin, len(records)) + encode_coords(records)


def decode_geo_response(buf: bytes) -> tuple[int, int, list]:
    target, origin, count = struct.unpack_from(">HHB", buf)
    return target, origin, decode_coords(buf[5:5 + 6 * count])


def encode_group(group: int) -> bytes:
    return struct.pack(">H", group)


# context

@dataclass(frozen=True)
class ContextPayload:
    position: tuple
    orientation: float
    owner: int
    sensors: tuple = ()

    def encode(self) -> bytes:
        tenths = int(round((self.orientation % 360.0) * 10)) % 3600
        out = bytearray(struct.pack(">HHHHB", to_dm(self.position[0]), to_dm(self.position[1]),
                                    tenths, self.owner, len(self.sensors)))
        for sid, value in self.sensors:
            out += struct.pack(">BH", sid, value)
        return bytes(out)

    @classmethod
    def decode(cls, buf: bytes) -> "ContextPayload":
        x, y, tenths, owner, count = struct.unpack_from(">HHHHB", buf)
        sensors = tuple(struct.unpack_from(">BH", buf, 9 + 3 * i) for i in range(count))
        return cls((from_dm(x), from_dm(y)), tenths / 10.0, owner, sensors)


def header_of(raw: bytes) -> bytes:
    return bytes(raw[:HEADER_LEN])
