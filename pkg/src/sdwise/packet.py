"""Wire format of SD-WISE packets.

Header layout (big-endian, 10 bytes)::

    offset  size  field
    0       1     len    total packet length, header included
    1       1     net    network id
    2       2     dst    destination address
    4       2     src    source address
    6       1     typ    packet type
    7       1     ttl    remaining hops
    8       2     nxh    next-hop ID (0xFFFF = accepted by everyone)

Flow-table windows address these offsets directly, so they are fixed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import IntEnum

HEADER_LEN = 10
MAX_PAYLOAD = 106
MTU = HEADER_LEN + MAX_PAYLOAD
DEFAULT_TTL = 100
DEFAULT_NET = 1

BROADCAST = 0xFFFF
CONTROLLER = 0x0000
GROUP_BASE = 0xF000  # group addresses live in [GROUP_BASE, BROADCAST)

LEN_OFFSET = 0
NET_OFFSET = 1
DST_OFFSET = 2
SRC_OFFSET = 4
TYP_OFFSET = 6
TTL_OFFSET = 7
NXH_OFFSET = 8

_HEADER = struct.Struct(">BBHHBBH")


class MalformedPacket(ValueError):
    pass


class PacketType(IntEnum):
    DATA = 0
    BEACON = 1
    REPORT = 2
    RULE_REQUEST = 3
    RULE_RESPONSE = 4
    CONFIG = 5
    NF_DEPLOY = 6
    GEO_REQUEST = 7
    GEO_RESPONSE = 8
    GROUP_JOIN = 9
    GROUP_LEAVE = 10
    ACK = 11
    CONTEXT_REPORT = 12
    RESTRICTION = 13
    ATTEST_CHALLENGE = 14
    ATTEST_RESPONSE = 15


# Packets a node relays upward through its toward-sink entry.
CONTROLLER_BOUND = frozenset({
    PacketType.REPORT, PacketType.RULE_REQUEST, PacketType.CONTEXT_REPORT,
    PacketType.ATTEST_RESPONSE, PacketType.GEO_REQUEST,
    PacketType.GROUP_JOIN, PacketType.GROUP_LEAVE,
})

# Packets the controller emits; they carry a source route.
DOWNLINK = frozenset({
    PacketType.RULE_RESPONSE, PacketType.CONFIG, PacketType.NF_DEPLOY,
    PacketType.GEO_RESPONSE, PacketType.RESTRICTION, PacketType.ATTEST_CHALLENGE,
})

# Traffic attributed to forwarding strategies and compliance ("signaling").
SIGNALING = frozenset({
    PacketType.RULE_REQUEST, PacketType.RULE_RESPONSE, PacketType.CONFIG,
    PacketType.NF_DEPLOY, PacketType.GEO_REQUEST, PacketType.GEO_RESPONSE,
    PacketType.GROUP_JOIN, PacketType.GROUP_LEAVE, PacketType.CONTEXT_REPORT,
    PacketType.RESTRICTION, PacketType.ATTEST_CHALLENGE, PacketType.ATTEST_RESPONSE,
})


def is_group(addr: int) -> bool:
    return GROUP_BASE <= addr < BROADCAST


@dataclass(frozen=True)
class Packet:
    net: int
    dst: int
    src: int
    typ: int
    ttl: int = DEFAULT_TTL
    nxh: int = BROADCAST
    payload: bytes = b""

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise MalformedPacket(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")

    @property
    def length(self) -> int:
        return HEADER_LEN + len(self.payload)

    def encode(self) -> bytes:
        return encode(self)

    def with_(self, **changes) -> "Packet":
        return replace(self, **changes)


def encode(packet: Packet) -> bytes:
    if len(packet.payload) > MAX_PAYLOAD:
        raise MalformedPacket(f"payload of {len(packet.payload)} bytes exceeds {MAX_PAYLOAD}")
    try:
        header = _HEADER.pack(packet.length, packet.net, packet.dst, packet.src,
                              packet.typ, packet.ttl, packet.nxh)
    except struct.error as exc:
        raise MalformedPacket(str(exc)) from None
    return header + bytes(packet.payload)


def decode(buf: bytes) -> Packet:
    if len(buf) < HEADER_LEN:
        raise MalformedPacket(f"{len(buf)}-byte buffer is shorter than the header")
    length, net, dst, src, typ, ttl, nxh = _HEADER.unpack_from(buf)
    if length != len(buf):
        raise MalformedPacket(f"len field {length} does not match buffer of {len(buf)} bytes")
    if length > MTU:
        raise MalformedPacket(f"len {length} exceeds MTU {MTU}")
    return Packet(net, dst, src, typ, ttl, nxh, bytes(buf[HEADER_LEN:]))


def get_field(packet: Packet | bytes, offset: int, size: int) -> int:
    raw = packet.encode() if isinstance(packet, Packet) else packet
    if size not in (1, 2):
        raise ValueError(f"field size must be 1 or 2, got {size}")
    if offset < 0 or offset + size > len(raw):
        raise IndexError(f"field [{offset}, {offset + size}) outside {len(raw)}-byte packet")
    if size == 1:
        return raw[offset]
    return (raw[offset] << 8) | raw[offset + 1]


def set_field(packet: Packet, offset: int, size: int, value: int) -> Packet:
    raw = bytearray(packet.encode())
    if size not in (1, 2):
        raise ValueError(f"field size must be 1 or 2, got {size}")
    if offset < 0 or offset + size > len(raw):
        raise IndexError(f"field [{offset}, {offset + size}) outside {len(raw)}-byte packet")
    if offset == LEN_OFFSET:
        raise IndexError("the len byte is not writable")
    if not 0 <= value < (1 << (8 * size)):
        raise ValueError(f"value {value} does not fit in {size} byte(s)")
    raw[offset:offset + size] = value.to_bytes(size, "big")
    return decode(bytes(raw))


def u16(value: int) -> bytes:
    return struct.pack(">H", value)


def read_u16(buf: bytes, offset: int) -> int:
    return (buf[offset] << 8) | buf[offset + 1]
