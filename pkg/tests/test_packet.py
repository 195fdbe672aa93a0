import pytest
from hypothesis import given, strategies as st

from sdwise.packet import (
    BROADCAST, HEADER_LEN, MAX_PAYLOAD, MalformedPacket, Packet, PacketType, decode, encode, get_field, is_group,
    set_field,
)

packets = st.builds(
    Packet,
    net=st.integers(0, 255), dst=st.integers(0, 0xFFFF), src=st.integers(0, 0xFFFF),
    typ=st.sampled_from(list(PacketType)), ttl=st.integers(0, 255), nxh=st.integers(0, 0xFFFF),
    payload=st.binary(max_size=MAX_PAYLOAD),
)


def test_header_only_packet_is_ten_bytes():
    raw = encode(Packet(1, 0x0002, 0x0001, PacketType.DATA, ttl=100, nxh=0x0002))
    assert len(raw) == 10
    assert raw[0] == 10


def test_oversize_payload_rejected():
    with pytest.raises(MalformedPacket):
        Packet(1, 2, 1, PacketType.DATA, payload=bytes(107))


def test_decode_short_buffer():
    with pytest.raises(MalformedPacket):
        decode(bytes(9))


def test_decode_len_mismatch():
    raw = bytearray(encode(Packet(1, 2, 1, PacketType.DATA, payload=b"x")))
    raw[0] = 12
    with pytest.raises(MalformedPacket):
        decode(bytes(raw))


def test_decode_header_only():
    p = decode(encode(Packet(3, 4, 5, PacketType.ACK)))
    assert p.payload == b""
    assert (p.net, p.dst, p.src, p.typ) == (3, 4, 5, PacketType.ACK)


@given(packets)
def test_roundtrip(p):
    raw = encode(p)
    assert len(raw) == HEADER_LEN + len(p.payload) == raw[0]
    assert decode(raw) == p
    assert encode(decode(raw)) == raw


@given(packets)
def test_header_offsets(p):
    assert get_field(p, 0, 1) == p.length
    assert get_field(p, 1, 1) == p.net
    assert get_field(p, 2, 2) == p.dst
    assert get_field(p, 4, 2) == p.src
    assert get_field(p, 6, 1) == p.typ
    assert get_field(p, 7, 1) == p.ttl
    assert get_field(p, 8, 2) == p.nxh


def test_typ_byte_of_beacon():
    assert get_field(Packet(1, BROADCAST, 1, PacketType.BEACON), 5 + 1, 1) == 1


@given(packets, st.data())
def test_set_then_get(p, data):
    size = data.draw(st.sampled_from((1, 2)))
    offset = data.draw(st.integers(1, p.length - size))
    value = data.draw(st.integers(0, (1 << 8 * size) - 1))
    q = set_field(p, offset, size, value)
    assert get_field(q, offset, size) == value
    assert q.length == p.length


def test_get_field_past_end():
    p = Packet(1, 2, 1, PacketType.DATA, payload=b"abc")
    with pytest.raises(IndexError):
        get_field(p, p.length - 1, 2)


def test_len_byte_not_writable():
    with pytest.raises(IndexError):
        set_field(Packet(1, 2, 1, PacketType.DATA), 0, 1, 10)


def test_type_registry_values_are_stable():
    assert [t.value for t in PacketType] == list(range(16))
    assert PacketType.ATTEST_RESPONSE == 15


def test_group_range():
    assert is_group(0xF001)
    assert not is_group(0x0001)
    assert not is_group(BROADCAST)
