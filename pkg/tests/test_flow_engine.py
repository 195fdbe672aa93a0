import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import DECISION_NAMES, random_triple, ref_execute, ref_match
from sdwise.flow_engine import (
    AcceptedIds, Action, Decision, FlowEntry, FlowError, FlowTable, Loc, Op, TABLE_CAPACITY, Window, WiseState,
    accepts, decode_entry, encode_entry, eval_window, execute, expire, install, lookup,
)
from sdwise.packet import BROADCAST, Packet, PacketType


def data(dst=2, src=1, payload=b""):
    return Packet(1, dst, src, PacketType.DATA, nxh=dst, payload=payload)


def match_dst(addr):
    return Window(Loc.PACKET, 2, Op.EQ, Loc.CONST, addr, 2)


def test_typ_window_on_data():
    assert eval_window(Window(Loc.PACKET, 6, Op.EQ, Loc.CONST, 0), data(), WiseState())


def test_state_window():
    s = WiseState()
    s[0] = 5
    assert eval_window(Window(Loc.STATE, 0, Op.GT, Loc.CONST, 3), data(), s)


def test_window_past_end_is_false():
    assert not eval_window(Window(Loc.PACKET, 200, Op.EQ, Loc.CONST, 1), data(), WiseState())


def test_state_register_range_checked():
    with pytest.raises(FlowError):
        Window(Loc.STATE, 16, Op.EQ, Loc.CONST, 0)


def test_empty_table_misses():
    assert lookup(FlowTable(), data(), WiseState(), 0) is None


def test_first_match_wins():
    t = FlowTable()
    a = FlowEntry((match_dst(2),), (Action.forward(3),), ttl=60)
    b = FlowEntry((match_dst(2),), (Action.forward(4),), ttl=60)
    install(t, a, 0)
    install(t, b, 0)
    assert lookup(t, data(), WiseState(), 1) is a


def test_hard_expiry():
    t = FlowTable()
    install(t, FlowEntry((), (Action.drop(),), ttl=10), 0)
    assert lookup(t, data(), WiseState(), 10_000_000) is not None
    assert lookup(t, data(), WiseState(), 11_000_000) is None


def test_entry0_considered_last():
    t = FlowTable()
    t.set_entry0(FlowEntry((), (Action.forward(9),)))
    e = FlowEntry((match_dst(2),), (Action.forward(3),), ttl=5)
    install(t, e, 0)
    assert lookup(t, data(), WiseState(), 0) is e
    assert lookup(t, data(dst=7), WiseState(), 0) is t.entry0


def test_set_state_then_forward():
    s = WiseState()
    out = execute((Action.set_state(0, 7), Action.forward(0x0003)), data(), s)
    assert s[0] == 7
    assert out.decision == Decision.FORWARD
    assert out.packet.nxh == 0x0003


def test_drop_leaves_state():
    s = WiseState()
    out = execute((Action.drop(),), data(), s)
    assert out.decision == Decision.DROP
    assert s.regs == [0] * 16


def test_invoke_function_dispatch():
    out = execute((Action.invoke(1, b"U"),), data(), WiseState())
    assert out.decision == Decision.FUNCTION
    assert (out.fn_id, out.fn_args) == (1, b"U")


def test_bad_state_index_rejected_at_install_time():
    with pytest.raises(FlowError):
        FlowEntry((), (Action.set_state(16, 1),))


def test_two_forwarding_actions_rejected():
    with pytest.raises(FlowError):
        FlowEntry((), (Action.drop(), Action.forward(2)))


def test_eviction_of_earliest_expiry():
    t = FlowTable()
    entries = [FlowEntry((match_dst(i),), (Action.drop(),), ttl=100 + i) for i in range(TABLE_CAPACITY)]
    entries[7].ttl = 50
    for e in entries:
        install(t, e, 0)
    evicted = install(t, FlowEntry((match_dst(999),), (Action.drop(),), ttl=100), 0)
    assert evicted is entries[7]
    assert len(t) == TABLE_CAPACITY


def test_expire_counts():
    t = FlowTable()
    assert expire(t, 0) == 0
    install(t, FlowEntry((), (Action.drop(),), ttl=5), 0)
    assert expire(t, 6_000_000) == 1


def test_install_over_entry0_rejected():
    t = FlowTable()
    t.set_entry0(FlowEntry((), (Action.forward(1),)))
    with pytest.raises(FlowError):
        install(t, t.entry0, 0)


def test_accepts():
    ids = AcceptedIds(0x0005)
    assert accepts(ids, BROADCAST)
    assert accepts(ids, 0x0005)
    assert not accepts(ids, 0x0042)


def test_accepted_ids_capacity_and_pins():
    ids = AcceptedIds(1)
    for a in range(100, 120):
        ids.add(a)
    assert len(ids.ids) == 10
    assert not ids.remove(1)
    assert not ids.remove(BROADCAST)


def test_hit_counter_counts_returned_lookups():
    t = FlowTable()
    e = FlowEntry((match_dst(2),), (Action.drop(),), ttl=60)
    install(t, e, 0)
    for k in range(5):
        lookup(t, data(), WiseState(), k)
        lookup(t, data(dst=3), WiseState(), k)
    assert e.hits == 5


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_matches_reference_interpreter(seed):
    entry, packet, state = random_triple(random.Random(seed))
    raw = packet.encode()
    regs = list(state.regs)
    t = FlowTable()
    install(t, entry, 0)
    got = lookup(t, packet, state, 0)
    assert (got is entry) == ref_match(entry.windows, raw, regs)
    # matching never mutates
    assert state.regs == regs
    assert packet.encode() == raw
    out = execute(entry.actions, packet, state)
    decision, ref_raw, ref_regs, fn = ref_execute(entry.actions, raw, regs)
    assert DECISION_NAMES[int(out.decision)] == decision
    assert out.packet.encode() == ref_raw
    assert state.regs == ref_regs
    if fn is not None:
        assert (out.fn_id, out.fn_args) == fn


@given(st.integers(0, 2**32 - 1))
def test_entry_codec_roundtrip(seed):
    entry, _, _ = random_triple(random.Random(seed))
    entry.ttl = None if entry.ttl is None else int(entry.ttl)
    raw = encode_entry(entry)
    back, end = decode_entry(raw + b"tail")
    assert end == len(raw)
    assert back.windows == entry.windows
    assert back.actions == entry.actions
    assert back.ttl == entry.ttl


@given(st.lists(st.tuples(st.integers(1, 120), st.integers(0, 200)), max_size=40), st.integers(0, 400))
def test_expire_leaves_nothing_stale(specs, now_s):
    t = FlowTable()
    for ttl, at in specs:
        install(t, FlowEntry((), (Action.drop(),), ttl=ttl), at * 1_000_000)
    now = now_s * 1_000_000
    expire(t, now)
    assert all(not e.expired(now) for e in t.entries)
