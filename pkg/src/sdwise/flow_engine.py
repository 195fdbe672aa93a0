"""Stateful match-action core: WISE State, Accepted IDs and the WISE Flow Table."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .packet import BROADCAST, Packet, set_field

log = logging.getLogger(__name__)

STATE_SIZE = 16
MAX_WINDOWS = 3
MAX_ACTIONS = 2
TABLE_CAPACITY = 32
MAX_ACCEPTED = 10


class FlowError(ValueError):
    pass


class Loc(IntEnum):
    CONST = 0
    PACKET = 1
    STATE = 2


class Op(IntEnum):
    EQ = 0
    NEQ = 1
    GT = 2
    LT = 3
    GE = 4
    LE = 5


_COMPARE = {
    Op.EQ: lambda a, b: a == b,
    Op.NEQ: lambda a, b: a != b,
    Op.GT: lambda a, b: a > b,
    Op.LT: lambda a, b: a < b,
    Op.GE: lambda a, b: a >= b,
    Op.LE: lambda a, b: a <= b,
}


class ActionKind(IntEnum):
    FORWARD_UNICAST = 0
    FORWARD_BROADCAST = 1
    DROP = 2
    ASK_CONTROLLER = 3
    SET_STATE = 4
    SET_FIELD = 5
    INVOKE_FUNCTION = 6


FORWARDING = frozenset({
    ActionKind.FORWARD_UNICAST, ActionKind.FORWARD_BROADCAST, ActionKind.DROP,
    ActionKind.ASK_CONTROLLER, ActionKind.INVOKE_FUNCTION,
})


class WiseState:
    """Fixed bank of one-byte registers readable by windows, writable by actions."""

    def __init__(self, size: int = STATE_SIZE):
        self.regs = [0] * size

    def __len__(self):
        return len(self.regs)

    def __getitem__(self, i):
        return self.regs[i]

    def __setitem__(self, i, value):
        if not 0 <= value <= 255:
            raise FlowError(f"state value {value} outside [0, 255]")
        self.regs[i] = value

    def copy(self) -> "WiseState":
        other = WiseState(len(self.regs))
        other.regs = list(self.regs)
        return other


class AcceptedIds:
    def __init__(self, own: int, capacity: int = MAX_ACCEPTED):
        self.capacity = capacity
        self.ids = [own, BROADCAST]

    def add(self, addr: int) -> bool:
        if addr in self.ids:
            return True
        if len(self.ids) >= self.capacity:
            return False
        self.ids.append(addr)
        return True

    def remove(self, addr: int) -> bool:
        # own address and broadcast are pinned
        if addr in self.ids[:2] or addr not in self.ids:
            return False
        self.ids.remove(addr)
        return True

    def __contains__(self, addr):
        return addr in self.ids


def accepts(accepted: AcceptedIds, nxh: int) -> bool:
    return nxh in accepted


@dataclass(frozen=True)
class Window:
    lhs_loc: Loc
    lhs_val: int
    op: Op
    rhs_loc: Loc
    rhs_val: int
    size: int = 1

    def __post_init__(self):
        if self.size not in (1, 2):
            raise FlowError(f"window size must be 1 or 2, got {self.size}")
        for loc, val in ((self.lhs_loc, self.lhs_val), (self.rhs_loc, self.rhs_val)):
            if loc == Loc.STATE and not 0 <= val < STATE_SIZE:
                raise FlowError(f"state register {val} out of range")
            if not 0 <= val <= 0xFFFF:
                raise FlowError(f"operand {val} does not fit in 2 bytes")


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    args: tuple = ()

    @classmethod
    def forward(cls, nxh: int) -> "Action":
        return cls(ActionKind.FORWARD_UNICAST, (nxh,))

    @classmethod
    def broadcast(cls) -> "Action":
        return cls(ActionKind.FORWARD_BROADCAST)

    @classmethod
    def drop(cls) -> "Action":
        return cls(ActionKind.DROP)

    @classmethod
    def ask(cls) -> "Action":
        return cls(ActionKind.ASK_CONTROLLER)

    @classmethod
    def set_state(cls, index: int, value: int) -> "Action":
        return cls(ActionKind.SET_STATE, (index, value))

    @classmethod
    def set_field(cls, offset: int, size: int, value: int) -> "Action":
        return cls(ActionKind.SET_FIELD, (offset, size, value))

    @classmethod
    def invoke(cls, fn_id: int, args: bytes = b"") -> "Action":
        return cls(ActionKind.INVOKE_FUNCTION, (fn_id, bytes(args)))


@dataclass(eq=False)
class FlowEntry:
    windows: tuple
    actions: tuple
    ttl: float | None = None  # seconds; None = permanent
    install_us: int = 0
    hits: int = 0
    toward_sink: bool = False

    def __post_init__(self):
        self.windows = tuple(self.windows)
        self.actions = tuple(self.actions)
        validate_entry(self)

    def expires_us(self) -> float:
        if self.ttl is None:
            return float("inf")
        return self.install_us + round(self.ttl * 1_000_000)

    def expired(self, now_us: int) -> bool:
        return self.expires_us() < now_us

    def same_rule(self, other: "FlowEntry") -> bool:
        return self.windows == other.windows and self.actions == other.actions


def validate_entry(entry: FlowEntry):
    if len(entry.windows) > MAX_WINDOWS:
        raise FlowError(f"{len(entry.windows)} windows, at most {MAX_WINDOWS} allowed")
    if not entry.actions or len(entry.actions) > MAX_ACTIONS:
        raise FlowError(f"an entry needs 1..{MAX_ACTIONS} actions, got {len(entry.actions)}")
    if sum(a.kind in FORWARDING for a in entry.actions) > 1:
        raise FlowError("at most one forwarding-class action per entry")
    for a in entry.actions:
        if a.kind == ActionKind.SET_STATE:
            index, value = a.args
            if not 0 <= index < STATE_SIZE:
                raise FlowError(f"SET_STATE index {index} out of range")
            if not 0 <= value <= 255:
                raise FlowError(f"SET_STATE value {value} out of range")
        elif a.kind == ActionKind.SET_FIELD:
            offset, size, value = a.args
            if offset < 1 or size not in (1, 2) or not 0 <= value < (1 << 8 * size):
                raise FlowError(f"bad SET_FIELD arguments {a.args}")
        elif a.kind == ActionKind.FORWARD_UNICAST:
            if not 0 <= a.args[0] <= 0xFFFF:
                raise FlowError(f"bad next hop {a.args[0]}")
    if entry.ttl is not None and entry.ttl <= 0:
        raise FlowError("ttl must be positive")


def _operand(loc, val, size, raw, state):
    if loc == Loc.CONST:
        return val
    if loc == Loc.STATE:
        return state[val]
    if val + size > len(raw):
        return None
    if size == 1:
        return raw[val]
    return (raw[val] << 8) | raw[val + 1]


def eval_window(window: Window, packet: Packet | bytes, state: WiseState) -> bool:
    raw = packet.encode() if isinstance(packet, Packet) else packet
    lsize = 1 if window.lhs_loc == Loc.STATE else window.size
    rsize = 1 if window.rhs_loc == Loc.STATE else window.size
    a = _operand(window.lhs_loc, window.lhs_val, lsize, raw, state)
    b = _operand(window.rhs_loc, window.rhs_val, rsize, raw, state)
    if a is None or b is None:
        log.debug("window %s reads past a %d-byte packet", window, len(raw))
        return False
    return _COMPARE[window.op](a, b)


def matches(entry: FlowEntry, packet: Packet | bytes, state: WiseState) -> bool:
    raw = packet.encode() if isinstance(packet, Packet) else packet
    return all(eval_window(w, raw, state) for w in entry.windows)


class FlowTable:
    def __init__(self, capacity: int = TABLE_CAPACITY):
        self.capacity = capacity
        self.entry0: FlowEntry | None = None
        self.entries: list[FlowEntry] = []

    def __len__(self):
        return len(self.entries)

    def set_entry0(self, entry: FlowEntry):
        entry.toward_sink = True
        entry.ttl = None
        self.entry0 = entry

    def resident(self):
        return list(self.entries)


def install(table: FlowTable, entry: FlowEntry, now_us: int, front: bool = False) -> FlowEntry | None:
    """Install ``entry`` stamped at ``now_us``; returns the evicted entry, if any.

    Controller overrides go in with ``front=True`` so they shadow older rules.
    """
    if entry.toward_sink or entry is table.entry0:
        raise FlowError("the toward-sink entry is owned by topology discovery")
    validate_entry(entry)
    entry.install_us = now_us
    entry.hits = 0
    evicted = None
    expire(table, now_us)
    if len(table.entries) >= table.capacity:
        evicted = min(table.entries, key=lambda e: (e.expires_us(), e.install_us))
        table.entries.remove(evicted)
    if front:
        table.entries.insert(0, entry)
    else:
        table.entries.append(entry)
    return evicted


def expire(table: FlowTable, now_us: int) -> int:
    keep = [e for e in table.entries if not e.expired(now_us)]
    purged = len(table.entries) - len(keep)
    table.entries = keep
    return purged


def lookup(table: FlowTable, packet: Packet | bytes, state: WiseState, now_us: int) -> FlowEntry | None:
    raw = packet.encode() if isinstance(packet, Packet) else packet
    for entry in table.entries:
        if entry.expired(now_us):
            continue
        if matches(entry, raw, state):
            entry.hits += 1
            return entry
    if table.entry0 is not None and matches(table.entry0, raw, state):
        table.entry0.hits += 1
        return table.entry0
    return None


class Decision(IntEnum):
    FORWARD = 0
    BROADCAST = 1
    DROP = 2
    ASK = 3
    FUNCTION = 4


@dataclass
class Outcome:
    decision: Decision
    packet: Packet
    nxh: int | None = None
    fn_id: int | None = None
    fn_args: bytes = b""
    state_writes: list = field(default_factory=list)


def execute(actions, packet: Packet, state: WiseState) -> Outcome:
    """Run ``actions`` in order; state writes land before the forwarding decision."""
    decision, nxh, fn_id, fn_args = Decision.DROP, None, None, b""
    writes = []
    for action in actions:
        kind = action.kind
        if kind == ActionKind.SET_STATE:
            index, value = action.args
            state[index] = value
            writes.append((index, value))
        elif kind == ActionKind.SET_FIELD:
            packet = set_field(packet, *action.args)
        elif kind == ActionKind.FORWARD_UNICAST:
            decision, nxh = Decision.FORWARD, action.args[0]
        elif kind == ActionKind.FORWARD_BROADCAST:
            decision, nxh = Decision.BROADCAST, BROADCAST
        elif kind == ActionKind.DROP:
            decision = Decision.DROP
        elif kind == ActionKind.ASK_CONTROLLER:
            decision = Decision.ASK
        elif kind == ActionKind.INVOKE_FUNCTION:
            decision = Decision.FUNCTION
            fn_id, fn_args = action.args
    if nxh is not None:
        packet = packet.with_(nxh=nxh)
    return Outcome(decision, packet, nxh, fn_id, fn_args, writes)


# Wire encoding of entries, used by NF_DEPLOY and CONFIG payloads.
#   window : lhsLoc(1) lhsVal(2) op(1, bit 7 = two-byte size) rhsLoc(1) rhsVal(2)
#   action : kind(1) argLen(1) args
#   entry  : ttl(2, seconds, 0 = permanent) nWindows(1) windows nActions(1) actions

_WINDOW = struct.Struct(">BHBBH")


def encode_window(w: Window) -> bytes:
    op = int(w.op) | (0x80 if w.size == 2 else 0)
    return _WINDOW.pack(int(w.lhs_loc), w.lhs_val, op, int(w.rhs_loc), w.rhs_val)


def decode_window(buf: bytes, offset: int = 0) -> Window:
    lhs_loc, lhs_val, op, rhs_loc, rhs_val = _WINDOW.unpack_from(buf, offset)
    size = 2 if op & 0x80 else 1
    return Window(Loc(lhs_loc), lhs_val, Op(op & 0x7F), Loc(rhs_loc), rhs_val, size)


def encode_action(a: Action) -> bytes:
    if a.kind == ActionKind.FORWARD_UNICAST:
        args = struct.pack(">H", a.args[0])
    elif a.kind == ActionKind.SET_STATE:
        args = bytes(a.args)
    elif a.kind == ActionKind.SET_FIELD:
        args = struct.pack(">BBH", *a.args)
    elif a.kind == ActionKind.INVOKE_FUNCTION:
        args = bytes([a.args[0]]) + a.args[1]
    else:
        args = b""
    return bytes([int(a.kind), len(args)]) + args


def decode_action(buf: bytes, offset: int = 0) -> tuple[Action, int]:
    kind, n = ActionKind(buf[offset]), buf[offset + 1]
    args = bytes(buf[offset + 2:offset + 2 + n])
    if kind == ActionKind.FORWARD_UNICAST:
        action = Action(kind, struct.unpack(">H", args))
    elif kind == ActionKind.SET_STATE:
        action = Action(kind, (args[0], args[1]))
    elif kind == ActionKind.SET_FIELD:
        action = Action(kind, struct.unpack(">BBH", args))
    elif kind == ActionKind.INVOKE_FUNCTION:
        action = Action(kind, (args[0], args[1:]))
    else:
        action = Action(kind)
    return action, offset + 2 + n


def encode_entry(entry: FlowEntry) -> bytes:
    ttl = 0 if entry.ttl is None else int(round(entry.ttl))
    out = bytearray(struct.pack(">HB", ttl, len(entry.windows)))
    for w in entry.windows:
        out += encode_window(w)
    out.append(len(entry.actions))
    for a in entry.actions:
        out += encode_action(a)
    return bytes(out)


def decode_entry(buf: bytes, offset: int = 0) -> tuple[FlowEntry, int]:
    ttl, nw = struct.unpack_from(">HB", buf, offset)
    offset += 3
    windows = []
    for _ in range(nw):
        windows.append(decode_window(buf, offset))
        offset += _WINDOW.size
    na = buf[offset]
    offset += 1
    actions = []
    for _ in range(na):
        a, offset = decode_action(buf, offset)
        actions.append(a)
    return FlowEntry(tuple(windows), tuple(actions), ttl or None), offset
