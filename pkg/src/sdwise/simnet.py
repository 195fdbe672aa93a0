"""Discrete-event kernel and broadcast radio medium.

Simulated time is an integer count of microseconds, so runs are
reproducible bit for bit on any platform.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum

from .energy import EnergyLedger, EnergyModel
from .packet import Packet

US = 1_000_000


def seconds(t: float) -> int:
    return int(round(t * US))


class SchedulerError(RuntimeError):
    pass


class EventKind(str, Enum):
    RADIO = "radio-delivery"
    TIMER = "timer"
    CONFIG = "config"
    LINK = "link"


@dataclass(order=True)
class Event:
    time: int
    seq: int
    target: object = field(compare=False)
    kind: EventKind = field(compare=False)
    payload: object = field(compare=False, default=None)


class EventLog:
    """Append-only record stream: ``time seq kind node bytes energy_pj [detail]``."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.lines: list[str] = []
        self.energy_total_pj = 0

    def record(self, time, seq, kind, node, nbytes=0, energy_pj=0, detail=""):
        self.energy_total_pj += energy_pj
        if self.enabled:
            line = f"{time} {seq} {kind} {node} {nbytes} {energy_pj}"
            self.lines.append(f"{line} {detail}" if detail else line)

    def text(self) -> str:
        return "\n".join(self.lines) + ("\n" if self.lines else "")


class Kernel:
    def __init__(self, log: EventLog | None = None):
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self.current_seq = -1
        self.handlers: dict = {}
        self.log = log if log is not None else EventLog()

    def register(self, target, handler):
        self.handlers[target] = handler

    def schedule(self, event: Event):
        if event.time < self.now:
            raise SchedulerError(f"event at {event.time} us scheduled in the past (now {self.now} us)")
        heapq.heappush(self._queue, (event.time, event.seq, event))

    def at(self, time: int, target, kind: EventKind, payload=None) -> Event:
        event = Event(int(time), self._seq, target, kind, payload)
        self._seq += 1
        self.schedule(event)
        return event

    def after(self, delay: int, target, kind: EventKind, payload=None) -> Event:
        return self.at(self.now + delay, target, kind, payload)

    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> Event:
        time, seq, event = heapq.heappop(self._queue)
        self.now = time
        self.current_seq = seq
        self.handlers[event.target](event)
        return event

    def run(self, until: int | None = None):
        queue = self._queue
        while queue:
            if until is not None and queue[0][0] > until:
                break
            self.step()
        if until is not None:
            self.now = max(self.now, until)


@dataclass(frozen=True)
class RadioModel:
    tx_power_levels: tuple = (-30.0, -25.0, -20.0, -15.0)  # dBm, level 1..L
    pl0: float = 40.0
    d0: float = 1.0
    exponent: float = 2.0
    noise_sigma: float = 0.0
    rx_sensitivity: float = -90.0
    per_byte_airtime_us: int = 32

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        if any(self.rx_sensitivity >= p - self.pl0 for p in self.tx_power_levels):
            raise ValueError("sensitivity must lie below every tx power minus pl0")

    def power(self, level: int) -> float:
        return self.tx_power_levels[level - 1]

    def airtime_us(self, nbytes: int) -> int:
        return nbytes * self.per_byte_airtime_us

    def path_loss(self, dist: float) -> float:
        return self.pl0 + 10.0 * self.exponent * math.log10(dist / self.d0)

    def range_m(self, level: int) -> float:
        """Distance at which the noiseless RSSI meets the sensitivity floor."""
        margin = self.power(level) - self.pl0 - self.rx_sensitivity
        return self.d0 * 10 ** (margin / (10 * self.exponent))

    def distance_from_rssi(self, rssi_dbm: float, tx_power: float) -> float:
        return self.d0 * 10 ** ((tx_power - self.pl0 - rssi_dbm) / (10 * self.exponent))


def rssi(tx_pos, rx_pos, tx_power: float, noise_sample: float = 0.0, model: RadioModel | None = None) -> float:
    model = model or RadioModel()
    dist = math.dist(tx_pos, rx_pos)
    if dist == 0:
        raise ValueError("coincident transmitter and receiver")
    return tx_power - model.path_loss(dist) + noise_sample


@dataclass(frozen=True)
class DutyCycle:
    period_us: int = US
    on_fraction: float = 1.0
    phase_us: int = 0

    def __post_init__(self):
        if not 0 < self.on_fraction <= 1:
            raise ValueError("on fraction must lie in (0, 1]")
        if self.period_us <= 0:
            raise ValueError("period must be positive")

    @property
    def on_us(self) -> int:
        return int(round(self.period_us * self.on_fraction))

    def is_on(self, t: int) -> bool:
        if self.on_fraction >= 1:
            return True
        return (t - self.phase_us) % self.period_us < self.on_us

    def next_on(self, t: int) -> int:
        if self.is_on(t):
            return t
        offset = (t - self.phase_us) % self.period_us
        return t + self.period_us - offset

    def on_time(self, start: int, end: int) -> int:
        """Microseconds spent ON within [start, end)."""
        if self.on_fraction >= 1:
            return end - start

        def cum(t):
            k, r = divmod(t - self.phase_us, self.period_us)
            return k * self.on_us + min(r, self.on_us)
        return cum(end) - cum(start)


class Medium:
    """Shared broadcast channel; the only place energy for radio activity is charged."""

    def __init__(self, kernel: Kernel, radio: RadioModel, energy: EnergyModel, rng=None):
        self.kernel = kernel
        self.radio = radio
        self.energy = energy
        self.rng = rng
        self.positions: dict = {}
        self.duty: dict = {}
        self.ledgers: dict = {}
        self._order: list = []
        self._loss: dict = {}
        self.air_bytes = 0
        self.transmissions = 0
        self.tx_listeners: list = []

    def attach(self, addr: int, pos, duty: DutyCycle | None = None) -> EnergyLedger:
        self.positions[addr] = (float(pos[0]), float(pos[1]))
        self.duty[addr] = duty or DutyCycle()
        ledger = EnergyLedger(self.energy)
        self.ledgers[addr] = ledger
        self._order = sorted(self.positions)
        self._loss.clear()
        return ledger

    def move(self, addr: int, pos):
        self.positions[addr] = (float(pos[0]), float(pos[1]))
        self._loss = {k: v for k, v in self._loss.items() if addr not in k}

    def path_loss(self, a: int, b: int) -> float:
        key = (a, b) if a < b else (b, a)
        loss = self._loss.get(key)
        if loss is None:
            dist = math.dist(self.positions[a], self.positions[b])
            if dist == 0:
                raise ValueError(f"nodes {a} and {b} are coincident")
            loss = self._loss[key] = self.radio.path_loss(dist)
        return loss

    def charge(self, addr: int, category: str, amount_pj: int, nbytes: int = 0, detail: str = ""):
        self.ledgers[addr].charge(category, amount_pj)
        k = self.kernel
        k.log.record(k.now, k.current_seq, category, addr, nbytes, amount_pj, detail)

    def broadcast(self, sender: int, packet: Packet, level: int, at: int | None = None) -> list:
        """Put ``packet`` on air; returns the ids scheduled to receive it."""
        k = self.kernel
        at = k.now if at is None else at
        if not self.duty[sender].is_on(at):
            raise SchedulerError(f"node {sender} transmits while its radio is off")
        raw = packet.encode()
        nbytes = len(raw)
        airtime = self.radio.airtime_us(nbytes)
        arrive = at + airtime
        power = self.radio.power(level)
        floor = self.radio.rx_sensitivity
        sigma = self.radio.noise_sigma
        self.air_bytes += nbytes
        self.transmissions += 1
        self.charge(sender, "tx", self.energy.tx_pj(nbytes, level), nbytes,
                    f"typ={packet.typ} {raw.hex()}")
        for listener in self.tx_listeners:
            listener(sender, packet, nbytes)
        delivered = []
        for addr in self._order:
            if addr == sender:
                continue
            level_dbm = power - self.path_loss(sender, addr)
            if sigma > 0:
                level_dbm += self.rng.normal(0.0, sigma)
            if level_dbm < floor or not self.duty[addr].is_on(arrive):
                continue
            k.at(arrive, addr, EventKind.RADIO, (raw, level_dbm))
            delivered.append(addr)
        return delivered

    def settle(self, addr: int, start: int, end: int, duty: DutyCycle | None = None):
        """Charge idle/sleep draw for [start, end) under ``duty``."""
        if end <= start:
            return
        duty = duty or self.duty[addr]
        on = duty.on_time(start, end)
        if on:
            self.charge(addr, "idle", self.energy.idle_pj(on), 0, f"{on}us")
        off = end - start - on
        if off:
            self.charge(addr, "sleep", self.energy.sleep_pj(off), 0, f"{off}us")
