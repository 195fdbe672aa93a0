"""Context-report frequency versus restriction activation delay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..packet import HEADER_LEN
from ..simnet import US, seconds
from ..wire import Peripheral
from .attestation import TpmSim
from .context import Authority, RestrictionRule, Zone
from .virtual import ComplianceService


def data_rate(frequency: float, report_size: int) -> float:
    return report_size * frequency


def cost(a: float, b: float, rate: float, delay: float) -> float:
    return a * rate + b * delay


def analytic_delay(frequency: float) -> float:
    """Mean wait for the next report when the condition changes at a uniform phase."""
    return 1.0 / (2.0 * frequency)


def optimal_frequency(a: float, b: float, s: int, f_grid, mean_delay=None):
    """Grid minimizer of a*s*f + b*delay(f).

    ``mean_delay`` maps a frequency to a measured mean delay (callable or
    dict); the uniform-phase model is used when it is omitted.  Returns
    ``(f_star, cost_star, f_analytic, cost_analytic)``; the last two come from
    the closed-form minimizer of the uniform-phase model.
    """
    grid = sorted(float(f) for f in f_grid)
    if not grid:
        raise ValueError("empty frequency grid")
    if any(f <= 0 for f in grid):
        raise ValueError("frequencies must be positive")
    if mean_delay is None:
        delay = analytic_delay
    elif callable(mean_delay):
        delay = mean_delay
    else:
        delay = mean_delay.__getitem__
    best_f, best_c = None, math.inf
    for f in grid:
        c = cost(a, b, data_rate(f, s), delay(f))
        if c < best_c:
            best_f, best_c = f, c
    if a > 0 and b > 0:
        fa = math.sqrt(b / (2 * a * s))
        ca = cost(a, b, data_rate(fa, s), analytic_delay(fa))
    else:
        fa, ca = grid[0], cost(a, b, data_rate(grid[0], s), analytic_delay(grid[0]))
    return best_f, best_c, fa, ca


def toggle_times(frequency: float, events: int, start_s: float, rng) -> list:
    """Condition change instants with gaps drawn from U[2/f + 2, 3/f + 2] seconds."""
    t, out = start_s, []
    for _ in range(events):
        t += rng.uniform(2 / frequency + 2, 3 / frequency + 2)
        out.append(t)
    return out


def match_activations(toggles, desired, applied, reports, node: int, periph: int):
    """Pair each condition change with the CONFIG application that enforces it.

    ``applied`` holds peripheral-log tuples ``(t_us, node, periph, enable,
    authority)``; ``reports`` holds ``(t_us, node)`` context emissions.
    Returns ``(delays_s, latencies_s)`` where the latency is measured from
    the first report after the change.
    """
    hits = [(t, on) for t, n, p, on, auth in applied if n == node and p == periph and auth]
    sent = sorted(t for t, n in reports if n == node)
    delays, latencies = [], []
    j = 0
    for k, (t0, want) in enumerate(zip(toggles, desired)):
        t0 = seconds(t0)
        t1 = seconds(toggles[k + 1]) if k + 1 < len(toggles) else math.inf
        while j < len(hits) and hits[j][0] < t0:
            j += 1
        match = next((t for t, on in hits[j:] if t < t1 and on == want), None)
        if match is None:
            continue
        delays.append((match - t0) / US)
        emit = next((t for t in sent if t >= t0), None)
        if emit is not None and emit <= match:
            latencies.append((match - emit) / US)
    return delays, latencies


@dataclass
class FencingLayout:
    sink: tuple = (5.0, 20.0)
    relay: tuple = (18.0, 20.0)
    outside: tuple = (26.0, 20.0)
    inside: tuple = (32.0, 20.0)
    zone: tuple = ((30.0, 0.0), (50.0, 0.0), (50.0, 40.0), (30.0, 40.0))
    target: tuple = (45.0, 20.0)
    half_window: float = 15.0
    orientation: float = 0.0
    owner: int = 7


@dataclass
class FencingResult:
    frequency: float
    report_size: int
    rate: float
    delays: list = field(default_factory=list)
    latencies: list = field(default_factory=list)
    forwarded: int = 0
    energy_conserved: bool = True
    network: object = field(default=None, repr=False)
    service: object = field(default=None, repr=False)

    @property
    def mean_delay(self) -> float:
        return sum(self.delays) / len(self.delays) if self.delays else math.nan

    @property
    def mean_latency(self) -> float:
        return sum(self.latencies) / len(self.latencies) if self.latencies else math.nan


DRONE, RELAY, SINK = 3, 2, 1
FIRMWARE = bytes(range(256)) * 4


def report_loop(frequency: float, report_size: int | None = None, events: int = 200, seed: int = 0,
                layout: FencingLayout | None = None, beacon_interval_s: float = 10.0, tamper: bool = False,
                log_events: bool = False) -> FencingResult:
    """Fly the drone in and out of the zone and measure restriction activation delays."""
    from ..network import Network, NetworkConfig

    lay = layout or FencingLayout()
    positions = {SINK: lay.sink, RELAY: lay.relay, DRONE: lay.outside}
    net = Network(NetworkConfig(positions, sinks=(SINK,), beacon_interval_s=beacon_interval_s,
                                log_events=log_events), seed)
    ctrl = net.controller
    rule = RestrictionRule("zone-authority", ((Peripheral.CAMERA, True),), zone=lay.zone, target=lay.target,
                           half_window=lay.half_window)
    zones = [Zone(lay.zone, "zone-authority")]
    authorities = {"zone-authority": Authority("zone-authority", [rule]),
                   "default": Authority("default", [RestrictionRule("default", ((Peripheral.CAMERA, False),))])}
    service = ComplianceService(ctrl, zones, authorities, rng=net.rng, metrics=net.metrics)
    key = bytes(net.rng.getrandbits(8) for _ in range(32))
    drone = net.nodes[DRONE]
    drone.tpm = TpmSim(DRONE, key, FIRMWARE)
    if tamper:
        drone.tpm.tamper(net.rng.randrange(len(FIRMWARE)))
    service.register(DRONE, key, TpmSim(DRONE, key, FIRMWARE).firmware_digest)

    where = {"inside": False}
    drone.context_source = lambda now: (lay.inside if where["inside"] else lay.outside, lay.orientation, lay.owner)

    def move(inside):
        def apply(node):
            where["inside"] = inside
            net.medium.move(DRONE, lay.inside if inside else lay.outside)
        return apply

    warmup = 4 * beacon_interval_s
    period = seconds(1.0 / frequency)
    net.call(warmup, DRONE, lambda node: node.set_context_period(period, net.rng.randrange(period)))
    toggles = toggle_times(frequency, events, warmup + 3 / frequency + 5, net.rng)
    desired = []
    for k, t in enumerate(toggles):
        inside = k % 2 == 0
        desired.append(inside)
        net.call(t, DRONE, move(inside))
    net.run_until(toggles[-1] + 3 / frequency + 5)
    net.finish()
    size = report_size if report_size is not None else len(drone.context().encode()) + HEADER_LEN
    delays, latencies = match_activations(toggles, desired, net.metrics.peripheral_log, net.metrics.context_log,
                                          DRONE, int(Peripheral.CAMERA))
    res = FencingResult(frequency, size, data_rate(frequency, size), delays, latencies,
                        forwarded=len(service.forwarded), energy_conserved=net.energy_conserved(),
                        network=net, service=service)
    return res
