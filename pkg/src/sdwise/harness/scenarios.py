"""The three experiments: testbed chain/multicast, geo100, fencing."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

import numpy as np

from ..compliance.fencing import FencingLayout, cost, optimal_frequency, report_loop
from ..controller import STRATEGIES
from ..controller.paths import hop_distances
from ..network import Network, NetworkConfig
from ..node import GEO_NEXT_HOP
from ..packet import GROUP_BASE
from ..simnet import RadioModel
from ..metrics import efficiency

SCENARIOS = ("testbed", "geo100", "fencing")
MULTICAST_GROUP = GROUP_BASE + 1


@dataclass
class Scenario:
    name: str = "testbed"
    seed: int = 1
    strategy: str = "shortest"
    strategies: tuple = STRATEGIES
    ttl_s: int = 60
    beacon_s: float = 10.0
    payload: int = 10
    packets: int = 500
    spacing_s: float = 15.0
    tx_level: int = 2
    duty_period_s: float = 1.0
    duty_fraction: float = 1.0
    noise_sigma: float = 0.0
    response_ms: float = 1.0
    chain_spacing_m: float = 12.0
    multicast: bool = True
    nodes: int = 100
    area_m: float = 80.0
    flows: int = 50
    flow_packets: int = 20
    frequencies: tuple = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
    events: int = 200
    weight_a: float = 1.0
    weight_b: float = 1.0
    report_size: int | None = None
    fencing: FencingLayout = field(default_factory=FencingLayout)
    log_events: bool = True

    def validate(self):
        if self.name not in SCENARIOS:
            raise InvalidScenario(f"unknown scenario {self.name!r}; expected one of {', '.join(SCENARIOS)}",
                                  ["name"])
        if self.strategy not in STRATEGIES:
            raise InvalidScenario(f"unknown strategy {self.strategy!r}", ["strategy"])
        for s in self.strategies:
            if s not in STRATEGIES:
                raise InvalidScenario(f"unknown strategy {s!r}", ["strategies"])
        checks = {
            "ttl": self.ttl_s > 0, "beacon_interval": self.beacon_s > 0, "payload": 2 <= self.payload <= 100,
            "packets": self.packets >= 0, "spacing": self.spacing_s > 0,
            "tx_level": 1 <= self.tx_level <= len(RadioModel().tx_power_levels),
            "duty_fraction": 0 < self.duty_fraction <= 1, "nodes": self.nodes >= 2, "area": self.area_m > 0,
            "flows": self.flows >= 0, "events": self.events >= 1, "noise_sigma": self.noise_sigma >= 0,
            "frequencies": bool(self.frequencies) and all(f > 0 for f in self.frequencies),
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise InvalidScenario(f"invalid value for {', '.join(bad)}", bad)
        return self


class InvalidScenario(ValueError):
    def __init__(self, message: str, fields=()):
        super().__init__(message)
        self.fields = list(fields)


@dataclass
class RunResult:
    scenario: Scenario
    ledgers: dict = field(default_factory=dict)  # label -> MetricLedger
    logs: list = field(default_factory=list)  # (label, event log text)
    networks: dict = field(default_factory=dict)
    fencing_rows: list = field(default_factory=list)
    optimum: tuple | None = None

    def efficiency_rows(self) -> list:
        sc = self.scenario
        return [(sc.ttl_s, sc.beacon_s, sc.payload, efficiency(self.ledgers[label]))
                for label in self.ledgers if label in ("chain", "geo-ctrl", "geo-dist", "shortest")]


def _net_config(sc: Scenario, positions, strategy, sinks=(1,)) -> NetworkConfig:
    return NetworkConfig(positions, sinks=sinks, tx_level=sc.tx_level, beacon_interval_s=sc.beacon_s,
                         entry_ttl_s=sc.ttl_s, strategy=strategy, noise_sigma=sc.noise_sigma,
                         duty_period_s=sc.duty_period_s, duty_fraction=sc.duty_fraction,
                         response_us=int(round(sc.response_ms * 1000)), log_events=sc.log_events)


# testbed

CHAIN_FLOWS = ((4, 1), (6, 1))  # three and five hops from the sink


def chain_positions(n: int = 6, spacing: float = 12.0) -> dict:
    return {i + 1: (5.0 + spacing * i, 10.0) for i in range(n)}


def traffic_start(sc: Scenario) -> float:
    # first reports land by 4T; leave one more period for the controller view
    return 5 * sc.beacon_s


def run_chain(sc: Scenario) -> Network:
    net = Network(_net_config(sc, chain_positions(6, sc.chain_spacing_m), sc.strategy), sc.seed)
    start = traffic_start(sc)
    for src, dst in CHAIN_FLOWS:
        phase = net.rng.uniform(0, sc.spacing_s)
        for k in range(sc.packets):
            net.send(start + phase + k * sc.spacing_s, src, dst, sc.payload)
    net.run_until(start + sc.packets * sc.spacing_s + sc.spacing_s + 10)
    net.finish()
    return net


def multicast_positions(radius: float = 10.0, sink_offset: float = 12.0) -> dict:
    cx, cy = 30.0, 30.0
    pos = {1: (cx - sink_offset, cy), 2: (cx, cy)}
    for i, ang in enumerate((0.0, 120.0, 240.0)):
        a = math.radians(ang)
        pos[3 + i] = (round(cx + radius * math.cos(a), 3), round(cy + radius * math.sin(a), 3))
    return pos


def run_multicast(sc: Scenario) -> Network:
    """Source 2 multicasts to members 3, 4, 5 one hop away; 2 -> sink unicast as the baseline."""
    net = Network(_net_config(sc, multicast_positions(), sc.strategy), sc.seed)
    members = (3, 4, 5)
    net.metrics.groups[MULTICAST_GROUP] = set(members)
    boot = 4.5 * sc.beacon_s
    for m in members:
        net.call(4 * sc.beacon_s, m, lambda node: node.join_group(MULTICAST_GROUP))
    _at_controller(net, boot, lambda ctrl: ctrl.deploy_nf(GEO_NEXT_HOP, sorted(net.nodes), scope="multicast"))
    start = traffic_start(sc) + sc.beacon_s
    phase = net.rng.uniform(0, sc.spacing_s / 2)
    for k in range(sc.packets):
        t = start + phase + k * sc.spacing_s
        net.send_multicast(t, 2, MULTICAST_GROUP, sc.payload)
        net.send(t + sc.spacing_s / 2, 2, 1, sc.payload)
    net.run_until(start + sc.packets * sc.spacing_s + sc.spacing_s + 10)
    net.finish()
    return net


def _at_controller(net: Network, t_s: float, fn):
    """Schedule ``fn(controller)`` as a timer on one of the sinks."""
    sink = net.cfg.sinks[0]
    net.call(t_s, sink, lambda node: fn(net.controller))


def run_testbed(sc: Scenario) -> RunResult:
    res = RunResult(sc)
    chain = run_chain(sc)
    res.ledgers["chain"] = chain.metrics
    res.networks["chain"] = chain
    res.logs.append(("chain", chain.kernel.log.text()))
    if sc.multicast:
        mc = run_multicast(sc)
        res.ledgers["multicast"] = mc.metrics
        res.networks["multicast"] = mc
        res.logs.append(("multicast", mc.kernel.log.text()))
    return res


# geo100

def connected(positions: dict, radius: float) -> bool:
    ids = sorted(positions)
    graph = {a: {b for b in ids if b != a and math.dist(positions[a], positions[b]) <= radius} for a in ids}
    return len(hop_distances(graph, ids[0])) == len(ids)


def random_layout(n: int, area: float, radius: float, rng: np.random.Generator, tries: int = 1000) -> dict:
    for _ in range(tries):
        xy = rng.uniform(0.5, area - 0.5, size=(n, 2))
        pos = {i + 1: (round(float(x), 1), round(float(y), 1)) for i, (x, y) in enumerate(xy)}
        if len(set(pos.values())) == n and connected(pos, radius):
            return pos
    raise RuntimeError(f"no connected layout of {n} nodes in {area} m after {tries} draws")


def geo100_plan(sc: Scenario):
    """Layout and flows shared by every strategy of one geo100 run."""
    seq = np.random.SeedSequence([sc.seed, 100])
    layout_seq, traffic_seq = seq.spawn(2)
    radius = RadioModel().range_m(sc.tx_level)
    pos = random_layout(sc.nodes, sc.area_m, radius, np.random.default_rng(layout_seq))
    rng = random.Random(int(traffic_seq.generate_state(1)[0]))
    others = sorted(pos)[1:]
    pairs = set()
    while len(pairs) < min(sc.flows, len(others) * (len(others) - 1)):
        s, d = rng.sample(others, 2)
        pairs.add((s, d))
    flows = [(s, d, rng.uniform(0, sc.spacing_s)) for s, d in sorted(pairs)]
    return pos, flows


def run_geo(sc: Scenario, strategy: str, plan=None) -> Network:
    pos, flows = plan or geo100_plan(sc)
    net = Network(_net_config(sc, pos, strategy), sc.seed)
    if strategy == "geo-dist":
        _at_controller(net, 4.5 * sc.beacon_s,
                       lambda ctrl: ctrl.deploy_nf(GEO_NEXT_HOP, sorted(net.nodes), scope="unicast"))
    start = traffic_start(sc) + sc.beacon_s
    for src, dst, phase in flows:
        for k in range(sc.flow_packets):
            net.send(start + phase + k * sc.spacing_s, src, dst, sc.payload)
    net.run_until(start + sc.flow_packets * sc.spacing_s + sc.spacing_s + 10)
    net.finish()
    return net


def run_geo100(sc: Scenario) -> RunResult:
    res = RunResult(sc)
    plan = geo100_plan(sc)
    for strategy in sc.strategies:
        net = run_geo(sc, strategy, plan)
        res.ledgers[strategy] = net.metrics
        res.networks[strategy] = net
        res.logs.append((strategy, net.kernel.log.text()))
    return res


# fencing

def run_fencing(sc: Scenario) -> RunResult:
    res = RunResult(sc)
    measured = {}
    for f in sc.frequencies:
        r = report_loop(f, sc.report_size, sc.events, sc.seed, sc.fencing, sc.beacon_s, log_events=sc.log_events)
        measured[f] = r.mean_delay
        res.fencing_rows.append((f, r.rate, r.mean_delay, cost(sc.weight_a, sc.weight_b, r.rate, r.mean_delay)))
        res.networks[f] = r.network
        res.ledgers[f"f={f:g}"] = r.network.metrics
        res.logs.append((f"f={f:g}", r.network.kernel.log.text()))
    size = res.fencing_rows[0][1] / sc.frequencies[0]
    res.optimum = optimal_frequency(sc.weight_a, sc.weight_b, size, sc.frequencies, measured)
    return res


# per-experiment defaults that differ from the Scenario field defaults
DEFAULTS = {
    "testbed": {},
    "geo100": {"ttl_s": 30},
    "fencing": {},
}


def default_scenario(name: str, **overrides) -> Scenario:
    if name not in DEFAULTS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")
    return replace(Scenario(name=name), **{**DEFAULTS[name], **overrides})


def run(sc: Scenario) -> RunResult:
    sc.validate()
    return {"testbed": run_testbed, "geo100": run_geo100, "fencing": run_fencing}[sc.name](sc)


def with_overrides(sc: Scenario, **changes) -> Scenario:
    return replace(sc, **{k: v for k, v in changes.items() if v is not None})

