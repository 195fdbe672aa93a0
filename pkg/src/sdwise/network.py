"""Assembles kernel, medium, nodes and controller into one runnable network."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .controller import Controller, ControllerParams, hop_table
from .controller.paths import hop_distances
from .energy import EnergyModel
from .metrics import MetricLedger
from .node import Node, NodeParams
from .simnet import DutyCycle, EventKind, EventLog, Kernel, Medium, RadioModel, US, seconds


@dataclass
class NetworkConfig:
    positions: dict
    sinks: tuple = (1,)
    tx_level: int = 2
    beacon_interval_s: float = 10.0
    entry_ttl_s: int = 60
    strategy: str = "shortest"
    noise_sigma: float = 0.0
    duty_period_s: float = 1.0
    duty_fraction: float = 1.0
    proc_base_us: int = 2_000
    proc_jitter_us: int = 1_000
    response_us: int = 1_000
    localization: str = "oracle"
    anchors: tuple = ()
    log_events: bool = True
    energy: EnergyModel = field(default_factory=EnergyModel)


class Network:
    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        seq = np.random.SeedSequence(seed)
        medium_seq, node_seq, self._misc_seq = seq.spawn(3)
        self.rng = random.Random(int(self._misc_seq.generate_state(1)[0]))
        self.kernel = Kernel(EventLog(cfg.log_events))
        self.radio = RadioModel(noise_sigma=cfg.noise_sigma)
        self.medium = Medium(self.kernel, self.radio, cfg.energy, rng=np.random.default_rng(medium_seq))
        self.metrics = MetricLedger(sinks=frozenset(cfg.sinks))
        self.medium.tx_listeners.append(self.metrics.on_tx)
        bi = seconds(cfg.beacon_interval_s)
        params = NodeParams(beacon_interval_us=bi, report_interval_us=2 * bi, first_report_us=2 * bi,
                            proc_base_us=cfg.proc_base_us, proc_jitter_us=cfg.proc_jitter_us,
                            tx_level=cfg.tx_level, multicast_cache_us=seconds(cfg.entry_ttl_s))
        self.params = params
        ids = sorted(cfg.positions)
        node_seeds = node_seq.generate_state(len(ids))
        self.nodes: dict[int, Node] = {}
        period = seconds(cfg.duty_period_s)
        for nid, ns in zip(ids, node_seeds):
            nrng = random.Random(int(ns))
            duty = DutyCycle(period, cfg.duty_fraction, nrng.randrange(period)) if cfg.duty_fraction < 1 else None
            self.nodes[nid] = Node(nid, cfg.positions[nid], self.kernel, self.medium, params, nrng,
                                   self.metrics, sink=nid in cfg.sinks, duty=duty)
        cparams = ControllerParams(strategy=cfg.strategy, entry_ttl_s=cfg.entry_ttl_s,
                                   response_us=cfg.response_us, staleness_us=3 * 2 * bi,
                                   localization=cfg.localization)
        anchors = {a: cfg.positions[a] for a in cfg.anchors}
        self.controller = Controller(self.kernel, cfg.sinks, cparams, self.metrics, cfg.positions, anchors,
                                     self.radio, cfg.tx_level)
        graph = self.true_graph()
        self.metrics.hop_lookup = lambda s, d: _bfs_hops(graph, s, d)
        self._started = False

    def true_graph(self) -> dict:
        """Radio connectivity at the configured power, ignoring noise."""
        rng_m = self.radio.range_m(self.cfg.tx_level)
        pos = self.cfg.positions
        g = {n: set() for n in pos}
        for a in pos:
            for b in pos:
                if a != b and _dist(pos[a], pos[b]) <= rng_m:
                    g[a].add(b)
        return g

    def hop_oracle(self) -> dict:
        return hop_table(self.true_graph(), self.cfg.sinks)

    @property
    def now_s(self) -> float:
        return self.kernel.now / US

    def start(self):
        if self._started:
            return
        self._started = True
        ri = self.params.report_interval_us
        for nid, node in self.nodes.items():
            node.start(report_phase_us=self.rng.randrange(ri))

    def run_until(self, t_s: float):
        self.start()
        self.kernel.run(until=seconds(t_s))

    def at(self, t_s: float, nid: int, *payload):
        self.kernel.at(seconds(t_s), nid, EventKind.TIMER, payload)

    def send(self, t_s: float, src: int, dst: int, size: int):
        self.at(t_s, src, "send", dst, size)

    def send_multicast(self, t_s: float, src: int, group: int, size: int):
        self.at(t_s, src, "msend", group, size)

    def call(self, t_s: float, nid, fn):
        """Run ``fn(node)`` at ``t_s`` on node ``nid``'s event stream."""
        self.at(t_s, nid, "call", fn)

    def finish(self) -> MetricLedger:
        for node in self.nodes.values():
            node.finish()
        self.metrics.energy_uj = {nid: self.medium.ledgers[nid].consumed_uj for nid in sorted(self.nodes)}
        return self.metrics

    def energy_conserved(self) -> bool:
        total = sum(l.consumed_pj for l in self.medium.ledgers.values())
        return total == self.kernel.log.energy_total_pj


def _dist(a, b) -> float:
    return ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) ** 0.5


def _bfs_hops(graph, s, d):
    if s == d:
        return 0
    return hop_distances(graph, s).get(d)

