"""Virtual sensors: controller-side proxies that gate contexts on attestation."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..packet import PacketType
from .attestation import EMPTY_DIGEST, NonceIssuer, attest_verify, digest
from .context import DEFAULT_AUTHORITY, Authority, ContextRecord, discover_context, translate


class Status(str, Enum):
    PENDING = "pending"
    TRUSTED = "trusted"
    UNTRUSTED = "untrusted"


@dataclass
class VirtualSensor:
    node_id: int
    key: bytes = field(repr=False)
    expected_digest: bytes
    status: Status = Status.PENDING
    latest: ContextRecord | None = None
    pending_restrictions: list = field(default_factory=list)
    applied: list | None = None
    nonce: bytes | None = None
    held: tuple | None = None  # (context, payload digest) awaiting attestation
    attested_us: int = -1


class ComplianceService:
    """Context discovery plus the authorities' rules, driven by controller events."""

    def __init__(self, controller, zone_map=(), authorities=None, rng=None, metrics=None,
                 default_authority: str = DEFAULT_AUTHORITY, reattest_us: int | None = None):
        self.controller = controller
        self.zone_map = list(zone_map)
        self.authorities: dict[str, Authority] = dict(authorities or {})
        self.default_authority = default_authority
        self.issuer = NonceIssuer(rng)
        self.metrics = metrics
        self.reattest_us = reattest_us
        self.sensors: dict[int, VirtualSensor] = {}
        self.forwarded: list = []  # (time, node, authority)
        self.rejected: list = []  # (time, node)
        self.restrictions: list = []  # (time, node, effects)
        controller.compliance = self

    def register(self, node_id: int, key: bytes, expected_digest: bytes) -> VirtualSensor:
        vs = self.sensors[node_id] = VirtualSensor(node_id, key, expected_digest)
        return vs

    def _due(self, vs: VirtualSensor, now: int) -> bool:
        if vs.status is Status.PENDING:
            return True
        return (vs.status is Status.TRUSTED and self.reattest_us is not None
                and now - vs.attested_us >= self.reattest_us)

    def on_context(self, node_id: int, payload: bytes, now: int):
        vs = self.sensors.get(node_id)
        if vs is None:
            return
        record = ContextRecord.from_payload(node_id, payload, now)
        vs.latest = record
        if vs.status is Status.UNTRUSTED:
            self.rejected.append((now, node_id))
            return
        if self._due(vs, now):
            vs.held = (record, digest(payload))
            if vs.nonce is None:
                self.challenge(vs, vs.held[1])
            return
        self.forward(vs, record, now)

    def challenge(self, vs: VirtualSensor, report_digest: bytes = EMPTY_DIGEST):
        vs.nonce = self.issuer.issue()
        self.controller.send_to(vs.node_id, PacketType.ATTEST_CHALLENGE, vs.nonce + report_digest)

    def on_attest(self, node_id: int, quote: bytes, now: int) -> bool:
        vs = self.sensors.get(node_id)
        if vs is None or vs.nonce is None:
            return False
        nonce, vs.nonce = vs.nonce, None
        report_digest = vs.held[1] if vs.held else EMPTY_DIGEST
        ok = self.issuer.redeem(nonce) and attest_verify(vs.expected_digest, vs.key, nonce, quote, report_digest)
        vs.status = Status.TRUSTED if ok else Status.UNTRUSTED
        vs.attested_us = now
        held, vs.held = vs.held, None
        if ok and held is not None:
            self.forward(vs, held[0], now)
        elif not ok:
            self.rejected.append((now, node_id))
        return ok

    def forward(self, vs: VirtualSensor, record: ContextRecord, now: int):
        """Hand a trusted context to its authority and push any changed restrictions."""
        name = discover_context(record, self.zone_map, self.default_authority)
        self.forwarded.append((now, vs.node_id, name))
        authority = self.authorities.get(name)
        effects = authority.effects(record) if authority is not None else []
        if not effects or effects == vs.applied:
            return
        vs.applied = effects
        vs.pending_restrictions = effects
        self.restrictions.append((now, vs.node_id, effects))
        ctrl = self.controller
        for p, on in effects:
            ctrl.resources.restrict(vs.node_id, p, on, now)
        try:
            route = ctrl.route_to(vs.node_id)
        except LookupError:
            ctrl.count("downlink_unreachable")
            return
        ctrl.send_packet(translate(effects, vs.node_id, route, ctrl.params.net))
