import random

import pytest
from hypothesis import given, strategies as st

from sdwise import wire
from sdwise.compliance import (
    Authority, ContextRecord, NonceIssuer, RestrictionRule, Status, TpmSim, Zone, attest_quote, attest_verify,
    cost, data_rate, discover_context, evaluate, optimal_frequency, point_in_polygon, report_loop, translate,
)
from sdwise.compliance.attestation import EMPTY_DIGEST, digest
from sdwise.compliance.fencing import analytic_delay
from sdwise.packet import PacketType
from sdwise.wire import ConfigKey, Peripheral

CONCERT = ((0, 0), (10, 0), (10, 10), (0, 10))
ZONES = [Zone(CONCERT, "concert"), Zone(((20, 0), (30, 0), (30, 10)), "stadium", owners=frozenset({5}))]


def ctx(pos, orientation=0.0, owner=1):
    return ContextRecord(1, pos, orientation, owner)


def test_context_inside_zone():
    assert discover_context(ctx((5, 5)), ZONES) == "concert"


def test_context_outside_all_zones():
    assert discover_context(ctx((50, 50)), ZONES) == "default"


def test_context_on_edge_counts_inside():
    assert discover_context(ctx((10, 5)), ZONES) == "concert"
    assert point_in_polygon((0, 0), CONCERT)


def test_owner_filter():
    assert discover_context(ctx((28, 2), owner=5), ZONES) == "stadium"
    assert discover_context(ctx((28, 2), owner=6), ZONES) == "default"


@given(st.floats(-20, 40), st.floats(-20, 40), st.integers(0, 9))
def test_discovery_is_deterministic(x, y, owner):
    c = ctx((x, y), owner=owner)
    assert discover_context(c, ZONES) == discover_context(c, list(ZONES))


DRONE_RULE = RestrictionRule("concert", ((Peripheral.CAMERA, True),), zone=CONCERT, target=(10, 5), half_window=15)


def test_rule_satisfied_enables_camera():
    # target bearing from (5, 5) is 0 degrees; drone faces 10 degrees
    assert evaluate(DRONE_RULE, ctx((5, 5), orientation=10)) == [(Peripheral.CAMERA, True)]


def test_rule_off_target_disables():
    assert evaluate(DRONE_RULE, ctx((5, 5), orientation=40)) == [(Peripheral.CAMERA, False)]


def test_rule_outside_zone_disables():
    for o in (0, 90, 180):
        assert evaluate(DRONE_RULE, ctx((15, 5), orientation=o)) == [(Peripheral.CAMERA, False)]


def test_orientation_wraps():
    rule = RestrictionRule("a", ((Peripheral.CAMERA, True),), target=(10, -0.1), half_window=15)
    assert evaluate(rule, ctx((0, 0), orientation=355)) == [(Peripheral.CAMERA, True)]


def test_authority_merges_rules_conservatively():
    a = Authority("x", [RestrictionRule("x", ((Peripheral.CAMERA, True),)),
                        RestrictionRule("x", ((Peripheral.CAMERA, True),), zone=CONCERT)])
    assert a.effects(ctx((50, 50))) == [(Peripheral.CAMERA, False)]
    assert a.effects(ctx((5, 5))) == [(Peripheral.CAMERA, True)]


def test_translate_single_effect():
    p = translate([(Peripheral.CAMERA, False)], 4, route=[1, 4])
    assert p.typ == PacketType.CONFIG and p.dst == 4 and p.nxh == 1
    route, _, body = wire.unwrap_route(p.payload)
    assert route == [1, 4]
    assert wire.decode_config(body) == [(ConfigKey.RESTRICT, bytes([Peripheral.CAMERA, 0]))]


def test_translate_two_effects_one_packet():
    p = translate([(Peripheral.CAMERA, False), (Peripheral.MICROPHONE, True)], 4)
    assert len(wire.decode_config(wire.unwrap_route(p.payload)[2])) == 2


def test_translate_requires_effects():
    with pytest.raises(ValueError):
        translate([], 4)


# attestation

KEY = bytes(range(32))
FW = bytes(range(256)) * 2


def test_untampered_quote_verifies():
    tpm = TpmSim(3, KEY, FW)
    nonce = bytes(16)
    assert attest_verify(digest(FW), KEY, nonce, attest_quote(tpm, nonce, EMPTY_DIGEST))


def test_flipped_byte_fails():
    tpm = TpmSim(3, KEY, FW)
    tpm.tamper(100)
    nonce = bytes(16)
    assert not attest_verify(digest(FW), KEY, nonce, tpm.quote(nonce, EMPTY_DIGEST))


def test_replayed_quote_fails_with_new_nonce():
    tpm = TpmSim(3, KEY, FW)
    old = tpm.quote(b"\x01" * 16, EMPTY_DIGEST)
    assert not attest_verify(digest(FW), KEY, b"\x02" * 16, old)


def test_quote_bound_to_report_digest():
    tpm = TpmSim(3, KEY, FW)
    nonce = bytes(16)
    q = tpm.quote(nonce, digest(b"report A"))
    assert attest_verify(digest(FW), KEY, nonce, q, digest(b"report A"))
    assert not attest_verify(digest(FW), KEY, nonce, q, digest(b"report B"))


def test_malformed_inputs_do_not_verify():
    assert not attest_verify(digest(FW), KEY, bytes(3), bytes(32))


def test_key_length_enforced():
    with pytest.raises(ValueError):
        TpmSim(1, b"short", FW)


def test_nonce_single_use():
    issuer = NonceIssuer(random.Random(1))
    n = issuer.issue()
    assert len(n) == 16
    assert issuer.redeem(n)
    assert not issuer.redeem(n)
    assert not issuer.redeem(bytes(16))


def test_key_not_in_repr():
    assert KEY.hex() not in repr(TpmSim(1, KEY, FW))


# rate versus delay

def test_data_rate_example():
    assert data_rate(1.0, 20) == 20.0


def test_cost_example():
    assert cost(1, 2, 10, 0.5) == 11


def test_rate_only_objective_picks_smallest_frequency():
    f, c, _, _ = optimal_frequency(1, 0, 20, [2.0, 0.5, 0.1])
    assert f == 0.1
    assert c == pytest.approx(2.0)


def test_analytic_optimum():
    grid = [round(0.01 * k, 2) for k in range(1, 101)]
    f, c, fa, ca = optimal_frequency(1, 1, 20, grid)
    assert abs(f - 0.158) <= 0.01
    assert c == pytest.approx(6.325, rel=0.02)
    assert fa == pytest.approx(1 / 40 ** 0.5)
    assert ca == pytest.approx(40 ** 0.5, rel=1e-9)


def test_measured_delay_table():
    f, _, _, _ = optimal_frequency(1, 1, 20, [0.1, 0.2], mean_delay={0.1: 100.0, 0.2: 1.0})
    assert f == 0.2


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        optimal_frequency(1, 1, 20, [])


def test_analytic_delay_halves_when_frequency_doubles():
    assert analytic_delay(0.2) == pytest.approx(analytic_delay(0.1) / 2)


# the closed loop

def test_report_loop_short_run():
    res = report_loop(1.0, events=12, seed=4)
    assert len(res.delays) == 12
    assert res.rate == pytest.approx(res.report_size)
    assert res.energy_conserved
    expect = analytic_delay(1.0) + res.mean_latency
    assert abs(res.mean_delay - expect) / expect < 0.5
    vs = res.service.sensors[3]
    assert vs.status is Status.TRUSTED


def test_tampered_drone_never_forwarded():
    res = report_loop(1.0, events=4, seed=9, tamper=True)
    vs = res.service.sensors[3]
    assert vs.status is Status.UNTRUSTED
    assert res.forwarded == 0
    assert res.service.rejected


def test_restriction_overrides_user_on_resource_store():
    res = report_loop(2.0, events=2, seed=2)
    ctrl = res.network.controller
    store = ctrl.resources
    store.restrict(3, Peripheral.CAMERA, False, 0)
    assert not store.user_request(3, Peripheral.CAMERA, True, 1)
    store.restrict(3, Peripheral.CAMERA, True, 2)
    assert store.user_request(3, Peripheral.CAMERA, True, 3)
