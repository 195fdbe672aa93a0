import csv
import os

import pytest

from sdwise.harness import EMPTY, MetricLedger, cdf, default_scenario, efficiency, rtt_stats, run
from sdwise.harness.cli import main
from sdwise.harness.config import ConfigError, parse_config
from sdwise.harness.export import HEADERS, export
from sdwise.harness.scenarios import InvalidScenario, Scenario
from sdwise.metrics import RttSample, cdf_at
from sdwise.packet import Packet, PacketType


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# metrics

def test_efficiency_single_delivery():
    led = MetricLedger()
    led.on_tx(1, Packet(1, 2, 1, PacketType.DATA, payload=bytes(10)), 20)
    led.delivered(2, 1, 10, 0)
    assert efficiency(led) == 0.5


def test_efficiency_all_lost():
    led = MetricLedger()
    led.on_tx(1, Packet(1, 2, 1, PacketType.DATA, payload=bytes(10)), 20)
    assert efficiency(led) == 0


def test_cdf_example():
    assert cdf_at([1, 2, 2, 4], 2) == 0.75
    assert cdf([1, 2, 2, 4]) == [(1, 0.25), (2, 0.75), (4, 1.0)]


def test_empty_filter_is_marked():
    led = MetricLedger()
    assert rtt_stats(led, hops=3) is EMPTY
    assert rtt_stats(led) != 0


def test_rtt_stats():
    led = MetricLedger()
    led.rtt_samples += [RttSample(4, 1, 3, 10, 0.02), RttSample(4, 1, 3, 10, 0.04), RttSample(6, 1, 5, 10, 1.0)]
    mean, sd, dist = rtt_stats(led, hops=3)
    assert mean == pytest.approx(0.03)
    assert sd == pytest.approx(0.0141421356)
    assert dist[-1][1] == 1.0


def test_ack_from_wrong_node_ignored():
    led = MetricLedger(sinks=frozenset({1}))
    led.rtt_open(4, 7, 1, 0, 10, 3)
    led.rtt_ack(4, 7, 9, 100)
    assert led.rtt_samples == []
    led.rtt_ack(4, 7, 1, 20_000)
    assert led.rtt_samples[0].seconds == 0.02 and led.rtt_samples[0].hops == 3


def test_signaling_classification():
    led = MetricLedger()
    led.on_tx(3, Packet(1, 0, 3, PacketType.RULE_REQUEST), 20)
    led.on_tx(3, Packet(1, 0xFFFF, 3, PacketType.BEACON), 16)
    led.on_tx(3, Packet(1, 0, 3, PacketType.REPORT), 20)
    assert led.signaling == {3: 1}
    assert (led.beacons, led.reports) == (1, 1)


# config

def test_config_roundtrip():
    sc = parse_config("[scenario]\nname = geo100\nseed = 9\n[protocol]\nttl = 45\n[traffic]\nflows = 4\n")
    assert (sc.name, sc.seed, sc.ttl_s, sc.flows) == ("geo100", 9, 45, 4)


def test_fencing_zone_parsed():
    sc = parse_config("[scenario]\nname = fencing\n[fencing]\nzone = 0 0; 4 0; 4 4\ntarget = 2 2\n"
                      "frequencies = 0.5, 1\n")
    assert sc.fencing.zone == ((0, 0), (4, 0), (4, 4))
    assert sc.frequencies == (0.5, 1.0)


@pytest.mark.parametrize("text, line", [
    ("seed = 3\n", 1),
    ("[scenario]\nname = testbed\n[bogus]\nx = 1\n", 3),
    ("[scenario]\nname = testbed\n[protocol]\nbeacon = 3\n", 4),
    ("[scenario]\n\nseed = three\n", 3),
    ("[scenario]\nname = nowhere\n", 2),
    ("[traffic]\npackets = 5\npayload = 500\n", 3),
    ("[scenario]\nseed = 1\nseed = 2\n", 3),
])
def test_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text, "x.ini")
    assert err.value.line == line
    assert str(err.value).startswith(f"x.ini:{line}:")


def test_invalid_scenario_fields():
    with pytest.raises(InvalidScenario) as err:
        Scenario(payload=1, ttl_s=0).validate()
    assert set(err.value.fields) == {"payload", "ttl"}


# runs and export

def small_testbed(**kw):
    return default_scenario("testbed", packets=4, beacon_s=5.0, **kw)


def test_same_seed_same_ledgers():
    a, b = run(small_testbed(seed=3)), run(small_testbed(seed=3))
    assert a.logs == b.logs
    assert a.ledgers["chain"].rtt_samples == b.ledgers["chain"].rtt_samples


def test_testbed_export(tmp_path):
    res = run(small_testbed())
    paths = export(res, str(tmp_path))
    assert sorted(os.path.basename(p) for p in paths) == sorted(list(HEADERS) + ["events.log"])
    for name, header in HEADERS.items():
        assert tuple(rows(tmp_path / name)[0]) == header
    acked = sum(len(l.rtt_samples) for l in res.ledgers.values())
    assert len(rows(tmp_path / "rtt.csv")) - 1 == acked
    assert (tmp_path / "events.log").read_text().startswith("# run testbed")
    for net in res.networks.values():
        assert net.energy_conserved()


def test_geo_export_one_row_per_node_and_strategy(tmp_path):
    sc = default_scenario("geo100", nodes=15, area_m=30.0, flows=3, flow_packets=2, beacon_s=5.0, log_events=False)
    res = run(sc)
    export(res, str(tmp_path))
    assert len(rows(tmp_path / "signaling.csv")) - 1 == 15 * 3
    assert {r[1] for r in rows(tmp_path / "rules.csv")[1:]} == {"shortest", "geo-ctrl", "geo-dist"}


def test_fencing_sweep_rows(tmp_path):
    freqs = (0.5, 0.8, 1.0, 1.2, 1.5, 2.0, 2.5, 3.0)
    res = run(default_scenario("fencing", frequencies=freqs, events=2, log_events=False))
    export(res, str(tmp_path))
    assert len(rows(tmp_path / "fencing.csv")) - 1 == 8
    assert res.optimum[0] in freqs


# CLI

def test_cli_run_ok(tmp_path, capsys):
    code = main(["run", "--scenario", "testbed", "--seed", "2", "--packets", "2", "--beacon-interval", "5",
                 "--out", str(tmp_path), "--no-log"])
    assert code == 0
    assert "wrote 7 files" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nname = testbed\n[protocol]\nttl = -1\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bad.ini:4" in capsys.readouterr().err


def test_cli_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path)]) == 2


def test_cli_bad_sweep_values(tmp_path):
    assert main(["sweep", "--param", "ttl", "--values", "a,b", "--out", str(tmp_path)]) == 2


def test_cli_sweep(tmp_path):
    code = main(["sweep", "--param", "payload", "--values", "10,20", "--packets", "2", "--beacon-interval", "5",
                 "--out", str(tmp_path), "--no-log"])
    assert code == 0
    assert len(rows(tmp_path / "efficiency.csv")) == 1 + 2 * 1


def test_cli_export_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["run", "--packets", "1", "--beacon-interval", "5", "--out", str(blocker / "sub"), "--no-log"])
    assert code == 1
