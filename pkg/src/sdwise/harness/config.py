"""Scenario config files: flat ``key = value`` lines under ``[section]`` headers.

Recognized keys (all optional)::

    [scenario]  name, seed, strategy, strategies
    [traffic]   packets, spacing, payload, flows, flow_packets
    [protocol]  ttl, beacon_interval, tx_level, duty_period, duty_fraction, response_ms
    [radio]     noise_sigma
    [topology]  nodes, area, chain_spacing
    [fencing]   frequencies, events, a, b, report_size, zone, target, half_window

Lists are comma separated.  ``zone`` is a polygon written as
``x y; x y; ...`` and ``target`` is ``x y``.  ``#`` and ``;`` start
comments at the beginning of a line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import replace

from .scenarios import SCENARIOS, InvalidScenario, Scenario, default_scenario


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "<config>", line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _point(text: str) -> tuple:
    x, y = text.split()
    return (float(x), float(y))


def _polygon(text: str) -> tuple:
    pts = tuple(_point(p) for p in text.split(";") if p.strip())
    if len(pts) < 3:
        raise ValueError("a polygon needs at least three vertices")
    return pts


def _strategies(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


# section -> key -> (Scenario field, converter); fencing layout fields are prefixed "layout."
FIELDS = {
    "scenario": {"name": ("name", str), "seed": ("seed", int), "strategy": ("strategy", str),
                 "strategies": ("strategies", _strategies)},
    "traffic": {"packets": ("packets", int), "spacing": ("spacing_s", float), "payload": ("payload", int),
                "flows": ("flows", int), "flow_packets": ("flow_packets", int)},
    "protocol": {"ttl": ("ttl_s", int), "beacon_interval": ("beacon_s", float), "tx_level": ("tx_level", int),
                 "duty_period": ("duty_period_s", float), "duty_fraction": ("duty_fraction", float),
                 "response_ms": ("response_ms", float)},
    "radio": {"noise_sigma": ("noise_sigma", float)},
    "topology": {"nodes": ("nodes", int), "area": ("area_m", float), "chain_spacing": ("chain_spacing_m", float)},
    "fencing": {"frequencies": ("frequencies", _floats), "events": ("events", int), "a": ("weight_a", float),
                "b": ("weight_b", float), "report_size": ("report_size", int), "zone": ("layout.zone", _polygon),
                "target": ("layout.target", _point), "half_window": ("layout.half_window", float)},
}


def _line_of(lines, section: str, key: str | None) -> int | None:
    current = None
    for no, raw in enumerate(lines, 1):
        text = raw.strip()
        m = re.match(r"\[(.+)\]$", text)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", text):
            return no
    return None


def parse_config(text: str, path: str = "<config>", base: Scenario | None = None) -> Scenario:
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header before the first key", path, exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", path, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", path, lineno) from None

    values: dict = {}
    layout: dict = {}
    name = parser.get("scenario", "name", fallback=None) if parser.has_section("scenario") else None
    for section in parser.sections():
        known = FIELDS.get(section)
        if known is None:
            raise ConfigError(f"unknown section [{section}]", path, _line_of(lines, section, None))
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]", path, _line_of(lines, section, key))
            target, convert = known[key]
            try:
                value = convert(raw.strip())
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value {raw.strip()!r} for {key}: {exc}", path,
                                  _line_of(lines, section, key)) from None
            if target.startswith("layout."):
                layout[target[7:]] = value
            else:
                values[target] = value
    if name is not None and name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}", path, _line_of(lines, "scenario", "name"))
    sc = default_scenario(name) if name else (base or default_scenario("testbed"))
    sc = replace(sc, **values)
    if layout:
        sc = replace(sc, fencing=replace(sc.fencing, **layout))
    try:
        sc.validate()
    except InvalidScenario as exc:
        line = None
        for key in exc.fields:
            for section, keys in FIELDS.items():
                if key in keys:
                    line = line or _line_of(lines, section, key)
        raise ConfigError(str(exc), path, line) from None
    return sc


def load_config(path: str, base: Scenario | None = None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, path, base)
