"""Deterministic simulated tools backed by fixture tables.

The fixture file is a JSON object mapping tool name to that tool's response
table. Four tools have dedicated behaviors; any other tool name is served by
:func:`table_behavior`, whose table looks like::

    {"responses": [{"match": {"arg": "value"}, "body": "..."}], "default": "..."}
"""

from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path
from typing import Callable

from .registry import ApiSpec, Registry, parse_specs
from .sandbox import Behavior, Sandbox, ToolError

_WORD = re.compile(r"[a-z0-9]+")


def default_fixture_path() -> Path:
    return Path(str(resources.files("ste") / "data" / "fixtures.json"))


def default_registry_path() -> Path:
    return Path(str(resources.files("ste") / "data" / "apis.json"))


def default_registry() -> Registry:
    return Registry(tuple(parse_specs(json.loads(default_registry_path().read_text(encoding="utf-8")))))


def load_fixtures(path: str | Path | None = None) -> dict:
    p = Path(path) if path is not None else default_fixture_path()
    doc = json.loads(p.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError(f"fixture file {p} must hold a JSON object keyed by tool name")
    return doc


def _lookup_city(table: dict, location: str) -> str | None:
    wanted = " ".join(location.lower().split())
    for city in table:
        if city.lower() == wanted:
            return city
    return None


def forecast_weather(fixture: dict) -> Behavior:
    table = fixture["table"]
    max_days = int(fixture["max_days"])

    def behave(args: dict) -> str:
        location = args.get("location", "").strip()
        city = _lookup_city(table, location)
        if city is None:
            raise ToolError(f'no forecast available for location "{location}"')
        raw_days = args.get("days", "1")
        try:
            days = float(raw_days)
        except ValueError:
            raise ToolError(f'"days" must be an integer from 1 to {max_days}, got "{raw_days}"') from None
        if days != int(days) or not 1 <= days <= max_days:
            raise ToolError(f'"days" must be an integer from 1 to {max_days}, got "{raw_days}"')
        rows = table[city][: int(days)]
        lines = [f"Forecast for {city} ({int(days)} day{'s' if days > 1 else ''}):"]
        for i, row in enumerate(rows, 1):
            attrs = "; ".join(f"{k}={v}" for k, v in row.items() if k != "date")
            lines.append(f"Day {i} ({row['date']}): {attrs}")
        return "\n".join(lines)

    return behave


def search_places(fixture: dict) -> Behavior:
    places = fixture["places"]
    max_results = int(fixture.get("max_results", 3))

    def behave(args: dict) -> str:
        query = args.get("query", "").strip()
        if not query:
            raise ToolError('"query" must be a non-empty search string')
        words = set(_WORD.findall(query.lower()))
        scored = []
        for i, p in enumerate(places):
            hay = set(_WORD.findall(" ".join([p["name"], p["city"], p["category"], *p["tags"]]).lower()))
            # plural query words ("parks") should hit singular categories ("park")
            score = len(words & hay) + len({w[:-1] for w in words if w.endswith("s")} & hay)
            if score:
                scored.append((-score, i, p))
        scored.sort(key=lambda t: (t[0], t[1]))
        if not scored:
            return f'No places found for "{query}".'
        lines = [f'Results for "{query}":']
        for n, (_, _, p) in enumerate(scored[:max_results], 1):
            lines.append(
                f"{n}. {p['name']} ({p['category']}), {p['address']}. Rating {p['rating']}. "
                f"Tags: {', '.join(p['tags'])}"
            )
        return "\n".join(lines)

    return behave


def geo_coordinates(fixture: dict) -> Behavior:
    places = fixture["places"]

    def behave(args: dict) -> str:
        name = args.get("name", "").strip()
        country = args.get("country", "").strip().upper()
        lang = args.get("lang", "en")
        hits = [p for p in places if p["name"].lower() == name.lower()]
        if country:
            hits = [p for p in hits if p["country"] == country]
        if not hits:
            suffix = f" in country {country}" if country else ""
            raise ToolError(f'no place named "{name}" found{suffix}')
        p = hits[0]
        shown = p["name_ru"] if lang == "ru" else p["name"]
        return json.dumps(
            {"name": shown, "country": p["country"], "lat": p["lat"], "lon": p["lon"]}, ensure_ascii=False
        )

    return behave


def bart_advisory(fixture: dict) -> Behavior:
    stations = fixture["stations"]
    advisories = fixture["advisories"]

    def behave(args: dict) -> str:
        cmd = args.get("cmd", "")
        if cmd != "bsa":
            raise ToolError(f'unsupported cmd "{cmd}"; the only supported command is "bsa"')
        orig = args.get("orig", "").strip()
        if orig and orig.upper() not in stations:
            raise ToolError(f'"{orig}" is not a known 4-character station abbreviation')
        issued = fixture["issued"]
        if not orig:
            return f"BART service advisory issued {issued}: {advisories['*']}"
        code = orig.upper()
        text = advisories.get(code, advisories["*"])
        return f"BART service advisory for {stations[code]} ({code}) issued {issued}: {text}"

    return behave


BUILTIN_BEHAVIORS: dict[str, Callable[[dict], Behavior]] = {
    "forecast_weather": forecast_weather,
    "search_places": search_places,
    "geo_coordinates": geo_coordinates,
    "bart_advisory": bart_advisory,
}


def table_behavior(name: str, fixture: dict) -> Behavior:
    responses = fixture.get("responses", [])
    default = fixture.get("default")

    def behave(args: dict) -> str:
        for r in responses:
            if all(args.get(k) == str(v) for k, v in r.get("match", {}).items()):
                return r["body"]
        if default is None:
            raise ToolError(f"{name} has no response for arguments {json.dumps(args, sort_keys=True)}")
        return default

    return behave


def build_sandbox(
    specs: Registry | list[ApiSpec] | None = None,
    fixtures: str | Path | dict | None = None,
    truncate_limit: int | None = None,
) -> Sandbox:
    """Register every spec with its fixture-driven behavior."""
    specs = default_registry() if specs is None else specs
    table = fixtures if isinstance(fixtures, dict) else load_fixtures(fixtures)
    sandbox = Sandbox() if truncate_limit is None else Sandbox(truncate_limit=truncate_limit)
    for spec in specs:
        fixture = table.get(spec.name)
        if fixture is None:
            raise ValueError(f"no fixture table for tool {spec.name!r}")
        make = BUILTIN_BEHAVIORS.get(spec.name)
        behavior = make(fixture) if make else table_behavior(spec.name, fixture)
        sandbox.register_tool(spec, behavior)
    return sandbox
