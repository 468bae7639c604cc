"""Offline scripted backends for the bundled fixture tools.

``exploration_script`` plays the model during exploration: per API it has a
fixed list of distinct queries, the call each query should trigger, and a
final answer that quotes the observation. A few queries per API are meant to
fail (bad arguments, no results) so that filtering has something to remove.
Every reply is keyed by the episode/trial in the conversation tag, so a
resumed run replays exactly like an uninterrupted one.

``predictor_script`` plays the model during ICL evaluation.

Run ``python3 -m ste.demo --out DIR`` to write both as JSON rule files usable
with ``--llm scripted:<path>``.
"""

from __future__ import annotations

import argparse
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .fixtures import load_fixtures

QUERIES_PER_API = 60
SORRY = "Thought: I now know the final answer\nFinal Answer: Sorry, I was unable to find that information."


@dataclass(frozen=True)
class DemoItem:
    api_name: str
    query: str
    arguments: dict
    good: bool = True

    def action_text(self) -> str:
        return (
            f"Thought: I should call {self.api_name} to answer this.\n"
            f"Action: {self.api_name}\n"
            f"Action Input: {json.dumps(self.arguments, ensure_ascii=False)}"
        )


def _spread(entities: list, templates: list, n: int) -> list[tuple[int, object, str]]:
    if len(entities) * len(templates) < n:
        raise ValueError("not enough entity/template combinations for distinct queries")
    return [(i, entities[i % len(entities)], templates[(i // len(entities)) % len(templates)]) for i in range(n)]


def _weather(fx: dict, n: int) -> list[DemoItem]:
    cities = list(fx["table"])
    templates = [
        "What will the weather be like in {city} over the next {days} days?",
        "I'm visiting {city} soon. Can you give me a {days}-day forecast?",
        "How likely is rain in {city} during the coming {days} days?",
        "Should I pack warm clothes for {days} days in {city}? What temperatures are expected?",
    ]
    items = []
    for i, city, tpl in _spread(cities, templates, n):
        days = 1 + (i * 7) % int(fx["max_days"])
        good = i % 13 != 7
        if not good:
            days = 14  # outside the supported range
        items.append(DemoItem("forecast_weather", tpl.format(city=city, days=days), {"location": city, "days": str(days)}, good))
    return items


def _places(fx: dict, n: int) -> list[DemoItem]:
    places = fx["places"]
    templates = [
        ("Can you suggest a {tag} spot in {city}?", "{tag} {city}"),
        ("I'm looking for a {category} in {city} that is good for {tag}. Any ideas?", "{category} {tag} {city}"),
        ("Where can I go for {tag} around {city}?", "{tag} {city}"),
    ]
    items = []
    for i, p, (tpl, q) in _spread(places, templates, n):
        tag = p["tags"][i % len(p["tags"])]
        fields = {"tag": tag, "city": p["city"], "category": p["category"]}
        good = i % 11 != 5
        query = tpl.format(**fields)
        search = q.format(**fields)
        if any(it.query == query for it in items):
            query = query[:-1] + f", somewhere near {p['name']}?"
        if not good:
            query = f"Is there a zorbing arena near {p['city']}? (request {i})"
            search = "zorbing arena"
        items.append(DemoItem("search_places", query, {"query": search}, good))
    return items


def _geo(fx: dict, n: int) -> list[DemoItem]:
    places = fx["places"]
    templates = [
        ("What are the latitude and longitude of {name} in {country}?", "en", True),
        ("Give me the coordinates of {name} ({country}).", "en", True),
        ("How is {name}, {country} written in Russian, and where is it located?", "ru", True),
        ("Where exactly is {name}? I mean the one in {country}.", "en", True),
        ("I need the map position of {name} in country code {country}, with the name in Russian.", "ru", True),
    ]
    items = []
    for i, p, (tpl, lang, with_country) in _spread(places, templates, n):
        args = {"name": p["name"], "lang": lang}
        if with_country:
            args["country"] = p["country"]
        good = i % 12 != 9
        query = tpl.format(name=p["name"], country=p["country"])
        if not good:
            args = {"name": f"Atlantis {i}", "lang": "en"}
            query = f"Where on the map is the lost city of Atlantis (search {i})?"
        items.append(DemoItem("geo_coordinates", query, args, good))
    return items


def _bart(fx: dict, n: int) -> list[DemoItem]:
    stations = list(fx["stations"].items())
    templates = [
        "Are there any BART service advisories affecting {name} station right now?",
        "I'm catching a train from {name}. Any delays I should know about?",
    ]
    items = []
    for i, (code, name), tpl in _spread(stations, templates, n):
        good = i % 15 != 4
        args = {"cmd": "bsa", "orig": code if good else name.split()[0].upper()}
        items.append(DemoItem("bart_advisory", tpl.format(name=name), args, good))
    return items


_BUILDERS = {
    "forecast_weather": _weather,
    "search_places": _places,
    "geo_coordinates": _geo,
    "bart_advisory": _bart,
}


def demo_items(fixtures: dict | None = None, n: int = QUERIES_PER_API) -> dict[str, list[DemoItem]]:
    fixtures = fixtures if fixtures is not None else load_fixtures()
    return {api: build(fixtures[api], n) for api, build in _BUILDERS.items() if api in fixtures}


def trial_key(episode: int, trial: int) -> str:
    return f"e{episode}/t{trial}"


def exploration_script(
    items: dict[str, list[DemoItem]] | None = None,
    episodes: int = 15,
    trials_per_episode: int = 4,
) -> list[dict]:
    """JSON rule list driving exploration of every API in ``items``."""
    items = items if items is not None else demo_items()
    rules: list[dict] = [
        {"tag": r"^explore/", "match": r"^Observation: (?:Error: |No places found)", "response": SORRY},
        {
            "tag": r"^explore/",
            "match": r"^Observation: (?!Format error)(?P<obs>[^\n]*)",
            "response": "Thought: I now know the final answer\nFinal Answer: The tool reports: \\g<obs>",
        },
        {
            "tag": r"^explore/",
            "match": r"^Without waiting for the result",
            "response": "Thought: I now know the final answer\nFinal Answer: The request has been sent to the tool.",
        },
    ]
    for api, api_items in items.items():
        synth, act, refl = {}, {}, {}
        for k in range(1, episodes + 1):
            for t in range(1, trials_per_episode + 1):
                item = api_items[((k - 1) * trials_per_episode + t - 1) % len(api_items)]
                key = trial_key(k, t)
                synth[key] = item.query
                act[key] = item.action_text()
                refl[key] = "Yes" if item.good else "No"
        prefix = f"^explore/{re.escape(api)}/(?P<key>e\\d+/t\\d+)/"
        rules.append({"tag": prefix + "synthesize$", "match": "", "response": synth})
        rules.append({"tag": prefix + "act$", "match": r"^(?!Observation:)", "response": act})
        rules.append({"tag": prefix + "reflect$", "match": "", "response": refl})
    return rules


def predictor_script(items: dict[str, list[DemoItem]] | None = None, error_every: int = 10) -> list[dict]:
    """JSON rule list answering ICL prompts by query text.

    Every ``error_every``-th query gets a deliberately imperfect answer,
    alternating a wrong API and malformed arguments, so reports are not
    trivially perfect.
    """
    items = items if items is not None else demo_items()
    apis = sorted(items)
    replies: dict[str, str] = {}
    n = 0
    for api in apis:
        for item in items[api]:
            if not item.good:
                continue
            n += 1
            text = item.action_text()
            if error_every and n % error_every == 0:
                if (n // error_every) % 2:
                    other = apis[(apis.index(api) + 1) % len(apis)]
                    text = text.replace(f"Action: {api}", f"Action: {other}")
                else:
                    text = text.rsplit("Action Input:", 1)[0] + "Action Input: {" + ", ".join(item.arguments) + "}"
            replies[item.query] = text
    replies["*"] = "Thought: I am not sure which tool fits.\nFinal Answer: I cannot help with that."
    return [{"match": r"User Query: (?P<key>[^\n]+?)\s*$", "response": replies}]


def write_script(rules: list[dict], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(rules, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")
    return p


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="python3 -m ste.demo", description="Write offline scripted backends.")
    ap.add_argument("--out", required=True, help="directory for explore.json and predict.json")
    ap.add_argument("--episodes", type=int, default=15)
    ap.add_argument("--trials", type=int, default=4)
    ap.add_argument("--sandbox-fixtures", default=None)
    args = ap.parse_args(argv)
    items = demo_items(load_fixtures(args.sandbox_fixtures))
    out = Path(args.out)
    write_script(exploration_script(items, args.episodes, args.trials), out / "explore.json")
    write_script(predictor_script(items), out / "predict.json")
    print(out / "explore.json")
    print(out / "predict.json")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
