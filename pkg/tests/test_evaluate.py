from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cases import (
    ADVISORY_GOLD,
    ADVISORY_PRED_TEXT,
    ADVISORY_QUERY,
    PLACES_GOLD,
    PLACES_PRED_TEXT,
    PLACES_QUERY,
    SYDNEY_GOLD,
    SYDNEY_PRED_TEXT,
    SYDNEY_QUERY,
    WEATHER_GOLD,
    WEATHER_PRED_TEXT,
)
from conftest import DATA, scripted
from ste.evaluate import (
    LLMArgJudge,
    MetricsReport,
    OfflineArgJudge,
    Prediction,
    aggregate,
    api_match,
    args_correct,
    diversity_report,
    normalize_for_diversity,
    token_jaccard,
)
from ste.llm import ScriptRule
from ste.sandbox import ToolCall


def pred(text: str) -> Prediction:
    return Prediction.from_text(text)


class TestHandScored:
    """Each row scored by hand from the rules before running the code."""

    def test_three_example_set(self, registry):
        report = aggregate(
            [pred(PLACES_PRED_TEXT), pred(SYDNEY_PRED_TEXT), pred(WEATHER_PRED_TEXT)],
            [PLACES_GOLD, SYDNEY_GOLD, WEATHER_GOLD],
            registry,
            queries=[PLACES_QUERY, SYDNEY_QUERY, "weather"],
        )
        assert report.wellformedness == 3 / 3
        assert report.api_match == 2 / 3
        assert report.correctness == 1 / 3
        assert [r["correct"] for r in report.rows] == [False, False, True]
        assert report.rows[0]["predicted_api"] == "Geographic coordinates by placename"

    def test_wrong_station_code(self, registry):
        report = aggregate([pred(ADVISORY_PRED_TEXT)], [ADVISORY_GOLD], registry, queries=[ADVISORY_QUERY])
        assert (report.wellformedness, report.api_match, report.correctness) == (1.0, 1.0, 0.0)


class TestArguments:
    def test_strict_exact_after_trim(self, registry):
        spec = registry["bart_advisory"]
        assert args_correct(ToolCall("bart_advisory", {"cmd": " bsa ", "orig": "UCTY"}), ADVISORY_GOLD, spec)
        assert not args_correct(ToolCall("bart_advisory", {"cmd": "bsa", "orig": "ucty"}), ADVISORY_GOLD, spec)

    def test_free_uses_judge(self, registry):
        spec = registry["search_places"]
        close = ToolCall("search_places", {"query": "San Francisco parks with hiking trails"})
        far = ToolCall("search_places", {"query": "restaurants in Oakland"})
        assert args_correct(close, PLACES_GOLD, spec)
        assert not args_correct(far, PLACES_GOLD, spec)

    def test_extra_optional_only_at_default(self, registry):
        spec = registry["geo_coordinates"]
        gold = ToolCall("geo_coordinates", {"name": "Oslo", "lang": "en"})
        assert args_correct(ToolCall("geo_coordinates", {"name": "Oslo", "lang": "en", "country": ""}), gold, spec)
        assert not args_correct(ToolCall("geo_coordinates", {"name": "Oslo", "lang": "en", "country": "NO"}), gold, spec)

    def test_unknown_pred_parameter(self, registry):
        spec = registry["geo_coordinates"]
        bad = ToolCall("geo_coordinates", {"name": "Sydney", "country": "CA", "lang": "en", "zoom": "3"})
        assert not args_correct(bad, SYDNEY_GOLD, spec)

    def test_spec_must_match_gold(self, registry):
        with pytest.raises(ValueError):
            args_correct(WEATHER_GOLD, SYDNEY_GOLD, registry["forecast_weather"])

    def test_llm_judge(self, registry):
        gw = scripted(ScriptRule("", "Yes, same meaning."))
        spec = registry["search_places"]
        other = ToolCall("search_places", {"query": "hikes in SF parks"})
        assert args_correct(other, PLACES_GOLD, spec, LLMArgJudge(gw), PLACES_QUERY)
        assert "hikes in SF parks" in gw.call_log[0].conversation[0].content

    def test_llm_judge_failure_means_no(self):
        assert not LLMArgJudge(scripted(ScriptRule("never", "x"))).same("q", "p", "a", "b")

    @pytest.mark.parametrize("a, b, j", [("a b", "a b", 1.0), ("a b", "b c", 1 / 3), ("", "", 1.0), ("x", "", 0.0)])
    def test_jaccard(self, a, b, j):
        assert token_jaccard(a, b) == pytest.approx(j)

    def test_threshold(self):
        assert OfflineArgJudge().same("", "", "a b c d e", "a b c")
        assert not OfflineArgJudge().same("", "", "a b c d e", "a b")


class TestIndependence:
    def test_api_match_without_wellformed_args(self):
        p = pred('Action: geo_coordinates\nAction Input: [{"name": "Sydney", "country": "CA"}')
        assert not p.wellformed
        assert api_match(p, SYDNEY_GOLD)

    def test_prediction_invariant(self):
        with pytest.raises(ValueError):
            Prediction("x", None, True)

    def test_final_answer_only_is_not_wellformed(self):
        assert not pred("Final Answer: hello").wellformed


class TestReport:
    def test_per_api_breakdown(self, registry):
        report = aggregate(
            [pred(WEATHER_PRED_TEXT), pred("nonsense"), pred(SYDNEY_PRED_TEXT)],
            [WEATHER_GOLD, WEATHER_GOLD, SYDNEY_GOLD],
            registry,
            ids=["a", "b", "c"],
        )
        assert report.per_api["forecast_weather"].correctness == 0.5
        assert report.per_api["geo_coordinates"].api_match == 1.0
        assert [r["id"] for r in report.rows] == ["a", "b", "c"]

    def test_dict_roundtrip(self, registry):
        report = aggregate([pred(WEATHER_PRED_TEXT)], [WEATHER_GOLD], registry)
        assert MetricsReport.from_dict(report.to_dict()) == report

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            MetricsReport(0.5, 0.5, 0.6, {}, 2)

    def test_errors(self, registry):
        with pytest.raises(ValueError):
            aggregate([], [], registry)
        with pytest.raises(ValueError):
            aggregate([pred("x")], [], registry)
        with pytest.raises(KeyError):
            aggregate([pred("x")], [ToolCall("nope", {})], registry)


_names = st.sampled_from(["forecast_weather", "search_places", "geo_coordinates", "bart_advisory", "other"])
_values = st.sampled_from(["Paris", "1", "en", "CA", "bsa", "UCTY", "parks", ""])


@st.composite
def pred_texts(draw):
    name = draw(_names)
    keys = draw(st.lists(st.sampled_from(["location", "days", "query", "name", "lang", "cmd", "orig", "x"]),
                         max_size=3, unique=True))
    body = ", ".join(f'"{k}": "{draw(_values)}"' for k in keys)
    shape = draw(st.sampled_from(["ok", "list", "broken", "none"]))
    arg = {"ok": "{" + body + "}", "list": "[{" + body + "}]", "broken": "{" + body, "none": ""}[shape]
    return f"Action: {name}\nAction Input: {arg}" if shape != "none" else f"Thought: {name}"


def _gold(registry, api, draw):
    spec = registry[api]
    args = {p.name: draw(st.sampled_from(list(p.allowed_values) if p.allowed_values else ["Paris", "1", "parks"]))
            for p in spec.required_parameters}
    return ToolCall(api, args)


@given(st.data())
def test_correctness_never_exceeds_components(registry, data):
    n = data.draw(st.integers(1, 8))
    preds = [pred(data.draw(pred_texts())) for _ in range(n)]
    golds = [_gold(registry, data.draw(_names.filter(lambda a: a != "other")), data.draw) for _ in range(n)]
    r = aggregate(preds, golds, registry)
    assert r.correctness <= min(r.api_match, r.wellformedness)
    for row in r.rows:
        assert row["correct"] == (row["wellformed"] and row["api_match"] and row["args_correct"])


class TestDiversity:
    def test_reference_queries_all_distinct(self):
        queries = (DATA / "forecast_queries_full_memory.txt").read_text(encoding="utf-8").splitlines()
        report = diversity_report([q for q in queries if q.strip()])
        assert report.n == 60
        assert report.distinct_fraction == 1.0
        assert report.duplicates == []

    def test_constructed_list(self):
        base = [f"What is the weather in city number {i}?" for i in range(43)]
        # 17 near-copies differing only in case, spacing or trailing punctuation
        dupes = [base[i].upper().rstrip("?") + " !" if i % 2 else "  " + base[i].lower() for i in range(17)]
        report = diversity_report(base + dupes)
        assert report.n == 60
        assert report.distinct_fraction == pytest.approx(43 / 60)
        assert abs(report.distinct_fraction - 0.717) <= 0.001
        assert len(report.duplicates) == 17

    def test_empty(self):
        r = diversity_report([])
        assert r.empty and r.distinct_fraction == 1.0

    @given(st.lists(st.text(max_size=10), max_size=30))
    def test_bounds(self, qs):
        r = diversity_report(qs)
        assert 0 < r.distinct_fraction <= 1
        assert r.distinct_fraction * len(qs) == pytest.approx(len({normalize_for_diversity(q) for q in qs}))
