from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import scripted
from ste.demo import exploration_script
from ste.explorer import (
    NO_QUERY,
    Ablation,
    ExplorationConfig,
    explore_api,
    parse_reflection,
    synthesize_query,
    trial_record,
)
from ste.llm import Gateway, ScriptedBackend, ScriptRule, TransportError
from ste.memory import LongTermMemory
from ste.react import StepKind
from ste.store import RunStore


class FailAt:
    """Wraps a backend and raises a transport error for one tag."""

    def __init__(self, inner, tag: str):
        self.inner = inner
        self.tag = tag

    def generate(self, conv):
        if conv.tag == self.tag:
            raise TransportError("connection reset")
        return self.inner.generate(conv)


def explore(registry, sandbox, gateway, api="forecast_weather", store=None, **cfg):
    return explore_api(registry[api], ExplorationConfig(**cfg), gateway, sandbox, store)


class TestConfig:
    def test_defaults(self):
        cfg = ExplorationConfig()
        assert (cfg.episodes, cfg.trials_per_episode, cfg.max_calls, cfg.total_trials) == (15, 4, 4, 60)

    @given(st.integers(1, 500), st.integers(1, 10))
    def test_preserving_total(self, total, tpe):
        cfg = ExplorationConfig.preserving_total(total, tpe)
        assert cfg.total_trials >= total
        assert cfg.total_trials - total < tpe

    def test_dict_roundtrip(self):
        cfg = ExplorationConfig(episodes=3, ablations={"NO_STM", Ablation.NO_LTM})
        assert ExplorationConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("field", ["episodes", "trials_per_episode", "max_calls"])
    def test_positive(self, field):
        with pytest.raises(ValueError):
            ExplorationConfig(**{field: 0})


class TestParsing:
    @pytest.mark.parametrize(
        "reply, query",
        [
            ("What is the weather in Oslo?", "What is the weather in Oslo?"),
            ('User Query: "Weather in Oslo?"', "Weather in Oslo?"),
            ("  synthesized user query: Oslo rain  ", "Oslo rain"),
        ],
    )
    def test_synthesize_query(self, reply, query):
        assert synthesize_query(reply) == query

    def test_empty_query(self):
        with pytest.raises(ValueError):
            synthesize_query('User Query: ""')

    @pytest.mark.parametrize(
        "reply, verdict",
        [("Yes", True), ("yes, it worked", True), ("**Yes**", True), ("No", False), ("Yesterday", False), ("", False)],
    )
    def test_reflection(self, reply, verdict):
        assert parse_reflection(reply) is verdict


class TestDefaults:
    def test_sixty_trials_and_ltm(self, registry, sandbox, explore_gateway):
        run = explore(registry, sandbox, explore_gateway)
        assert len(run.trials) == 60
        assert len(run.ltm_final) == 60
        assert [k for k, _ in run.episodes] == list(range(1, 16))
        assert not run.partial

    def test_stm_never_crosses_episodes(self, registry, sandbox, explore_gateway):
        run = explore(registry, sandbox, explore_gateway)
        for _, trials in run.episodes:
            assert [t.prompt_stats["act_replayed_trials"] for t in trials] == [0, 1, 2, 3]

    def test_ltm_snapshot_per_episode(self, registry, sandbox, explore_gateway):
        run = explore(registry, sandbox, explore_gateway)
        for k, trials in run.episodes:
            assert {t.prompt_stats["synthesize_ltm_lines"] for t in trials} == {4 * (k - 1)}
            assert not any(t.prompt_stats["act_has_ltm"] for t in trials)

    def test_ltm_mirrors_reflections(self, registry, sandbox, explore_gateway):
        run = explore(registry, sandbox, explore_gateway)
        assert [e.query for e in run.ltm_final.entries] == [t.query for t in run.trials]
        assert [e.success for e in run.ltm_final.entries] == [bool(t.reflection) for t in run.trials]

    def test_budget_respected(self, registry, sandbox):
        action = 'Action: forecast_weather\nAction Input: {"location": "Paris", "days": "1"}'
        gw = scripted(
            ScriptRule("", "Weather in Paris?", tag="synthesize$"),
            ScriptRule("", "Yes", tag="reflect$"),
            ScriptRule("maximum number of API calls", "Final Answer: clear"),
            ScriptRule("", action, tag="act$"),
        )
        run = explore(registry, sandbox, gw, episodes=2, max_calls=3)
        assert all(t.api_calls_used == 3 for t in run.trials)
        assert all(t.final_answer == "clear" for t in run.trials)

    def test_initial_ltm_seeds_first_synthesis(self, registry, sandbox, explore_gateway):
        seed = LongTermMemory()
        seed.append("earlier query", True)
        run = explore_api(registry["forecast_weather"], ExplorationConfig(episodes=2), explore_gateway, sandbox,
                          initial_ltm=seed)
        assert run.trials[0].prompt_stats["synthesize_ltm_lines"] == 1
        assert len(run.ltm_final) == 9


class TestFailures:
    def test_failed_synthesis_still_enters_ltm(self, registry, sandbox):
        gw = scripted(ScriptRule("", '""', tag="synthesize$"))
        run = explore(registry, sandbox, gw, episodes=1)
        assert len(run.trials) == 4
        assert all(t.failed for t in run.trials)
        assert [e.query for e in run.ltm_final.entries] == [NO_QUERY] * 4
        assert not any(e.success for e in run.ltm_final.entries)

    def test_hard_failure_marks_partial_and_resumes(self, registry, sandbox, items, tmp_path):
        rules = exploration_script(items)
        broken = Gateway(FailAt(ScriptedBackend.from_json(rules), "explore/forecast_weather/e3/t2/act"),
                         retries=1, sleep=lambda s: None)
        store = RunStore.open_or_create(tmp_path, "r", {"x": 1})
        run = explore(registry, sandbox, broken, store=store)
        assert run.partial
        assert store.completed_episodes("forecast_weather") == [1, 2]
        assert store.manifest["apis"]["forecast_weather"]["status"] == "partial"

        resumed = explore(registry, sandbox, Gateway(ScriptedBackend.from_json(rules)), store=store)
        assert not resumed.partial
        assert store.manifest["apis"]["forecast_weather"]["status"] == "complete"
        fresh = explore(registry, sandbox, Gateway(ScriptedBackend.from_json(rules)))
        assert [trial_record(t) for t in resumed.trials] == [trial_record(t) for t in fresh.trials]
        assert resumed.ltm_final == fresh.ltm_final


class TestAblations:
    def test_no_stm(self, registry, sandbox, explore_gateway):
        run = explore(registry, sandbox, explore_gateway, episodes=3, ablations={Ablation.NO_STM})
        assert all(t.prompt_stats["act_replayed_trials"] == 0 for t in run.trials)

    def test_no_ltm(self, registry, sandbox, items):
        cfg = ExplorationConfig.preserving_total(60, 1, ablations={Ablation.NO_LTM})
        gw = Gateway(ScriptedBackend.from_json(exploration_script(items, cfg.episodes, 1)))
        run = explore_api(registry["geo_coordinates"], cfg, gw, sandbox)
        assert len(run.trials) == 60
        assert len(run.ltm_final) == 0
        assert all(t.prompt_stats["synthesize_ltm_lines"] == 0 for t in run.trials)

    def test_no_feedback(self, registry, sandbox, explore_gateway):
        run = explore(registry, sandbox, explore_gateway, episodes=2, ablations={Ablation.NO_FEEDBACK})
        assert all(t.api_calls_used <= 1 for t in run.trials)
        for t in run.trials:
            # the observation is recorded but never shown to the model
            assert not any(m.content.startswith("Observation:") for m in t.transcript)

    def test_no_reflection(self, registry, sandbox, explore_gateway):
        run = explore(registry, sandbox, explore_gateway, episodes=2, ablations={Ablation.NO_REFLECTION})
        assert {e.success for e in run.ltm_final.entries} == {True}
        assert all(t.reflection is None for t in run.trials)


def test_observation_follows_every_action(registry, sandbox, explore_gateway):
    run = explore(registry, sandbox, explore_gateway, api="search_places")
    for t in run.trials:
        kinds = [s.kind for s in t.steps]
        for i, k in enumerate(kinds):
            if k is StepKind.ACTION:
                assert kinds[i + 1] is StepKind.OBSERVATION
