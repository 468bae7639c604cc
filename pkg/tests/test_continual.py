from __future__ import annotations

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ste.continual import (
    compose_round,
    forgetting_report,
    load_metrics_dir,
    make_batches,
    plan_rounds,
    rehearsal_count,
    rehearsal_sample,
)
from ste.distill import ToolUseExample
from ste.evaluate import MetricsReport
from ste.sandbox import ToolCall

# correctness per (round, batch) without rehearsal, and the deltas worked out by hand
NO_REHEARSAL = {
    (1, 1): 80.6,
    (2, 1): 1.7, (2, 2): 87.7,
    (3, 1): 0.0, (3, 2): 56.9, (3, 3): 68.9,
    (4, 1): 0.0, (4, 2): 38.5, (4, 3): 25.0, (4, 4): 71.8,
}
NO_REHEARSAL_DELTAS = {
    "1": {"1": 0.0, "2": -78.9, "3": -80.6, "4": -80.6},
    "2": {"2": 0.0, "3": -30.8, "4": -49.2},
    "3": {"3": 0.0, "4": -43.9},
    "4": {"4": 0.0},
}


def train_set(api: str, n: int) -> list[ToolUseExample]:
    return [
        ToolUseExample.create(api, f"{api} question {i}", ToolCall(api, {"i": str(i)}), "result", "answer")
        for i in range(n)
    ]


def general_pool(n: int) -> list[dict]:
    return [{"prompt": f"general {i}", "target": "t"} for i in range(n)]


class TestBatches:
    def test_fifty_apis_in_four(self):
        apis = [f"api{i}" for i in range(50)]
        batches = make_batches(apis, 4, seed=0)
        assert [len(b) for b in batches] == [13, 13, 12, 12]
        assert sorted(a for b in batches for a in b) == sorted(apis)

    def test_seeded(self):
        apis = [f"api{i}" for i in range(10)]
        assert make_batches(apis, 3, 1) == make_batches(apis, 3, 1)
        assert make_batches(apis, 3, 1) != make_batches(apis, 3, 2)

    @pytest.mark.parametrize("n", [0, 5])
    def test_bad_count(self, n):
        with pytest.raises(ValueError):
            make_batches(["a", "b", "c", "d"], n)

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            make_batches(["a", "a"], 1)

    @given(st.integers(1, 80), st.data())
    def test_partition(self, n, data):
        apis = [f"api{i}" for i in range(n)]
        k = data.draw(st.integers(1, n))
        batches = make_batches(apis, k)
        sizes = [len(b) for b in batches]
        assert max(sizes) - min(sizes) <= 1
        assert sorted(a for b in batches for a in b) == sorted(apis)


class TestRehearsal:
    @pytest.mark.parametrize("f, n, k", [(0.1, 140, 14), (0.1, 141, 15), (0.1, 5, 1), (1.0, 7, 7), (0.3, 10, 3)])
    def test_counts(self, f, n, k):
        assert rehearsal_count(f, n) == k

    @given(st.floats(0.01, 1.0), st.integers(1, 500))
    def test_ceil_bounds(self, f, n):
        k = rehearsal_count(f, n)
        assert 1 <= k <= n
        assert k >= f * n - 1e-6
        assert k - 1 < f * n + 1e-6

    def test_sample_without_replacement(self):
        picked, empty = rehearsal_sample({"a": [f"id{i}" for i in range(140)], "b": []}, 0.1, seed=0)
        assert len(picked["a"]) == len(set(picked["a"])) == 14
        assert empty == ["b"]

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            rehearsal_sample({"a": ["x"]}, 0.0)


@pytest.fixture
def setup():
    apis = [f"api{i}" for i in range(8)]
    batches = make_batches(apis, 4, seed=0)
    return batches, {a: train_set(a, 140) for a in apis}


class TestRounds:
    def test_round_one_has_no_rehearsal(self, setup):
        batches, train = setup
        plan, records = compose_round(1, batches, train, general_pool(50), 20, 0.1)
        assert plan.rehearsal == {}
        assert {r["cl_source"] for r in records} == {"new", "general"}

    def test_each_prior_api_gets_fourteen(self, setup):
        batches, train = setup
        for r in range(2, 5):
            plan, records = compose_round(r, batches, train, general_pool(50), 20, 0.1)
            prior = [a for b in batches[: r - 1] for a in b]
            assert sorted(plan.rehearsal) == sorted(prior)
            assert all(len(ids) == 14 for ids in plan.rehearsal.values())
            rehearsed = [x for x in records if x["cl_source"] == "rehearsal"]
            assert len(rehearsed) == 14 * len(prior)

    def test_partition_by_source(self, setup):
        batches, train = setup
        plan, records = compose_round(3, batches, train, general_pool(50), 20, 0.1)
        new = [r for r in records if r["cl_source"] == "new"]
        general = [r for r in records if r["cl_source"] == "general"]
        rehearsal = [r for r in records if r["cl_source"] == "rehearsal"]
        assert len(new) + len(general) + len(rehearsal) == len(records)
        assert len(new) == 140 * len(batches[2])
        assert len(general) == plan.general_replay_count == 20
        assert {r["api_name"] for r in new} == set(batches[2])
        assert len({r["id"] for r in records}) == len(records)

    def test_general_clamped(self, setup):
        batches, train = setup
        plan, records = compose_round(1, batches, train, general_pool(5), 2000, 0.1)
        assert plan.general_replay_count == 5
        assert plan.warnings

    def test_rehearsal_resampled_per_round(self, setup):
        batches, train = setup
        p2, _ = compose_round(2, batches, train, [], 0, 0.1, seed=0)
        p3, _ = compose_round(3, batches, train, [], 0, 0.1, seed=0)
        api = batches[0][0]
        assert p2.rehearsal[api] != p3.rehearsal[api]

    def test_missing_train_set(self, setup):
        batches, train = setup
        del train[batches[0][0]]
        with pytest.raises(KeyError):
            compose_round(2, batches, train, [], 0, 0.1)

    def test_bad_round(self, setup):
        batches, train = setup
        with pytest.raises(ValueError):
            compose_round(5, batches, train, [], 0, 0.1)

    def test_byte_identical_reemission(self, setup, tmp_path):
        batches, train = setup
        plan_rounds(batches, train, general_pool(30), 10, 0.1, 7, tmp_path / "a")
        plan_rounds(batches, train, general_pool(30), 10, 0.1, 7, tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


class TestForgetting:
    def test_reference_cells(self):
        table = forgetting_report(NO_REHEARSAL)
        assert table["rounds"] == [1, 2, 3, 4]
        for b, deltas in NO_REHEARSAL_DELTAS.items():
            assert table["batches"][b]["delta"] == deltas
            assert table["batches"][b]["introduced"] == int(b)
            assert table["batches"][b]["gaps"] == []

    def test_batch_one_correctness_trail(self):
        cells = forgetting_report(NO_REHEARSAL)["batches"]["1"]["correctness"]
        assert list(cells.values()) == [80.6, 1.7, 0.0, 0.0]

    def test_gaps(self):
        table = forgetting_report({(1, 1): 0.5, (3, 1): 0.4})
        assert table["batches"]["1"]["gaps"] == [2]

    def test_introduction_falls_back_to_earliest(self):
        table = forgetting_report({(2, 1): 0.5, (3, 1): 0.25})
        assert table["batches"]["1"]["introduced"] == 2
        assert table["batches"]["1"]["delta"] == {"2": 0.0, "3": -0.25}

    def test_accepts_reports(self):
        r = MetricsReport(1.0, 1.0, 0.5, {}, 2)
        assert forgetting_report({(1, 1): r, (2, 1): {"correctness": 0.25}})["batches"]["1"]["delta"]["2"] == -0.25

    def test_load_metrics_dir(self, tmp_path):
        (tmp_path / "round-1-batch-1.json").write_text(json.dumps({"correctness": 0.8}))
        (tmp_path / "round-2-batch-1.json").write_text(
            json.dumps(MetricsReport(1.0, 1.0, 0.5, {}, 2).to_dict())
        )
        (tmp_path / "notes.json").write_text("{}")
        cells = load_metrics_dir(tmp_path)
        assert set(cells) == {(1, 1), (2, 1)}
        assert isinstance(cells[(2, 1)], MetricsReport)

    def test_empty_metrics_dir(self, tmp_path):
        with pytest.raises(ValueError):
            load_metrics_dir(tmp_path)

    @given(st.dictionaries(st.tuples(st.integers(1, 5), st.integers(1, 5)), st.floats(0, 100), min_size=1))
    def test_delta_is_difference_from_introduction(self, cells):
        table = forgetting_report(cells)
        for b, row in table["batches"].items():
            base = cells[(row["introduced"], int(b))]
            for r, d in row["delta"].items():
                assert math.isclose(d, cells[(int(r), int(b))] - base, abs_tol=1e-9)
