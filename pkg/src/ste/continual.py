"""Continual-learning rounds: tool batches, per-API rehearsal, general replay, forgetting tables."""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .distill import ToolUseExample, finetune_record, jsonl, read_jsonl
from .evaluate import MetricsReport
from .store import atomic_write, dumps

log = logging.getLogger(__name__)

SOURCES = ("new", "rehearsal", "general")


def make_batches(apis: Sequence[str], n_batches: int, seed: int | str = 0) -> list[list[str]]:
    """Seeded partition into ``n_batches`` consecutive batches whose sizes differ by at most one."""
    apis = list(apis)
    if len(set(apis)) != len(apis):
        raise ValueError("API names must be unique")
    if not 1 <= n_batches <= len(apis):
        raise ValueError(f"n_batches must be between 1 and {len(apis)}, got {n_batches}")
    random.Random(f"{seed}:batches").shuffle(apis)
    base, extra = divmod(len(apis), n_batches)
    out, start = [], 0
    for b in range(n_batches):
        size = base + (1 if b < extra else 0)
        out.append(apis[start:start + size])
        start += size
    return out


def rehearsal_count(fraction: float, n: int) -> int:
    # round first so 0.1 * 140 = 14.000000000000002 does not ceil to 15
    return min(n, math.ceil(round(fraction * n, 9)))


def rehearsal_sample(
    prior: Mapping[str, Sequence[str]],
    fraction: float,
    seed: int | str = 0,
) -> tuple[dict[str, list[str]], list[str]]:
    """Per prior API, ceil(fraction x size) ids without replacement. Also returns APIs with empty sets."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    picked: dict[str, list[str]] = {}
    empty = []
    for api in sorted(prior):
        ids = list(prior[api])
        if not ids:
            empty.append(api)
            picked[api] = []
            continue
        rng = random.Random(f"{seed}:{api}")
        idx = sorted(rng.sample(range(len(ids)), rehearsal_count(fraction, len(ids))))
        picked[api] = [ids[i] for i in idx]
    return picked, empty


@dataclass
class RoundPlan:
    round_index: int
    new_apis: list[str]
    rehearsal: dict[str, list[str]]
    general_replay_count: int
    output_dataset: str = ""
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "new_apis": self.new_apis,
            "rehearsal": self.rehearsal,
            "general_replay_count": self.general_replay_count,
            "output_dataset": self.output_dataset,
            "warnings": self.warnings,
        }


def _record(example: ToolUseExample, source: str) -> dict:
    r = finetune_record(example)
    r["id"] = example.id
    r["cl_source"] = source
    return r


def compose_round(
    round_index: int,
    batches: Sequence[Sequence[str]],
    train_sets: Mapping[str, Sequence[ToolUseExample]],
    general_pool: Sequence[dict],
    general_count: int,
    fraction: float,
    seed: int | str = 0,
) -> tuple[RoundPlan, list[dict]]:
    """Dataset for one round (1-based): the new batch, rehearsal from all prior batches, general replay."""
    if not 1 <= round_index <= len(batches):
        raise ValueError(f"round_index must be between 1 and {len(batches)}")
    if general_count < 0:
        raise ValueError("general_count must be >= 0")
    new_apis = list(batches[round_index - 1])
    prior_apis = [a for b in batches[: round_index - 1] for a in b]
    for api in new_apis + prior_apis:
        if api not in train_sets:
            raise KeyError(f"no train set for API {api!r}")
    warnings = []
    records = [_record(e, "new") for api in new_apis for e in train_sets[api]]

    by_id = {api: {e.id: e for e in train_sets[api]} for api in prior_apis}
    picked, empty = rehearsal_sample({a: [e.id for e in train_sets[a]] for a in prior_apis}, fraction, f"{seed}:round{round_index}")
    warnings += [f"API {a!r} has an empty train set; no rehearsal examples" for a in empty]
    for api in sorted(picked):
        records += [_record(by_id[api][i], "rehearsal") for i in picked[api]]

    count = general_count
    if count > len(general_pool):
        warnings.append(f"general pool has {len(general_pool)} records; clamped from {general_count}")
        count = len(general_pool)
    rng = random.Random(f"{seed}:round{round_index}:general")
    for i in sorted(rng.sample(range(len(general_pool)), count)):
        g = dict(general_pool[i])
        g.setdefault("id", f"general:{i}")
        g["cl_source"] = "general"
        records.append(g)
    for w in warnings:
        log.warning("round %d: %s", round_index, w)
    plan = RoundPlan(round_index, new_apis, picked, count, warnings=warnings)
    return plan, records


def plan_rounds(
    batches: Sequence[Sequence[str]],
    train_sets: Mapping[str, Sequence[ToolUseExample]],
    general_pool: Sequence[dict],
    general_count: int,
    fraction: float,
    seed: int | str,
    out_dir: str | Path,
) -> list[RoundPlan]:
    """Compose and write every round: ``round-<r>.jsonl`` plus ``round-<r>.plan.json``."""
    out = Path(out_dir)
    plans = []
    for r in range(1, len(batches) + 1):
        plan, records = compose_round(r, batches, train_sets, general_pool, general_count, fraction, seed)
        data = out / f"round-{r}.jsonl"
        atomic_write(data, jsonl(records))
        plan.output_dataset = data.name
        atomic_write(out / f"round-{r}.plan.json", dumps(plan.to_dict()))
        plans.append(plan)
    atomic_write(out / "batches.json", dumps([list(b) for b in batches]))
    return plans


def load_general_pool(path: str | Path | None) -> list[dict]:
    return read_jsonl(path) if path else []


def _correctness(cell) -> float:
    if isinstance(cell, MetricsReport):
        return cell.correctness
    if isinstance(cell, Mapping):
        return float(cell["correctness"])
    return float(cell)


def forgetting_report(metrics: Mapping[tuple[int, int], MetricsReport | Mapping | float]) -> dict:
    """Per batch: correctness per round and its change since the round the batch was introduced.

    The introduction round of batch ``b`` is round ``b`` when present, else the
    earliest evaluated round. Rounds missing between that and the last
    evaluated round are listed as gaps.
    """
    rounds = sorted({r for r, _ in metrics})
    table: dict[str, dict] = {}
    for b in sorted({b for _, b in metrics}):
        cells = {r: _correctness(metrics[(r, b)]) for r in rounds if (r, b) in metrics}
        intro = b if b in cells else min(cells)
        base = cells[intro]
        table[str(b)] = {
            "introduced": intro,
            "correctness": {str(r): v for r, v in cells.items()},
            "delta": {str(r): round(v - base, 10) for r, v in cells.items() if r >= intro},
            "gaps": [r for r in range(intro, rounds[-1] + 1) if r not in cells],
        }
    return {"rounds": rounds, "batches": table}


_CELL = re.compile(r"round[-_]?(\d+)[-_.]*batch[-_]?(\d+)", re.IGNORECASE)


def load_metrics_dir(path: str | Path) -> dict[tuple[int, int], MetricsReport | Mapping]:
    """Read ``round-<r>-batch-<b>.json`` files (MetricsReport JSON or ``{"correctness": x}``)."""
    cells = {}
    for f in sorted(Path(path).glob("*.json")):
        m = _CELL.search(f.stem)
        if not m:
            continue
        doc = json.loads(f.read_text(encoding="utf-8"))
        key = (int(m.group(1)), int(m.group(2)))
        cells[key] = MetricsReport.from_dict(doc) if "per_api" in doc else doc
    if not cells:
        raise ValueError(f"no round-<r>-batch-<b>.json files in {path}")
    return cells
