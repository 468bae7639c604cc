"""Wellformedness / API match / correctness scoring and query-diversity reports."""

from __future__ import annotations

import re
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from . import prompts
from .llm import Conversation, Gateway, LLMError, user
from .react import TurnParseError, parse_assistant_turn, recover_action_name
from .registry import ApiSpec, ParamClass, Registry, classify_param
from .sandbox import ToolCall

FREE_ARG_THRESHOLD = 0.6


@dataclass(frozen=True)
class Prediction:
    raw_text: str
    parsed_call: ToolCall | None = None
    wellformed: bool = False

    def __post_init__(self):
        if self.wellformed != (self.parsed_call is not None):
            raise ValueError("a prediction is wellformed exactly when it carries a parsed call")

    @classmethod
    def from_text(cls, raw_text: str) -> "Prediction":
        ok, call = is_wellformed(raw_text)
        return cls(raw_text, call, ok)


def is_wellformed(raw_text: str) -> tuple[bool, ToolCall | None]:
    try:
        turn = parse_assistant_turn(raw_text)
    except TurnParseError:
        return False, None
    if turn.call is None:
        return False, None
    return True, turn.call


def predicted_api(pred: Prediction) -> str | None:
    if pred.parsed_call is not None:
        return pred.parsed_call.api_name
    return recover_action_name(pred.raw_text)


def api_match(pred: Prediction, gold: ToolCall) -> bool:
    """Name-only comparison; does not require the arguments to parse."""
    return predicted_api(pred) == gold.api_name


class ArgJudge(Protocol):
    def same(self, query: str, param: str, gold: str, pred: str) -> bool: ...


_TOKEN = re.compile(r"\w+")


def token_jaccard(a: str, b: str) -> float:
    ta, tb = set(_TOKEN.findall(a.lower())), set(_TOKEN.findall(b.lower()))
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


@dataclass(frozen=True)
class OfflineArgJudge:
    """Token-set overlap; a deterministic stand-in for an LLM judge of free-text arguments."""

    threshold: float = FREE_ARG_THRESHOLD

    def same(self, query: str, param: str, gold: str, pred: str) -> bool:
        return token_jaccard(gold, pred) >= self.threshold


class LLMArgJudge:
    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    def same(self, query: str, param: str, gold: str, pred: str) -> bool:
        if gold.strip() == pred.strip():
            return True
        text = prompts.ARG_JUDGE.format(query=query, param=param, gold=gold, pred=pred)
        try:
            reply = self.gateway.complete(Conversation([user(text)], f"evaluate/arg/{param}")).content
        except LLMError:
            return False
        return reply.strip().lower().lstrip("\"'*`").startswith("yes")


def args_correct(pred_call: ToolCall, gold_call: ToolCall, spec: ApiSpec, judge: ArgJudge | None = None, query: str = "") -> bool:
    if spec.name != gold_call.api_name:
        raise ValueError(f"spec {spec.name!r} does not describe gold API {gold_call.api_name!r}")
    judge = judge if judge is not None else OfflineArgJudge()
    pred, gold = pred_call.arguments, gold_call.arguments
    if any(spec.param(name) is None for name in pred):
        return False
    for name, gold_value in gold.items():
        p = spec.param(name)
        if p is None:
            raise ValueError(f"gold call uses unknown parameter {name!r} of {spec.name!r}")
        if name not in pred:
            return False
        if classify_param(p) is ParamClass.STRICT:
            if pred[name].strip() != gold_value.strip():
                return False
        elif not judge.same(query, name, gold_value, pred[name]):
            return False
    for name, value in pred.items():
        if name in gold:
            continue
        p = spec.param(name)
        # extra optional argument: only its neutral default is acceptable
        if p.required or p.default is None or value.strip() != p.default.strip():
            return False
    return True


@dataclass
class Scores:
    wellformedness: float
    api_match: float
    correctness: float
    n: int

    def to_dict(self) -> dict:
        return {"wellformedness": self.wellformedness, "api_match": self.api_match, "correctness": self.correctness, "n": self.n}


@dataclass
class MetricsReport:
    wellformedness: float
    api_match: float
    correctness: float
    per_api: dict[str, Scores]
    n: int
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for v in (self.wellformedness, self.api_match, self.correctness):
            if not 0.0 <= v <= 1.0:
                raise ValueError("fractions must lie in [0, 1]")
        if self.correctness > min(self.api_match, self.wellformedness):
            raise ValueError("correctness cannot exceed api_match or wellformedness")

    def to_dict(self) -> dict:
        return {
            "wellformedness": self.wellformedness,
            "api_match": self.api_match,
            "correctness": self.correctness,
            "n": self.n,
            "per_api": {k: v.to_dict() for k, v in sorted(self.per_api.items())},
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        per_api = {k: Scores(v["wellformedness"], v["api_match"], v["correctness"], v["n"]) for k, v in d.get("per_api", {}).items()}
        return cls(d["wellformedness"], d["api_match"], d["correctness"], per_api, d["n"], list(d.get("rows", [])))


def _fractions(rows: list[dict]) -> Scores:
    n = len(rows)
    return Scores(
        sum(r["wellformed"] for r in rows) / n,
        sum(r["api_match"] for r in rows) / n,
        sum(r["correct"] for r in rows) / n,
        n,
    )


def score_one(pred: Prediction, gold: ToolCall, registry: Registry, judge: ArgJudge, query: str = "") -> dict:
    spec = registry.get(gold.api_name)
    if spec is None:
        raise KeyError(f"gold API {gold.api_name!r} is not in the registry")
    match = api_match(pred, gold)
    args_ok = bool(pred.wellformed and match and args_correct(pred.parsed_call, gold, spec, judge, query))
    return {
        "api_name": gold.api_name,
        "predicted_api": predicted_api(pred),
        "wellformed": pred.wellformed,
        "api_match": match,
        "args_correct": args_ok,
        "correct": pred.wellformed and match and args_ok,
    }


def aggregate(
    preds: Sequence[Prediction],
    golds: Sequence[ToolCall],
    registry: Registry,
    judge: ArgJudge | None = None,
    queries: Sequence[str] | None = None,
    ids: Sequence[str] | None = None,
) -> MetricsReport:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions but {len(golds)} gold calls")
    if not preds:
        raise ValueError("nothing to evaluate")
    judge = judge if judge is not None else OfflineArgJudge()
    rows = []
    for i, (p, g) in enumerate(zip(preds, golds)):
        row = score_one(p, g, registry, judge, queries[i] if queries is not None else "")
        row["index"] = i
        if ids is not None:
            row["id"] = ids[i]
        rows.append(row)
    total = _fractions(rows)
    per_api: dict[str, list[dict]] = {}
    for r in rows:
        per_api.setdefault(r["api_name"], []).append(r)
    return MetricsReport(
        total.wellformedness, total.api_match, total.correctness,
        {k: _fractions(v) for k, v in per_api.items()}, total.n, rows,
    )


def normalize_for_diversity(q: str) -> str:
    return " ".join(q.lower().split()).rstrip(" .?!;:,")


@dataclass
class DiversityReport:
    distinct_fraction: float
    n: int
    duplicates: list[dict]

    @property
    def empty(self) -> bool:
        return self.n == 0

    def to_dict(self) -> dict:
        return {"distinct_fraction": self.distinct_fraction, "n": self.n, "empty": self.empty, "duplicates": self.duplicates}


def diversity_report(queries: Sequence[str]) -> DiversityReport:
    groups: OrderedDict[str, list[str]] = OrderedDict()
    for q in queries:
        groups.setdefault(normalize_for_diversity(q), []).append(q)
    if not queries:
        return DiversityReport(1.0, 0, [])
    dups = [{"normalized": k, "count": len(v), "queries": v} for k, v in groups.items() if len(v) > 1]
    return DiversityReport(len(groups) / len(queries), len(queries), dups)
