"""Exploitation: turn exploration trials into filtered, paraphrased, split datasets."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Protocol, Sequence

from . import prompts
from .llm import Conversation, Gateway, LLMError, assistant, user
from .react import StepKind, Trial
from .registry import Registry, render_documentation
from .sandbox import ToolCall
from .store import atomic_write

log = logging.getLogger(__name__)

MAX_PARAPHRASE_RETRIES = 3
RESPONSE_MARKER = "\n### Response:\n"


class Origin(str, Enum):
    EXPLORED = "EXPLORED"
    PARAPHRASED = "PARAPHRASED"


def example_id(api_name: str, query: str, call: ToolCall) -> str:
    payload = json.dumps([api_name, query, call.to_dict()], sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ToolUseExample:
    id: str
    api_name: str
    query: str
    call: ToolCall
    execution_result: str
    response: str
    origin: Origin = Origin.EXPLORED
    parent: str | None = None

    def __post_init__(self):
        if self.call.api_name != self.api_name:
            raise ValueError(f"call names {self.call.api_name!r} but the example is for {self.api_name!r}")
        if not self.response.strip():
            raise ValueError("example response must be non-empty")
        if (self.origin is Origin.PARAPHRASED) != (self.parent is not None):
            raise ValueError("exactly the paraphrased examples carry a parent id")

    @classmethod
    def create(cls, api_name: str, query: str, call: ToolCall, execution_result: str, response: str,
               parent: str | None = None) -> "ToolUseExample":
        origin = Origin.PARAPHRASED if parent is not None else Origin.EXPLORED
        return cls(example_id(api_name, query, call), api_name, query, call, execution_result, response, origin, parent)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "api_name": self.api_name,
            "query": self.query,
            "call": self.call.to_dict(),
            "execution_result": self.execution_result,
            "response": self.response,
            "origin": self.origin.value,
            "parent": self.parent,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ToolUseExample":
        return cls(
            d["id"], d["api_name"], d["query"], ToolCall.from_dict(d["call"]), d["execution_result"],
            d["response"], Origin(d.get("origin", "EXPLORED")), d.get("parent"),
        )


def extract_example(trial: Trial) -> ToolUseExample | None:
    """Last executed call, its observation, and the final answer; None when any is missing."""
    if not trial.final_answer or not trial.final_answer.strip() or not trial.query:
        return None
    steps = trial.steps
    for i in range(len(steps) - 1, -1, -1):
        if steps[i].kind is StepKind.ACTION:
            obs = next((s for s in steps[i + 1:] if s.kind is StepKind.OBSERVATION), None)
            if obs is None:
                return None
            call = steps[i].call
            if call.api_name != trial.target_api:
                return None
            return ToolUseExample.create(trial.target_api, trial.query, call, obs.observation.body, trial.final_answer.strip())
    return None


@dataclass(frozen=True)
class JudgeVerdict:
    informative: bool
    faithful: bool
    appropriate: bool
    explanations: tuple[str, str, str] = ("", "", "")

    @property
    def passed(self) -> bool:
        return self.informative and self.faithful and self.appropriate

    @classmethod
    def unavailable(cls) -> "JudgeVerdict":
        return cls(False, False, False, ("judge unavailable",) * 3)

    def to_dict(self) -> dict:
        return {
            "informative": self.informative,
            "faithful": self.faithful,
            "appropriate": self.appropriate,
            "explanations": list(self.explanations),
        }


_VERDICT_LINE = re.compile(r"^\s*\(?([123])[).:]\s*\**\s*(yes|no)\b\**[.,:;]?\s*(.*)$", re.IGNORECASE)


def parse_verdict(text: str) -> JudgeVerdict:
    """Parse the three-line ``N) Yes/No. reason`` format; an unparsable aspect counts as No."""
    found: dict[int, tuple[bool, str]] = {}
    for line in text.splitlines():
        m = _VERDICT_LINE.match(line)
        if m and int(m.group(1)) not in found:
            found[int(m.group(1))] = (m.group(2).lower() == "yes", m.group(3).strip())
    flags = [found.get(i, (False, "unparsable judgment"))[0] for i in (1, 2, 3)]
    notes = tuple(found.get(i, (False, "unparsable judgment"))[1] for i in (1, 2, 3))
    return JudgeVerdict(*flags, explanations=notes)  # type: ignore[arg-type]


def render_chain(example: ToolUseExample) -> str:
    return (
        f"Action: {example.call.api_name}\nAction Input: {example.call.arguments_json()}\n"
        f"Observation: {example.execution_result}"
    )


class Judge(Protocol):
    def judge(self, example: ToolUseExample) -> JudgeVerdict: ...


_APOLOGY = re.compile(
    r"\b(sorry|apologi[sz]e|unfortunately|unable|cannot|can't|could not|couldn't|not able|no results|"
    r"not available|failed)\b",
    re.IGNORECASE,
)
_NUMBER = re.compile(r"\d+(?:[.,:]\d+)*")


def _names(text: str) -> list[str]:
    """Capitalized words that do not start a sentence."""
    out = []
    for m in re.finditer(r"([.!?:]\s+|^|\n)?\b([A-Z][\w'-]*)", text):
        if m.group(1) is None and m.group(2) != "I":
            out.append(m.group(2))
    return out


class HeuristicJudge:
    """Deterministic offline stand-in for an LLM filter.

    informative: the response is non-empty and is not an apology.
    faithful: every number and every non-initial capitalized word in the
    response also occurs in the execution result.
    appropriate: the example carries an executed call with a non-empty result.
    """

    def judge(self, example: ToolUseExample) -> JudgeVerdict:
        resp = example.response.strip()
        informative = bool(resp) and not _APOLOGY.search(resp)
        result = example.execution_result
        missing = [t for t in _NUMBER.findall(resp) + _names(resp) if t not in result]
        faithful = not missing
        appropriate = bool(result.strip()) and not result.startswith("Error: ")
        return JudgeVerdict(
            informative,
            faithful,
            appropriate,
            (
                "response answers the query" if informative else "response is empty or an apology",
                "all facts found in the result" if faithful else f"unsupported: {', '.join(missing[:5])}",
                "an API call was executed" if appropriate else "no successful API call",
            ),
        )


class LLMJudge:
    def __init__(self, gateway: Gateway, registry: Registry):
        self.gateway = gateway
        self.registry = registry

    def prompt(self, example: ToolUseExample) -> Conversation:
        spec = self.registry[example.api_name]
        text = prompts.FILTER.format(
            api_descriptions=render_documentation(spec),
            query=example.query,
            chains=render_chain(example),
            final_ans=example.response,
        )
        return Conversation([user(text)], f"distill/{example.api_name}/judge")

    def judge(self, example: ToolUseExample) -> JudgeVerdict:
        try:
            reply = self.gateway.complete(self.prompt(example)).content
        except LLMError as e:
            log.warning("judge failed for %s: %s", example.id, e)
            return JudgeVerdict.unavailable()
        return parse_verdict(reply)


def judge_example(example: ToolUseExample, judge: Judge) -> JudgeVerdict:
    return judge.judge(example)


def normalize_query(q: str) -> str:
    return " ".join(q.lower().split())


class Paraphraser(Protocol):
    def session(self, example: ToolUseExample) -> Iterator[str]:
        """Successive paraphrase attempts for one example; may raise LLMError."""
        ...


class LLMParaphraser:
    """Multi-turn paraphrasing: first request, then "again" requests in the same chat."""

    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    def session(self, example: ToolUseExample) -> Iterator[str]:
        conv = Conversation([user(prompts.PARAPHRASE_FIRST.format(query=example.query))], f"distill/{example.api_name}/paraphrase")
        while True:
            reply = self.gateway.complete(conv).content
            yield reply
            conv = conv.extended(assistant(reply), user(prompts.PARAPHRASE_AGAIN))


_PREFIXES = (
    "",
    "Quick question: ",
    "Could you help me with this? ",
    "I was wondering, ",
    "Hi! ",
    "Please help me out. ",
    "Here's what I need to know: ",
    "Hey there. ",
    "I have a question. ",
    "Can you check something for me? ",
)
_SUFFIXES = (
    "",
    " Thanks!",
    " Thank you in advance.",
    " I'd appreciate a quick answer.",
    " Please keep it short.",
    " It's for a trip I'm planning.",
    " Any help is welcome.",
    " Cheers.",
)


class TemplateParaphraser:
    """Deterministic offline paraphraser: wraps the query in conversational framings.

    The wording changes while the request (and therefore the call) stays the
    same. The starting framing is chosen from a hash of the query so that
    different parents do not all get the same first variant.
    """

    def session(self, example: ToolUseExample) -> Iterator[str]:
        q = example.query.strip()
        combos = [(p, s) for p, s in itertools.product(_PREFIXES, _SUFFIXES) if p or s]
        start = int(hashlib.sha256(q.encode("utf-8")).hexdigest(), 16) % len(combos)
        for p, s in combos[start:] + combos[:start]:
            lower = p.endswith(", ") and q[1:2].islower() and not q.startswith(("I ", "I'"))
            body = q[0].lower() + q[1:] if lower else q
            yield f"{p}{body}{s}"


_PARA_LABEL = re.compile(r"^\s*(?:your\s+)?paraphrase(?:\s+of\s+the\s+query)?\s*:\s*", re.IGNORECASE)


def clean_paraphrase(text: str) -> str:
    t = _PARA_LABEL.sub("", text.strip()).strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        t = t[1:-1].strip()
    return t


@dataclass
class ParaphraseOutcome:
    examples: list[ToolUseExample]
    requested: int
    dropped: int = 0
    error: str | None = None


def paraphrase_with_report(
    example: ToolUseExample,
    n: int,
    paraphraser: Paraphraser,
    avoid: Iterable[str] = (),
) -> ParaphraseOutcome:
    """Ask for ``n`` paraphrases; duplicates are re-requested up to 3 times, then that slot is dropped."""
    if n < 0:
        raise ValueError("n must be >= 0")
    out = ParaphraseOutcome([], n)
    if n == 0:
        return out
    seen = {normalize_query(example.query), *(normalize_query(a) for a in avoid)}
    stream = paraphraser.session(example)
    for _ in range(n):
        got = None
        for _attempt in range(1 + MAX_PARAPHRASE_RETRIES):
            try:
                text = clean_paraphrase(next(stream))
            except StopIteration:
                out.error = "paraphraser exhausted"
                return out
            except LLMError as e:
                out.error = f"paraphraser failed: {e}"
                return out
            if text and normalize_query(text) not in seen:
                got = text
                break
        if got is None:
            out.dropped += 1
            continue
        seen.add(normalize_query(got))
        out.examples.append(
            ToolUseExample.create(example.api_name, got, example.call, example.execution_result, example.response, parent=example.id)
        )
    return out


def paraphrase(example: ToolUseExample, n: int, paraphraser: Paraphraser, avoid: Iterable[str] = ()) -> list[ToolUseExample]:
    return paraphrase_with_report(example, n, paraphraser, avoid).examples


def fan_out(target: int, explored: int) -> int:
    if explored <= 0 or target <= explored:
        return 0
    return math.ceil((target - explored) / explored)


@dataclass
class SplitResult:
    train: dict[str, list[ToolUseExample]] = field(default_factory=dict)
    test: dict[str, list[ToolUseExample]] = field(default_factory=dict)
    deficient: dict[str, str] = field(default_factory=dict)
    shortfall: dict[str, dict] = field(default_factory=dict)

    def train_all(self) -> list[ToolUseExample]:
        return [e for api in self.train for e in self.train[api]]

    def test_all(self) -> list[ToolUseExample]:
        return [e for api in self.test for e in self.test[api]]


def _dedupe(examples: Iterable[ToolUseExample]) -> list[ToolUseExample]:
    seen, out = set(), []
    for e in examples:
        key = normalize_query(e.query)
        if e.id in seen or key in seen:
            continue
        seen.update((e.id, key))
        out.append(e)
    return out


def balance_and_split(
    examples_by_api: Mapping[str, Sequence[ToolUseExample]],
    test_per_api: int = 15,
    target_train_per_api: int = 140,
    seed: int = 0,
    paraphraser: Paraphraser | None = None,
) -> SplitResult:
    """Seeded per-API test selection, then paraphrase the rest up to the train target."""
    if test_per_api < 0 or target_train_per_api < 0:
        raise ValueError("counts must be >= 0")
    paraphraser = paraphraser if paraphraser is not None else TemplateParaphraser()
    result = SplitResult()
    for api in sorted(examples_by_api):
        pool = sorted(_dedupe(examples_by_api[api]), key=lambda e: e.id)
        if len(pool) < test_per_api:
            result.deficient[api] = f"{len(pool)} passing examples, need at least {test_per_api} for the test split"
            continue
        rng = random.Random(f"{seed}:{api}")
        test_idx = set(rng.sample(range(len(pool)), test_per_api))
        test = [e for i, e in enumerate(pool) if i in test_idx]
        explored = [e for i, e in enumerate(pool) if i not in test_idx]
        if not explored and target_train_per_api > 0:
            result.deficient[api] = "no passing examples left for training after the test split"
            continue
        if len(explored) > target_train_per_api:
            explored = sorted(rng.sample(explored, target_train_per_api), key=lambda e: e.id)
        fan = fan_out(target_train_per_api, len(explored))
        avoid = [e.query for e in pool]
        per_parent: list[list[ToolUseExample]] = []
        dropped, errors = 0, []
        for e in explored:
            o = paraphrase_with_report(e, fan, paraphraser, avoid)
            per_parent.append(o.examples)
            avoid.extend(p.query for p in o.examples)
            dropped += o.dropped
            if o.error:
                errors.append(o.error)
        need = max(target_train_per_api - len(explored), 0)
        # interleave so trimming removes the same share from every parent
        interleaved = [p for tier in itertools.zip_longest(*per_parent) for p in tier if p is not None]
        train = explored + interleaved[:need]
        if len(interleaved) < need or dropped or errors:
            result.shortfall[api] = {"missing": max(need - len(interleaved), 0), "dropped": dropped, "errors": errors[:5]}
        result.test[api] = test
        result.train[api] = train
    return result


# ---- emission ----

def finetune_prompt(query: str) -> str:
    return f"{prompts.FINETUNE_INSTRUCTION}\n\nUser Query: {query}{RESPONSE_MARKER}"


def finetune_target(example: ToolUseExample) -> str:
    return (
        f"Action: {example.call.api_name}\nAction Input: {example.call.arguments_json()}\n"
        f"Final Answer: {example.response}"
    )


def finetune_record(example: ToolUseExample) -> dict:
    origin = example.origin.value if example.parent is None else f"{example.origin.value}({example.parent})"
    return {
        "prompt": finetune_prompt(example.query),
        "target": finetune_target(example),
        "api_name": example.api_name,
        "origin": origin,
    }


@dataclass(frozen=True)
class PoolEntry:
    query: str
    api_name: str
    call: ToolCall
    execution_result: str
    response: str

    @classmethod
    def from_example(cls, e: ToolUseExample) -> "PoolEntry":
        return cls(e.query, e.api_name, e.call, e.execution_result, e.response)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "api_name": self.api_name,
            "call": self.call.to_dict(),
            "execution_result": self.execution_result,
            "response": self.response,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PoolEntry":
        return cls(d["query"], d["api_name"], ToolCall.from_dict(d["call"]), d["execution_result"], d["response"])


def jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ValueError(f"{path}:{n}: invalid JSON ({e.msg})") from None
    return rows


def emit_finetune(train: Sequence[ToolUseExample], path: str | Path) -> Path:
    if not train:
        raise ValueError("train set is empty")
    atomic_write(Path(path), jsonl(finetune_record(e) for e in train))
    return Path(path)


def emit_icl_pool(train: Sequence[ToolUseExample], path: str | Path) -> Path:
    if not train:
        raise ValueError("train set is empty")
    atomic_write(Path(path), jsonl(PoolEntry.from_example(e).to_dict() for e in train))
    return Path(path)


def load_icl_pool(path: str | Path) -> list[PoolEntry]:
    return [PoolEntry.from_dict(d) for d in read_jsonl(path)]


def emit_examples(examples: Sequence[ToolUseExample], path: str | Path) -> Path:
    atomic_write(Path(path), jsonl(e.to_dict() for e in examples))
    return Path(path)


def load_examples(path: str | Path) -> list[ToolUseExample]:
    return [ToolUseExample.from_dict(d) for d in read_jsonl(path)]


def description_leaks(text: str, descriptions: Iterable[str], min_len: int = 20) -> list[str]:
    """Substrings of length ``min_len`` from any description that occur in ``text``."""
    hits = []
    for d in descriptions:
        for i in range(len(d) - min_len + 1):
            chunk = d[i:i + min_len]
            if chunk in text:
                hits.append(chunk)
                break
    return hits


# ---- whole-run distillation ----

@dataclass
class DistillReport:
    trials: dict[str, int] = field(default_factory=dict)
    extracted: dict[str, list[str]] = field(default_factory=dict)
    passed: dict[str, list[str]] = field(default_factory=dict)
    verdicts: dict[str, dict] = field(default_factory=dict)

    def positive_fraction(self, api: str | None = None) -> float:
        apis = [api] if api is not None else list(self.trials)
        total = sum(self.trials[a] for a in apis)
        return sum(len(self.passed.get(a, [])) for a in apis) / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "extracted": self.extracted,
            "filtered": self.passed,
            "verdicts": self.verdicts,
            "positive_fraction": {a: self.positive_fraction(a) for a in self.trials},
            "positive_fraction_overall": self.positive_fraction(),
        }


def filter_trials(trials_by_api: Mapping[str, Sequence[Trial]], judge: Judge) -> tuple[dict[str, list[ToolUseExample]], DistillReport]:
    report = DistillReport()
    passing: dict[str, list[ToolUseExample]] = {}
    for api, trials in trials_by_api.items():
        report.trials[api] = len(trials)
        extracted = _dedupe(e for e in (extract_example(t) for t in trials) if e is not None)
        report.extracted[api] = [e.id for e in extracted]
        passing[api] = []
        for e in extracted:
            v = judge.judge(e)
            report.verdicts[e.id] = v.to_dict()
            if v.passed:
                passing[api].append(e)
        report.passed[api] = [e.id for e in passing[api]]
    return passing, report
