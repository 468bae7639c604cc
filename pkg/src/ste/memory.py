"""Short-term (per-episode) and long-term (per-run) exploration memory, and trial prompts."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from . import prompts
from .llm import DEFAULT_CONTEXT_LIMIT, ContextOverflow, Conversation, Message, Role, check_context, user
from .react import Trial


class MemoryCapacityError(RuntimeError):
    pass


@dataclass
class ShortTermMemory:
    capacity: int
    trials: list[Trial] = field(default_factory=list)

    def append(self, trial: Trial) -> "ShortTermMemory":
        if len(self.trials) >= self.capacity:
            raise MemoryCapacityError(f"short-term memory holds at most {self.capacity} trials")
        self.trials.append(trial)
        return self

    def clear(self) -> None:
        self.trials.clear()

    def __len__(self) -> int:
        return len(self.trials)


def stm_append(stm: ShortTermMemory, trial: Trial) -> ShortTermMemory:
    return stm.append(trial)


@dataclass(frozen=True)
class LtmEntry:
    query: str
    success: bool

    def __post_init__(self):
        if not self.query:
            raise ValueError("LTM entries need a non-empty query")

    def to_dict(self) -> dict:
        return {"query": self.query, "success": self.success}


@dataclass
class LongTermMemory:
    entries: list[LtmEntry] = field(default_factory=list)

    def append(self, query: str, success: bool) -> None:
        self.entries.append(LtmEntry(query, success))

    def snapshot(self) -> "LongTermMemory":
        return LongTermMemory(list(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def to_list(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_list(cls, items: Iterable[dict]) -> "LongTermMemory":
        return cls([LtmEntry(d["query"], bool(d["success"])) for d in items])


def ltm_render(ltm: LongTermMemory) -> str:
    if not ltm.entries:
        return ""
    lines = [f"Query: {e.query} | solved: {'Yes' if e.success else 'No'}" for e in ltm.entries]
    return prompts.LTM_HEADER + "\n\n" + "\n".join(lines) + "\n\n" + prompts.LTM_FOOTER


class Phase(str, Enum):
    SYNTHESIZE = "SYNTHESIZE"
    ACT = "ACT"
    REFLECT = "REFLECT"


def synthesis_message(first: bool) -> str:
    return prompts.FIRST_SYNTHESIZE if first else prompts.NEXT_SYNTHESIZE


def act_message(first: bool, query: str, api_names: Iterable[str]) -> str:
    if first:
        return prompts.FIRST_ACT.format(api_names=", ".join(api_names), query=query)
    return prompts.NEXT_ACT


def _with_header(messages: list[Message], header: str) -> list[Message]:
    out = list(messages)
    first = out[0]
    out[0] = Message(first.role, header + "\n\n" + first.content)
    return out


def assemble_trial_prompt(
    spec_doc: str,
    stm: ShortTermMemory,
    ltm: LongTermMemory | None,
    trial_index_in_episode: int,
    phase: Phase,
    current: Trial | None = None,
    api_names: Iterable[str] = (),
    context_limit: int = DEFAULT_CONTEXT_LIMIT,
    tag: str = "",
) -> Conversation:
    """Build the conversation for one exploration turn.

    The API documentation is attached once, to the first message of the
    episode. The LTM block is only present in the SYNTHESIZE turn. STM trials
    are replayed as their recorded transcripts; if the prompt would overflow
    the context ceiling, the oldest STM trials are dropped first.

    ``current.transcript`` must hold the current trial's synthesis exchange
    for ACT, and additionally its act turns for REFLECT.
    """
    phase = Phase(phase)
    if phase is not Phase.SYNTHESIZE and (current is None or not current.query):
        raise ValueError(f"{phase.value} prompts need the current trial's synthesized query")
    header = prompts.EXPLORE_HEADER.format(api_descriptions=spec_doc)
    ltm_block = ltm_render(ltm) if (ltm is not None and phase is Phase.SYNTHESIZE) else ""
    api_names = list(api_names)
    retained = list(stm.trials)

    while True:
        history = [m for t in retained for m in t.transcript]
        first_in_context = not retained
        if phase is Phase.SYNTHESIZE:
            body = synthesis_message(first_in_context)
            tail = [user(f"{ltm_block}\n\n{body}" if ltm_block else body)]
        else:
            tail = list(current.transcript)
            if phase is Phase.ACT:
                tail.append(user(act_message(first_in_context, current.query, api_names)))
            else:
                tail.append(user(prompts.REFLECT))
        messages = _with_header(history + tail, header)
        try:
            check_context(
                {
                    "api_documentation": header,
                    "long_term_memory": ltm_block,
                    "short_term_memory": "\n\n".join(m.content for m in history),
                    "current_trial": "\n\n".join(m.content for m in tail),
                },
                context_limit,
            )
        except ContextOverflow:
            if not retained:
                raise
            retained.pop(0)
            continue
        return Conversation(messages, tag)


def count_replayed_trials(conv: Conversation) -> int:
    """Number of earlier trials replayed before the current one in an exploration conversation."""
    synth = sum(
        1
        for m in conv.messages
        if m.role is Role.USER
        and (m.content.endswith(prompts.FIRST_SYNTHESIZE) or m.content.endswith(prompts.NEXT_SYNTHESIZE))
    )
    return max(synth - 1, 0)
