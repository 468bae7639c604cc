"""Thought/Action/Action Input/Observation/Final Answer protocol and act loop."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Collection

from . import prompts
from .llm import Conversation, Gateway, LLMError, Message, Role, ScriptError, assistant, user
from .sandbox import ObsStatus, Observation, Sandbox, ToolCall, error_body

MAX_CONSECUTIVE_FORMAT_ERRORS = 3
FORMAT_ERROR_PREFIX = "Format error: "


class StepKind(str, Enum):
    THOUGHT = "THOUGHT"
    ACTION = "ACTION"
    OBSERVATION = "OBSERVATION"
    FINAL_ANSWER = "FINAL_ANSWER"


@dataclass(frozen=True)
class Step:
    kind: StepKind
    text: str = ""
    call: ToolCall | None = None
    observation: Observation | None = None
    # assistant text the step was parsed from; kept for replay, ignored by ==
    raw: str | None = field(default=None, compare=False)

    @classmethod
    def thought(cls, text: str) -> "Step":
        return cls(StepKind.THOUGHT, text=text)

    @classmethod
    def action(cls, call: ToolCall, raw: str | None = None) -> "Step":
        return cls(StepKind.ACTION, call=call, raw=raw)

    @classmethod
    def observe(cls, obs: Observation, raw: str | None = None) -> "Step":
        return cls(StepKind.OBSERVATION, observation=obs, raw=raw)

    @classmethod
    def final(cls, text: str) -> "Step":
        return cls(StepKind.FINAL_ANSWER, text=text)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.kind in (StepKind.THOUGHT, StepKind.FINAL_ANSWER):
            d["text"] = self.text
        if self.call is not None:
            d["call"] = self.call.to_dict()
        if self.observation is not None:
            d["observation"] = self.observation.to_dict()
        if self.raw is not None:
            d["raw"] = self.raw
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Step":
        return cls(
            StepKind(d["kind"]),
            text=d.get("text", ""),
            call=ToolCall.from_dict(d["call"]) if "call" in d else None,
            observation=Observation.from_dict(d["observation"]) if "observation" in d else None,
            raw=d.get("raw"),
        )


@dataclass
class Trial:
    target_api: str
    query: str = ""
    steps: list[Step] = field(default_factory=list)
    final_answer: str | None = None
    reflection: bool | None = None
    failed: bool = False
    error: str | None = None
    transcript: list[Message] = field(default_factory=list)

    @property
    def api_calls_used(self) -> int:
        return sum(1 for s in self.steps if s.kind is StepKind.ACTION)

    @property
    def tool_observations(self) -> list[Step]:
        return [
            s for s in self.steps
            if s.kind is StepKind.OBSERVATION and s.observation.status is not ObsStatus.FORMAT_ERROR
        ]

    def to_dict(self) -> dict:
        return {
            "target_api": self.target_api,
            "query": self.query,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "reflection": self.reflection,
            "failed": self.failed,
            "error": self.error,
            "api_calls_used": self.api_calls_used,
            "transcript": [m.to_dict() for m in self.transcript],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trial":
        return cls(
            target_api=d["target_api"],
            query=d.get("query", ""),
            steps=[Step.from_dict(s) for s in d.get("steps", [])],
            final_answer=d.get("final_answer"),
            reflection=d.get("reflection"),
            failed=bool(d.get("failed", False)),
            error=d.get("error"),
            transcript=[Message.from_dict(m) for m in d.get("transcript", [])],
        )


# -- turn parsing -------------------------------------------------------------


class ParseErrorCode(str, Enum):
    MISSING_ACTION = "MISSING_ACTION"
    MISSING_ACTION_INPUT = "MISSING_ACTION_INPUT"
    MALFORMED_ARGUMENTS = "MALFORMED_ARGUMENTS"
    MULTIPLE_ACTIONS = "MULTIPLE_ACTIONS"
    STARTS_WITH_OBSERVATION = "STARTS_WITH_OBSERVATION"


class TurnParseError(ValueError):
    def __init__(self, code: ParseErrorCode, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code.value}: {detail}" if detail else code.value)


@dataclass(frozen=True)
class ParsedTurn:
    thought: str | None
    call: ToolCall | None
    final_answer: str | None

    @property
    def is_action(self) -> bool:
        return self.call is not None


_LABEL = re.compile(
    r"^[ \t]*(thought|action[ \t]+input|action|final[ \t]+answer|observation)[ \t]*:[ \t]*",
    re.IGNORECASE | re.MULTILINE,
)
_FENCE = re.compile(r"^```[\w-]*[ \t]*\n?(.*?)\n?[ \t]*```", re.DOTALL)


def _canonical(label: str) -> str:
    return " ".join(w.capitalize() for w in label.split())


def _stringify(v) -> str:
    if isinstance(v, str):
        return v
    return json.dumps(v, ensure_ascii=False)


def _no_duplicates(pairs):
    d = {}
    for k, v in pairs:
        if k in d:
            raise TurnParseError(ParseErrorCode.MALFORMED_ARGUMENTS, f"duplicate argument {k!r}")
        d[k] = v
    return d


def parse_arguments(raw: str) -> dict[str, str]:
    text = raw.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    elif text.startswith("```"):
        text = text.split("\n", 1)[1] if "\n" in text else ""
        text = text.strip()
    text = text.removesuffix("```").strip()
    if not text:
        raise TurnParseError(ParseErrorCode.MALFORMED_ARGUMENTS, "empty Action Input")
    decoder = json.JSONDecoder(object_pairs_hook=_no_duplicates)
    try:
        obj, _ = decoder.raw_decode(text)
    except json.JSONDecodeError as e:
        raise TurnParseError(ParseErrorCode.MALFORMED_ARGUMENTS, str(e)) from None
    if isinstance(obj, list):
        if len(obj) > 1:
            raise TurnParseError(ParseErrorCode.MULTIPLE_ACTIONS, "Action Input is a list")
        raise TurnParseError(ParseErrorCode.MALFORMED_ARGUMENTS, "Action Input is a list, expected an object")
    if not isinstance(obj, dict):
        raise TurnParseError(ParseErrorCode.MALFORMED_ARGUMENTS, "Action Input must be a JSON object")
    return {str(k): _stringify(v) for k, v in obj.items()}


def _sections(text: str) -> list[tuple[str, str]]:
    labels = list(_LABEL.finditer(text))
    out = []
    for i, m in enumerate(labels):
        name = _canonical(m.group(1))
        if name == "Observation":
            # the model hallucinated a tool result; everything after it is discarded
            break
        end = labels[i + 1].start() if i + 1 < len(labels) else len(text)
        out.append((name, text[m.end():end].strip()))
    return out


def parse_assistant_turn(text: str) -> ParsedTurn:
    s = text.strip()
    if re.match(r"observation[ \t]*:", s, re.IGNORECASE):
        raise TurnParseError(ParseErrorCode.STARTS_WITH_OBSERVATION)
    sections = _sections(s)
    thought = next((c for n, c in sections if n == "Thought"), None)
    decisive = [n for n, _ in sections if n in ("Action", "Final Answer")]
    if not decisive:
        raise TurnParseError(ParseErrorCode.MISSING_ACTION, "no Action or Final Answer found")
    if decisive[0] == "Final Answer":
        answer = next(c for n, c in sections if n == "Final Answer")
        return ParsedTurn(thought, None, answer)
    actions = [c for n, c in sections if n == "Action"]
    inputs = [c for n, c in sections if n == "Action Input"]
    if len(actions) > 1 or len(inputs) > 1:
        raise TurnParseError(ParseErrorCode.MULTIPLE_ACTIONS, f"{len(actions)} actions in one turn")
    name = actions[0].strip().strip("`'\"").strip()
    if not name:
        raise TurnParseError(ParseErrorCode.MISSING_ACTION, "empty Action name")
    if not inputs:
        raise TurnParseError(ParseErrorCode.MISSING_ACTION_INPUT)
    return ParsedTurn(thought, ToolCall(name, parse_arguments(inputs[0])), None)


_ACTION_LINE = re.compile(r"^[ \t]*action[ \t]*:[ \t]*(.+?)[ \t]*$", re.IGNORECASE | re.MULTILINE)


def recover_action_name(text: str) -> str | None:
    """Best-effort API name from a turn, even when its arguments are broken."""
    try:
        turn = parse_assistant_turn(text)
    except TurnParseError:
        m = _ACTION_LINE.search(text)
        if not m:
            return None
        name = m.group(1).strip().strip("`'\"").strip()
        return name or None
    return turn.call.api_name if turn.call else None


_FEEDBACK = {
    ParseErrorCode.STARTS_WITH_OBSERVATION: (
        'your response should never start with "Observation:" since that is what I will provide you with.'
    ),
    ParseErrorCode.MISSING_ACTION: 'I could not find an "Action:" or a "Final Answer:" in your response.',
    ParseErrorCode.MISSING_ACTION_INPUT: '"Action:" must be followed by "Action Input:" holding the API arguments.',
    ParseErrorCode.MALFORMED_ARGUMENTS: "the Action Input could not be parsed as a JSON object of argument values.",
    ParseErrorCode.MULTIPLE_ACTIONS: (
        "you should only perform a SINGLE action at a time, do NOT return a list of multiple actions."
    ),
}


def format_error(code: ParseErrorCode | str) -> str:
    code = ParseErrorCode(code)  # ValueError for undefined codes
    return (
        FORMAT_ERROR_PREFIX
        + _FEEDBACK[code]
        + "\nUse the following json string format for the API arguments:\n"
        + prompts.ARGUMENT_FORMAT
        + "\nRemember to ALWAYS use the following format:\n"
        + prompts.REACT_FORMAT
    )


# -- act loop -----------------------------------------------------------------


@dataclass
class ActResult:
    steps: list[Step]
    final_answer: str | None
    messages: list[Message]
    failed: bool = False
    error: str | None = None
    exception: LLMError | None = None
    forced_finalize: bool = False

    @property
    def hard_failure(self) -> bool:
        return self.exception is not None and not isinstance(self.exception, ScriptError)


def _unknown_api(name: str, valid: Collection[str]) -> Observation:
    return Observation(
        ObsStatus.TOOL_ERROR,
        error_body(f'unknown API "{name}". The only values that should follow "Action:" are: {", ".join(valid)}'),
    )


def _execute(call: ToolCall, sandbox: Sandbox, api_names: Collection[str] | None) -> Observation:
    if api_names is not None and call.api_name not in api_names:
        return _unknown_api(call.api_name, api_names)
    return sandbox.execute(call)


def run_act_loop(
    query: str,
    base_conversation: Conversation,
    budget: int,
    gateway: Gateway,
    sandbox: Sandbox,
    api_names: Collection[str] | None = None,
) -> ActResult:
    """Alternate model turns and tool executions until a final answer or the budget runs out.

    Format errors cost no budget and are answered with an instructional
    observation; three in a row end the trial as failed. After the last
    allowed call the model gets one forced-finalize turn.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    conv = Conversation(list(base_conversation.messages), base_conversation.tag)
    start = len(conv.messages)
    steps: list[Step] = []
    result = ActResult(steps, None, [])
    calls = 0
    format_errors = 0

    while True:
        try:
            reply = gateway.complete(conv).content
        except LLMError as e:
            result.failed, result.error, result.exception = True, str(e), e
            break
        conv.messages.append(assistant(reply))
        try:
            turn = parse_assistant_turn(reply)
        except TurnParseError as e:
            format_errors += 1
            feedback = format_error(e.code)
            steps.append(Step.observe(Observation(ObsStatus.FORMAT_ERROR, feedback), raw=reply))
            if result.forced_finalize or format_errors >= MAX_CONSECUTIVE_FORMAT_ERRORS:
                result.failed = not result.forced_finalize
                result.error = f"format error: {e.code.value}"
                break
            conv.messages.append(user(f"Observation: {feedback}"))
            continue
        format_errors = 0
        if turn.thought is not None:
            steps.append(Step(StepKind.THOUGHT, text=turn.thought, raw=reply))
        if turn.final_answer is not None:
            steps.append(Step(StepKind.FINAL_ANSWER, text=turn.final_answer, raw=reply))
            result.final_answer = turn.final_answer
            break
        if result.forced_finalize:
            # one forced attempt only; its action is not executed
            break
        steps.append(Step.action(turn.call, raw=reply))
        obs = _execute(turn.call, sandbox, api_names)
        steps.append(Step.observe(obs))
        calls += 1
        content = f"Observation: {obs.body}"
        if calls >= budget:
            result.forced_finalize = True
            content += "\n" + prompts.FORCE_FINALIZE
        conv.messages.append(user(content))

    result.messages = conv.messages[start:]
    # a trailing USER turn that was never answered is not part of the transcript
    if result.messages and result.messages[-1].role is Role.USER:
        result.messages.pop()
    return result


def run_single_shot(
    query: str,
    base_conversation: Conversation,
    gateway: Gateway,
    sandbox: Sandbox,
    api_names: Collection[str] | None = None,
) -> ActResult:
    """Execution-feedback ablation: one action, executed but never shown to the model."""
    conv = Conversation(list(base_conversation.messages), base_conversation.tag)
    start = len(conv.messages)
    steps: list[Step] = []
    result = ActResult(steps, None, [])
    try:
        reply = gateway.complete(conv).content
    except LLMError as e:
        result.failed, result.error, result.exception = True, str(e), e
        return result
    conv.messages.append(assistant(reply))
    try:
        turn = parse_assistant_turn(reply)
    except TurnParseError as e:
        steps.append(Step.observe(Observation(ObsStatus.FORMAT_ERROR, format_error(e.code)), raw=reply))
        turn = None
    if turn is not None and turn.thought is not None:
        steps.append(Step(StepKind.THOUGHT, text=turn.thought, raw=reply))
    if turn is not None and turn.final_answer is not None:
        steps.append(Step(StepKind.FINAL_ANSWER, text=turn.final_answer, raw=reply))
        result.final_answer = turn.final_answer
        result.messages = conv.messages[start:]
        return result
    if turn is not None:
        steps.append(Step.action(turn.call, raw=reply))
        steps.append(Step.observe(_execute(turn.call, sandbox, api_names)))
    conv.messages.append(user(prompts.NO_FEEDBACK_FINALIZE))
    try:
        reply = gateway.complete(conv).content
    except LLMError as e:
        result.failed, result.error, result.exception = True, str(e), e
        conv.messages.pop()
        result.messages = conv.messages[start:]
        return result
    conv.messages.append(assistant(reply))
    try:
        final = parse_assistant_turn(reply)
    except TurnParseError:
        final = None
    if final is not None and final.final_answer is not None:
        if final.thought is not None:
            steps.append(Step(StepKind.THOUGHT, text=final.thought, raw=reply))
        steps.append(Step(StepKind.FINAL_ANSWER, text=final.final_answer, raw=reply))
        result.final_answer = final.final_answer
    result.messages = conv.messages[start:]
    return result


# -- text rendering -----------------------------------------------------------

_TRIAL_LABEL = re.compile(
    r"^(User Query|Thought|Action Input|Action|Observation|Final Answer|Reflection):[ ]?", re.MULTILINE
)


def _observation_status(body: str) -> ObsStatus:
    if body.startswith(FORMAT_ERROR_PREFIX):
        return ObsStatus.FORMAT_ERROR
    if body.startswith("Error: "):
        return ObsStatus.TOOL_ERROR
    return ObsStatus.OK


def render_step(step: Step) -> str:
    if step.kind is StepKind.THOUGHT:
        return f"Thought: {step.text}"
    if step.kind is StepKind.ACTION:
        return f"Action: {step.call.api_name}\nAction Input: {step.call.arguments_json()}"
    if step.kind is StepKind.OBSERVATION:
        return f"Observation: {step.observation.body}"
    return f"Final Answer: {step.text}"


def render_trial(trial: Trial) -> str:
    parts = [f"User Query: {trial.query}"]
    parts += [render_step(s) for s in trial.steps]
    if trial.final_answer is not None and not any(s.kind is StepKind.FINAL_ANSWER for s in trial.steps):
        parts.append(f"Final Answer: {trial.final_answer}")
    if trial.reflection is not None:
        parts.append(f"Reflection: {'Yes' if trial.reflection else 'No'}")
    return "\n".join(parts)


def parse_trial_text(text: str, target_api: str = "") -> Trial:
    """Inverse of :func:`render_trial` for trials whose texts hold no label-prefixed lines."""
    labels = list(_TRIAL_LABEL.finditer(text))
    trial = Trial(target_api=target_api)
    pending_action: str | None = None
    for i, m in enumerate(labels):
        end = labels[i + 1].start() - 1 if i + 1 < len(labels) else len(text)
        content = text[m.end():end]
        label = m.group(1)
        if label == "User Query":
            trial.query = content
        elif label == "Thought":
            trial.steps.append(Step.thought(content))
        elif label == "Action":
            pending_action = content
        elif label == "Action Input":
            if pending_action is None:
                raise ValueError("Action Input without a preceding Action")
            trial.steps.append(Step.action(ToolCall(pending_action, parse_arguments(content))))
            pending_action = None
        elif label == "Observation":
            trial.steps.append(Step.observe(Observation(_observation_status(content), content)))
        elif label == "Final Answer":
            trial.steps.append(Step.final(content))
            trial.final_answer = content
        elif label == "Reflection":
            trial.reflection = content.strip().lower() == "yes"
    if pending_action is not None:
        raise ValueError("Action without Action Input")
    return trial
