"""Chat-completion gateway over pluggable backends.

Backends only turn a :class:`Conversation` into reply text. The
:class:`Gateway` adds precondition checks, bounded retries on transport
errors, context-size accounting and an append-only call log.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_LIMIT = 16000


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role.value, "content": self.content}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Message":
        return cls(Role(d["role"]), d["content"])


def user(content: str) -> Message:
    return Message(Role.USER, content)


def assistant(content: str) -> Message:
    return Message(Role.ASSISTANT, content)


@dataclass
class Conversation:
    messages: list[Message] = field(default_factory=list)
    tag: str = ""

    def last_user(self) -> str:
        for m in reversed(self.messages):
            if m.role is Role.USER:
                return m.content
        return ""

    def text(self) -> str:
        return "\n\n".join(m.content for m in self.messages)

    def extended(self, *messages: Message) -> "Conversation":
        return Conversation(self.messages + list(messages), self.tag)


class LLMError(Exception):
    """Base class for gateway failures."""


class TransportError(LLMError):
    """Retryable: network trouble, timeouts, 5xx."""


class BackendRefusal(LLMError):
    """Non-retryable: the backend rejected the request."""


class ScriptError(LLMError):
    """A scripted backend could not answer (NO_SCRIPT or EXHAUSTED)."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


class ContextOverflow(LLMError):
    def __init__(self, component: str, tokens: int, limit: int):
        self.component = component
        self.tokens = tokens
        self.limit = limit
        super().__init__(
            f"prompt needs ~{tokens} tokens, over the {limit}-token ceiling; shrink {component!r}"
        )


class ConversationError(ValueError):
    """The conversation violates the complete() precondition."""


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def check_context(components: Mapping[str, str], limit: int) -> int:
    """Raise ContextOverflow naming the largest component if the total is over ``limit``."""
    sizes = {k: estimate_tokens(v) for k, v in components.items()}
    total = sum(sizes.values())
    if total > limit:
        biggest = max(sizes, key=lambda k: (sizes[k], k))
        raise ContextOverflow(biggest, total, limit)
    return total


def validate_conversation(conv: Conversation) -> None:
    msgs = conv.messages
    if not msgs:
        raise ConversationError("conversation is empty")
    if msgs[-1].role is not Role.USER:
        raise ConversationError(f"conversation must end with a USER message (tag {conv.tag!r})")
    i = 0
    while i < len(msgs) and msgs[i].role is Role.SYSTEM:
        i += 1
    expected = Role.USER
    for m in msgs[i:]:
        if m.role is not expected:
            raise ConversationError(f"roles must alternate user/assistant (tag {conv.tag!r})")
        expected = Role.ASSISTANT if expected is Role.USER else Role.USER


class Backend(Protocol):
    def generate(self, conv: Conversation) -> str: ...


Matcher = str | Callable[[Conversation], bool]
Responder = Callable[[Conversation, "re.Match | None"], str]


@dataclass
class ScriptRule:
    """One scripted rule.

    ``match`` is a regex searched in the last USER message (or a predicate on
    the whole conversation); ``tag`` is an optional regex searched in the
    conversation tag. ``response`` is a single reply, a list of replies handed
    out one per match, a mapping, or a callable. A mapping is looked up by the
    ``key`` group of the message match (else of the tag match), falling back
    to its ``"*"`` entry. String replies may reference named regex groups
    with ``\\g<name>``.
    """

    match: Matcher
    response: str | Sequence[str] | Mapping[str, str] | Responder
    tag: str | None = None
    cycle: bool = False
    _pos: int = field(default=0, init=False, repr=False)

    def matches(self, conv: Conversation) -> tuple[bool, re.Match | None]:
        if self.tag is not None and not re.search(self.tag, conv.tag):
            return False, None
        if callable(self.match):
            return bool(self.match(conv)), None
        m = re.search(self.match, conv.last_user())
        return m is not None, m

    def _key(self, conv: Conversation, m: re.Match | None) -> str | None:
        if m is not None and "key" in m.re.groupindex:
            return m.group("key")
        if self.tag is not None:
            t = re.search(self.tag, conv.tag)
            if t is not None and "key" in t.re.groupindex:
                return t.group("key")
        return None

    def reply(self, conv: Conversation, m: re.Match | None) -> str:
        r = self.response
        if callable(r):
            return r(conv, m)
        if isinstance(r, Mapping):
            key = self._key(conv, m)
            text = r.get(key, r.get("*")) if key is not None else r.get("*")
            if text is None:
                raise ScriptError("NO_SCRIPT", f"no scripted reply for key {key!r} (tag {conv.tag!r})")
            return m.expand(text) if m is not None else text
        if isinstance(r, str):
            return m.expand(r) if m is not None else r
        if self._pos >= len(r):
            if not self.cycle or not r:
                raise ScriptError("EXHAUSTED", f"response sequence used up (tag {conv.tag!r})")
            self._pos = 0
        text = r[self._pos]
        self._pos += 1
        return m.expand(text) if m is not None else text


class ScriptedBackend:
    """Deterministic rule-table backend; rules are tried top-down."""

    def __init__(self, rules: Sequence[ScriptRule | tuple]):
        self.rules = [r if isinstance(r, ScriptRule) else ScriptRule(*r) for r in rules]
        self._lock = threading.Lock()

    def generate(self, conv: Conversation) -> str:
        with self._lock:
            for rule in self.rules:
                ok, m = rule.matches(conv)
                if ok:
                    return rule.reply(conv, m)
        raise ScriptError("NO_SCRIPT", f"no rule matches the conversation tagged {conv.tag!r}")

    @classmethod
    def from_json(cls, doc: list) -> "ScriptedBackend":
        rules = []
        for i, r in enumerate(doc):
            if "responses" in r:
                response = list(r["responses"])
            elif "response" in r:
                response = r["response"]
            else:
                raise ValueError(f"script rule {i} needs 'response' or 'responses'")
            rules.append(ScriptRule(r.get("match", ""), response, r.get("tag"), bool(r.get("cycle", False))))
        return cls(rules)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def script_backend(rules: Sequence[ScriptRule | tuple]) -> ScriptedBackend:
    if not rules:
        raise ValueError("a scripted backend needs at least one rule")
    return ScriptedBackend(rules)


@dataclass
class RemoteBackend:
    """OpenAI-compatible ``/chat/completions`` endpoint."""

    endpoint: str
    model: str
    temperature: float = 1.0
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 120.0

    def generate(self, conv: Conversation) -> str:
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [m.to_dict() for m in conv.messages],
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(
            self.endpoint, data=json.dumps(payload).encode("utf-8"), headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as e:
            if e.code == 429 or e.code >= 500:
                raise TransportError(f"HTTP {e.code} from {self.endpoint}") from e
            raise BackendRefusal(f"HTTP {e.code} from {self.endpoint}: {e.reason}") from e
        except (urllib.error.URLError, OSError, TimeoutError) as e:
            raise TransportError(f"request to {self.endpoint} failed: {e}") from e
        except json.JSONDecodeError as e:
            raise TransportError(f"unparseable response from {self.endpoint}") from e
        try:
            return body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            raise BackendRefusal(f"unexpected response shape from {self.endpoint}") from e


@dataclass(frozen=True)
class CallRecord:
    tag: str
    conversation: tuple[Message, ...]
    reply: str
    tokens: int


class Gateway:
    def __init__(
        self,
        backend: Backend,
        retries: int = 3,
        backoff: float = 1.0,
        context_limit: int = DEFAULT_CONTEXT_LIMIT,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.retries = retries
        self.backoff = backoff
        self.context_limit = context_limit
        self.sleep = sleep
        self._log: list[CallRecord] = []
        self._lock = threading.Lock()

    @property
    def call_log(self) -> list[CallRecord]:
        with self._lock:
            return list(self._log)

    def complete(self, conv: Conversation) -> Message:
        validate_conversation(conv)
        prompt_tokens = estimate_tokens(conv.text())
        if prompt_tokens > self.context_limit:
            raise ContextOverflow(conv.tag or "conversation", prompt_tokens, self.context_limit)
        attempt = 0
        while True:
            attempt += 1
            try:
                reply = self.backend.generate(conv)
                break
            except TransportError as e:
                if attempt >= self.retries:
                    raise
                delay = self.backoff * 2 ** (attempt - 1)
                log.warning("transport error on %s (attempt %d): %s; retrying in %.1fs", conv.tag, attempt, e, delay)
                self.sleep(delay)
        tokens = prompt_tokens + estimate_tokens(reply)
        with self._lock:
            self._log.append(CallRecord(conv.tag, tuple(conv.messages), reply, tokens))
        return Message(Role.ASSISTANT, reply)


def backend_from_spec(spec: str, temperature: float = 1.0) -> Backend:
    """Build a backend from a CLI string.

    ``scripted:<path>`` loads a JSON rule file; ``remote:<endpoint>#<model>``
    (or a JSON config file via ``remote:@config.json``) targets a chat endpoint.
    """
    kind, _, rest = spec.partition(":")
    if kind == "scripted" and rest:
        return ScriptedBackend.from_file(rest)
    if kind == "remote" and rest:
        if rest.startswith("@"):
            cfg = json.loads(Path(rest[1:]).read_text(encoding="utf-8"))
            return RemoteBackend(
                endpoint=cfg["endpoint"],
                model=cfg["model"],
                temperature=float(cfg.get("temperature", temperature)),
                api_key_env=cfg.get("api_key_env", "OPENAI_API_KEY"),
            )
        endpoint, _, model = rest.rpartition("#")
        if not endpoint or not model:
            raise ValueError("remote backend spec must look like remote:<endpoint>#<model>")
        return RemoteBackend(endpoint=endpoint, model=model, temperature=temperature)
    raise ValueError(f"unknown backend spec {spec!r}; expected scripted:<path> or remote:<endpoint>#<model>")
