"""Tool execution sandbox.

Every outcome of :meth:`Sandbox.execute` is an :class:`Observation`; invalid
calls and tool failures come back as ``TOOL_ERROR`` text so the exploring model
can read them and retry.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

from .registry import ApiSpec, ParamKind, validate_spec

DEFAULT_TRUNCATE = 2048
TRUNCATION_MARKER = "...[truncated]"


class ObsStatus(str, Enum):
    OK = "OK"
    TOOL_ERROR = "TOOL_ERROR"
    FORMAT_ERROR = "FORMAT_ERROR"


@dataclass(frozen=True)
class ToolCall:
    api_name: str
    arguments: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.api_name:
            raise ValueError("api_name must be non-empty")

    def to_dict(self) -> dict:
        return {"api_name": self.api_name, "arguments": dict(self.arguments)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ToolCall":
        return cls(str(d["api_name"]), {str(k): str(v) for k, v in dict(d.get("arguments", {})).items()})

    def arguments_json(self) -> str:
        return json.dumps(self.arguments, ensure_ascii=False)


@dataclass(frozen=True)
class Observation:
    status: ObsStatus
    body: str
    latency_hint: float | None = None

    def __post_init__(self):
        if self.status is ObsStatus.OK and not self.body:
            raise ValueError("OK observation needs a non-empty body")

    @property
    def ok(self) -> bool:
        return self.status is ObsStatus.OK

    def to_dict(self) -> dict:
        d = {"status": self.status.value, "body": self.body}
        if self.latency_hint is not None:
            d["latency_hint"] = self.latency_hint
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Observation":
        return cls(ObsStatus(d["status"]), d["body"], d.get("latency_hint"))


class ToolError(Exception):
    """Raised by tool behaviors for domain failures; becomes a TOOL_ERROR body."""


class SandboxError(Exception):
    """Misuse of the sandbox itself (duplicate registration, unknown fault target)."""


Behavior = Callable[[dict], str]


class FaultKind(str, Enum):
    ALWAYS_ERROR = "ALWAYS_ERROR"
    FIRST_N_ERROR = "FIRST_N_ERROR"
    TRUNCATE_BODY = "TRUNCATE_BODY"


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    n: int = 0

    @classmethod
    def always_error(cls) -> "Fault":
        return cls(FaultKind.ALWAYS_ERROR)

    @classmethod
    def first_n_error(cls, n: int) -> "Fault":
        if n < 0:
            raise ValueError("n must be >= 0")
        return cls(FaultKind.FIRST_N_ERROR, n)

    @classmethod
    def truncate_body(cls, limit: int) -> "Fault":
        if limit < 1:
            raise ValueError("limit must be >= 1")
        return cls(FaultKind.TRUNCATE_BODY, limit)


@dataclass
class _Tool:
    spec: ApiSpec
    behavior: Behavior
    fault: Fault | None = None
    remaining_errors: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass(frozen=True)
class ToolHandle:
    name: str
    sandbox: "Sandbox"

    def execute(self, arguments: dict[str, str]) -> Observation:
        return self.sandbox.execute(ToolCall(self.name, arguments))


def truncate(body: str, limit: int) -> str:
    if len(body) <= limit:
        return body
    if limit <= len(TRUNCATION_MARKER):
        return body[:limit]
    return body[: limit - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER


def error_body(message: str) -> str:
    return f"Error: {message}"


def check_arguments(spec: ApiSpec, arguments: Mapping[str, str]) -> str | None:
    """Return a message describing the first invalid argument, or None."""
    for p in spec.required_parameters:
        if p.name not in arguments:
            return f'missing required parameter "{p.name}" for {spec.name}'
    known = set(spec.param_names)
    for name in arguments:
        if name not in known:
            return (
                f'unknown parameter "{name}" for {spec.name}; '
                f"valid parameters are: {', '.join(spec.param_names) or '(none)'}"
            )
    for name, value in arguments.items():
        p = spec.param(name)
        if p.kind is ParamKind.NUMBER:
            try:
                float(value)
            except (TypeError, ValueError):
                return f'parameter "{name}" must be a number, got "{value}"'
        elif p.kind is ParamKind.BOOLEAN and str(value).lower() not in ("true", "false"):
            return f'parameter "{name}" must be true or false, got "{value}"'
        elif p.kind is ParamKind.ENUM and value not in p.allowed_values:
            return (
                f'"{value}" is not a valid value for parameter "{name}"; '
                f"allowed values are: {', '.join(p.allowed_values)}"
            )
    return None


class Sandbox:
    """Routes tool calls to registered behaviors.

    Argument presence, unknown names, NUMBER/BOOLEAN syntax and ENUM membership
    are checked here. Value sets on STRING parameters are the behavior's job, so
    each tool can phrase its own error.
    """

    def __init__(self, truncate_limit: int = DEFAULT_TRUNCATE, fallback: Behavior | None = None):
        self.truncate_limit = truncate_limit
        self.fallback = fallback
        self._tools: dict[str, _Tool] = {}
        self._lock = threading.Lock()

    def register_tool(self, spec: ApiSpec, behavior: Behavior) -> ToolHandle:
        validate_spec(spec)
        with self._lock:
            if spec.name in self._tools:
                raise SandboxError(f"tool {spec.name!r} is already registered")
            self._tools[spec.name] = _Tool(spec, behavior)
        return ToolHandle(spec.name, self)

    def inject_fault(self, name: str, mode: Fault) -> None:
        tool = self._tools.get(name)
        if tool is None:
            raise SandboxError(f"cannot inject fault: unknown tool {name!r}")
        with tool.lock:
            tool.fault = mode
            tool.remaining_errors = mode.n if mode.kind is FaultKind.FIRST_N_ERROR else 0

    def clear_fault(self, name: str) -> None:
        tool = self._tools.get(name)
        if tool is not None:
            with tool.lock:
                tool.fault = None
                tool.remaining_errors = 0

    @property
    def names(self) -> list[str]:
        return list(self._tools)

    def spec(self, name: str) -> ApiSpec | None:
        tool = self._tools.get(name)
        return tool.spec if tool else None

    def __len__(self) -> int:
        return len(self._tools)

    def __contains__(self, name: object) -> bool:
        return name in self._tools

    def execute(self, call: ToolCall) -> Observation:
        tool = self._tools.get(call.api_name)
        if tool is None:
            if self.fallback is not None:
                return self._run(self.fallback, call.api_name, dict(call.arguments), self.truncate_limit)
            valid = ", ".join(self._tools) or "(none)"
            return Observation(
                ObsStatus.TOOL_ERROR,
                error_body(f'unknown API "{call.api_name}". Valid API names are: {valid}'),
            )

        limit = self.truncate_limit
        with tool.lock:
            fault = tool.fault
            if fault is not None:
                if fault.kind is FaultKind.ALWAYS_ERROR:
                    return self._injected(call.api_name)
                if fault.kind is FaultKind.FIRST_N_ERROR and tool.remaining_errors > 0:
                    tool.remaining_errors -= 1
                    return self._injected(call.api_name)
                if fault.kind is FaultKind.TRUNCATE_BODY:
                    limit = min(limit, fault.n)

        problem = check_arguments(tool.spec, call.arguments)
        if problem is not None:
            return Observation(ObsStatus.TOOL_ERROR, error_body(problem))
        return self._run(tool.behavior, call.api_name, dict(call.arguments), limit)

    @staticmethod
    def _injected(name: str) -> Observation:
        return Observation(
            ObsStatus.TOOL_ERROR,
            error_body(f"{name} is temporarily unavailable (service returned 503). Please try again."),
        )

    @staticmethod
    def _run(behavior: Behavior, name: str, arguments: dict, limit: int) -> Observation:
        try:
            body = behavior(arguments)
        except ToolError as e:
            return Observation(ObsStatus.TOOL_ERROR, truncate(error_body(str(e)), limit))
        except Exception as e:  # noqa: BLE001 - the observation is the error channel
            return Observation(
                ObsStatus.TOOL_ERROR, truncate(error_body(f"{name} failed: {type(e).__name__}: {e}"), limit)
            )
        body = str(body) if body is not None else ""
        if not body:
            return Observation(ObsStatus.TOOL_ERROR, error_body(f"{name} returned an empty response"))
        return Observation(ObsStatus.OK, truncate(body, limit))


class HttpTool:
    """Behavior that POSTs the argument map as JSON to ``url``.

    Any transport failure or non-2xx status becomes a ToolError.
    """

    def __init__(self, url: str, timeout: float = 30.0, headers: Mapping[str, str] | None = None):
        self.url = url
        self.timeout = timeout
        self.headers = dict(headers or {})

    def __call__(self, arguments: dict) -> str:
        data = json.dumps(arguments).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=data, method="POST", headers={"Content-Type": "application/json", **self.headers}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read().decode("utf-8", errors="replace")
        except urllib.error.HTTPError as e:
            raise ToolError(f"HTTP {e.code} from {self.url}: {e.reason}") from e
        except (urllib.error.URLError, OSError, ValueError) as e:
            raise ToolError(f"request to {self.url} failed: {e}") from e
