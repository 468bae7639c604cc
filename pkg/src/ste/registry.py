"""Tool spec registry: loading, validation, rendering, parameter classes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class ParamKind(str, Enum):
    STRING = "STRING"
    ENUM = "ENUM"
    NUMBER = "NUMBER"
    BOOLEAN = "BOOLEAN"


class ParamClass(str, Enum):
    """How the evaluator compares a parameter's values."""

    STRICT = "STRICT"
    FREE = "FREE"


class SpecError(ValueError):
    """A registry document or spec failed validation.

    ``api`` and ``field`` locate the problem inside the document.
    """

    def __init__(self, message: str, api: str | None = None, field: str | None = None):
        self.api = api
        self.field = field
        where = ".".join(p for p in (api, field) if p)
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: ParamKind
    description: str = ""
    default: str | None = None
    allowed_values: tuple[str, ...] | None = None
    required: bool = True


@dataclass(frozen=True)
class ApiSpec:
    name: str
    description: str
    required_parameters: tuple[ParamSpec, ...] = ()
    optional_parameters: tuple[ParamSpec, ...] = ()

    @property
    def parameters(self) -> tuple[ParamSpec, ...]:
        return self.required_parameters + self.optional_parameters

    def param(self, name: str) -> ParamSpec | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.parameters]


def validate_spec(spec: ApiSpec) -> None:
    if not spec.name or not spec.name.strip():
        raise SpecError("API name must be non-empty", api=spec.name or "<unnamed>", field="name")
    seen: set[str] = set()
    for group, params in (
        ("required_parameters", spec.required_parameters),
        ("optional_parameters", spec.optional_parameters),
    ):
        for i, p in enumerate(params):
            path = f"{group}[{i}]"
            if not p.name:
                raise SpecError("parameter name must be non-empty", spec.name, f"{path}.name")
            if p.name in seen:
                raise SpecError(f"duplicate parameter {p.name!r}", spec.name, f"{path}.name")
            seen.add(p.name)
            if p.kind is ParamKind.ENUM and not p.allowed_values:
                raise SpecError("ENUM parameter requires allowed_values", spec.name, f"{path}.allowed_values")


def classify_param(p: ParamSpec) -> ParamClass:
    if p.kind is ParamKind.STRING and not p.allowed_values:
        return ParamClass.FREE
    return ParamClass.STRICT


def _param_from_dict(d: dict, api: str, path: str, required: bool) -> ParamSpec:
    if not isinstance(d, dict):
        raise SpecError("parameter must be an object", api, path)
    try:
        name = d["name"]
        kind_raw = d["type"]
    except KeyError as e:
        raise SpecError(f"missing key {e.args[0]!r}", api, path) from None
    try:
        kind = ParamKind(str(kind_raw).upper())
    except ValueError:
        raise SpecError(f"unknown parameter type {kind_raw!r}", api, f"{path}.type") from None
    allowed = d.get("allowed_values")
    if allowed is not None:
        if not isinstance(allowed, list):
            raise SpecError("allowed_values must be a list", api, f"{path}.allowed_values")
        allowed = tuple(str(v) for v in allowed)
    default = d.get("default")
    return ParamSpec(
        name=str(name),
        kind=kind,
        description=str(d.get("description", "")),
        default=None if default is None else str(default),
        allowed_values=allowed,
        required=required,
    )


def spec_from_dict(d: dict, index: int = 0) -> ApiSpec:
    if not isinstance(d, dict):
        raise SpecError("API entry must be an object", field=f"[{index}]")
    name = d.get("name")
    if not isinstance(name, str) or not name:
        raise SpecError("API name must be a non-empty string", field=f"[{index}].name")
    for key in ("required_parameters", "optional_parameters"):
        if not isinstance(d.get(key, []), list):
            raise SpecError(f"{key} must be a list", name, key)
    spec = ApiSpec(
        name=name,
        description=str(d.get("description", "")),
        required_parameters=tuple(
            _param_from_dict(p, name, f"required_parameters[{i}]", True)
            for i, p in enumerate(d.get("required_parameters", []))
        ),
        optional_parameters=tuple(
            _param_from_dict(p, name, f"optional_parameters[{i}]", False)
            for i, p in enumerate(d.get("optional_parameters", []))
        ),
    )
    validate_spec(spec)
    return spec


def _param_to_dict(p: ParamSpec) -> dict:
    d: dict = {"name": p.name, "type": p.kind.value, "description": p.description}
    if p.default is not None:
        d["default"] = p.default
    if p.allowed_values is not None:
        d["allowed_values"] = list(p.allowed_values)
    return d


def spec_to_dict(spec: ApiSpec) -> dict:
    return {
        "name": spec.name,
        "description": spec.description,
        "required_parameters": [_param_to_dict(p) for p in spec.required_parameters],
        "optional_parameters": [_param_to_dict(p) for p in spec.optional_parameters],
    }


def parse_specs(doc) -> list[ApiSpec]:
    if not isinstance(doc, list):
        raise SpecError("registry document must be a JSON array of API objects")
    specs = [spec_from_dict(d, i) for i, d in enumerate(doc)]
    names: set[str] = set()
    for s in specs:
        if s.name in names:
            raise SpecError("duplicate API name", s.name, "name")
        names.add(s.name)
    return specs


def load_specs(path: str | Path) -> list[ApiSpec]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise SpecError(f"cannot read registry file {path}: {e.strerror}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"malformed registry document {path}: {e}") from e
    return parse_specs(doc)


def write_specs(specs: Iterable[ApiSpec], path: str | Path) -> None:
    doc = [spec_to_dict(s) for s in specs]
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _render_param(p: ParamSpec) -> str:
    status = "required" if p.required else "optional"
    default = "none" if p.default is None else json.dumps(p.default, ensure_ascii=False)
    parts = [p.description] if p.description else []
    if p.allowed_values:
        parts.append(f"Allowed values: {', '.join(p.allowed_values)}.")
    return (f"- {p.name} ({p.kind.value}, {status}, default={default}): " + " ".join(parts)).rstrip()


def render_documentation(spec: ApiSpec) -> str:
    lines = [f"API name: {spec.name}", f"Description: {spec.description}", "Required parameters:"]
    lines += [_render_param(p) for p in spec.required_parameters] or ["(none)"]
    lines.append("Optional parameters:")
    lines += [_render_param(p) for p in spec.optional_parameters] or ["(none)"]
    return "\n".join(lines)


@dataclass(frozen=True)
class Registry:
    """Immutable name-indexed collection of API specs, in file order."""

    specs: tuple[ApiSpec, ...] = ()
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for s in self.specs:
            if s.name in self._index:
                raise SpecError("duplicate API name", s.name, "name")
            self._index[s.name] = s

    @classmethod
    def from_file(cls, path: str | Path) -> "Registry":
        return cls(tuple(load_specs(path)))

    def __getitem__(self, name: str) -> ApiSpec:
        return self._index[name]

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[ApiSpec]:
        return iter(self.specs)

    def __len__(self) -> int:
        return len(self.specs)

    def get(self, name: str) -> ApiSpec | None:
        return self._index.get(name)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]
