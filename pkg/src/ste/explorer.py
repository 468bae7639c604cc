"""Exploration phase: episodes of imagine -> act -> reflect trials."""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from . import prompts
from .llm import DEFAULT_CONTEXT_LIMIT, Conversation, Gateway, LLMError, ScriptError, assistant, user
from .memory import (
    LongTermMemory,
    Phase,
    ShortTermMemory,
    assemble_trial_prompt,
    count_replayed_trials,
    synthesis_message,
)
from .react import Trial, run_act_loop, run_single_shot
from .registry import ApiSpec, render_documentation
from .sandbox import Sandbox
from .store import RunStore

log = logging.getLogger(__name__)

NO_QUERY = "(no query was synthesized)"


class Ablation(str, Enum):
    NO_FEEDBACK = "NO_FEEDBACK"
    NO_STM = "NO_STM"
    NO_LTM = "NO_LTM"
    NO_REFLECTION = "NO_REFLECTION"


@dataclass(frozen=True)
class ExplorationConfig:
    episodes: int = 15
    trials_per_episode: int = 4
    max_calls: int = 4
    seed: int = 0
    ablations: frozenset[Ablation] = frozenset()
    context_limit: int = DEFAULT_CONTEXT_LIMIT

    def __post_init__(self):
        for name in ("episodes", "trials_per_episode", "max_calls"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        object.__setattr__(self, "ablations", frozenset(Ablation(a) for a in self.ablations))

    @classmethod
    def preserving_total(cls, total_trials: int, trials_per_episode: int, **kwargs) -> "ExplorationConfig":
        """Choose the episode count that keeps ``total_trials`` (rounded up to whole episodes)."""
        return cls(episodes=math.ceil(total_trials / trials_per_episode), trials_per_episode=trials_per_episode, **kwargs)

    @property
    def total_trials(self) -> int:
        return self.episodes * self.trials_per_episode

    def has(self, ablation: Ablation) -> bool:
        return ablation in self.ablations

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "trials_per_episode": self.trials_per_episode,
            "max_calls": self.max_calls,
            "seed": self.seed,
            "ablations": sorted(a.value for a in self.ablations),
            "context_limit": self.context_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExplorationConfig":
        return cls(
            episodes=d["episodes"],
            trials_per_episode=d["trials_per_episode"],
            max_calls=d["max_calls"],
            seed=d.get("seed", 0),
            ablations=frozenset(d.get("ablations", ())),
            context_limit=d.get("context_limit", DEFAULT_CONTEXT_LIMIT),
        )


@dataclass
class ExplorationRun:
    api_name: str
    episodes: list[tuple[int, list[Trial]]]
    ltm_final: LongTermMemory
    config: ExplorationConfig
    partial: bool = False
    error: str | None = None

    @property
    def trials(self) -> list[Trial]:
        return [t for _, ts in self.episodes for t in ts]


class EpisodeAborted(RuntimeError):
    def __init__(self, trials: list[Trial], cause: Exception):
        self.trials = trials
        self.cause = cause
        super().__init__(f"episode aborted after {len(trials)} trial(s): {cause}")


_QUERY_LABEL = re.compile(r"^\s*(?:synthesized\s+)?user\s+query\s*:\s*", re.IGNORECASE)


def synthesize_query(reply: str) -> str:
    text = _QUERY_LABEL.sub("", reply.strip(), count=1).strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    if not text:
        raise ValueError("synthesized query is empty")
    return text


def parse_reflection(reply: str) -> bool:
    m = re.match(r"[\s\"'*`>(\[]*([A-Za-z]+)", reply)
    return bool(m) and m.group(1).lower() == "yes"


def reflect(trial: Trial, gateway: Gateway, conversation: Conversation) -> bool:
    """Ask the reflection question; anything but a leading Yes counts as failure."""
    try:
        reply = gateway.complete(conversation).content
    except LLMError as e:
        trial.error = trial.error or f"reflection failed: {e}"
        return False
    trial.transcript += [conversation.messages[-1], assistant(reply)]
    return parse_reflection(reply)


class Explorer:
    def __init__(self, gateway: Gateway, sandbox: Sandbox, config: ExplorationConfig, api_names: Iterable[str] | None = None):
        self.gateway = gateway
        self.sandbox = sandbox
        self.config = config
        self.api_names = list(api_names) if api_names is not None else None

    def run_trial(
        self,
        spec: ApiSpec,
        stm: ShortTermMemory,
        ltm_view: LongTermMemory | None,
        index: int,
        tag: str,
    ) -> Trial:
        """Run one trial. Raises EpisodeAborted on a hard gateway failure (trial attached)."""
        cfg = self.config
        names = self.api_names if self.api_names is not None else [spec.name]
        doc = render_documentation(spec)
        trial = Trial(target_api=spec.name)
        stats: dict = {}

        synth = assemble_trial_prompt(
            doc, stm, ltm_view, index, Phase.SYNTHESIZE, api_names=names,
            context_limit=cfg.context_limit, tag=f"{tag}/synthesize",
        )
        stats["synthesize_ltm_lines"] = synth.messages[-1].content.count("| solved: ")
        try:
            reply = self.gateway.complete(synth).content
        except LLMError as e:
            trial.failed, trial.error = True, f"query synthesis failed: {e}"
            if not isinstance(e, ScriptError):
                raise EpisodeAborted([trial], e) from e
            return self._finish(trial, stats)
        try:
            trial.query = synthesize_query(reply)
        except ValueError as e:
            trial.failed, trial.error = True, str(e)
            return self._finish(trial, stats)
        trial.transcript = [user(synthesis_message(not stm.trials)), assistant(reply)]

        act = assemble_trial_prompt(
            doc, stm, ltm_view, index, Phase.ACT, current=trial, api_names=names,
            context_limit=cfg.context_limit, tag=f"{tag}/act",
        )
        stats["act_replayed_trials"] = count_replayed_trials(act)
        stats["act_has_ltm"] = any(prompts.LTM_HEADER in m.content for m in act.messages)
        if cfg.has(Ablation.NO_FEEDBACK):
            result = run_single_shot(trial.query, act, self.gateway, self.sandbox, names)
        else:
            result = run_act_loop(trial.query, act, cfg.max_calls, self.gateway, self.sandbox, names)
        trial.steps = result.steps
        trial.final_answer = result.final_answer
        trial.failed = result.failed
        trial.error = result.error
        trial.transcript += [act.messages[-1], *result.messages]
        if trial.transcript[-1].role.value == "user":
            trial.transcript.pop()
        if result.hard_failure:
            trial.reflection = False
            raise EpisodeAborted([self._finish(trial, stats)], result.exception)
        if result.exception is not None:
            trial.reflection = False
            return self._finish(trial, stats)

        if not cfg.has(Ablation.NO_REFLECTION):
            conv = assemble_trial_prompt(
                doc, stm, None, index, Phase.REFLECT, current=trial, api_names=names,
                context_limit=cfg.context_limit, tag=f"{tag}/reflect",
            )
            trial.reflection = reflect(trial, self.gateway, conv)
        return self._finish(trial, stats)

    @staticmethod
    def _finish(trial: Trial, stats: dict) -> Trial:
        trial.prompt_stats = stats  # type: ignore[attr-defined]
        return trial

    def ltm_success(self, trial: Trial) -> bool:
        if self.config.has(Ablation.NO_REFLECTION):
            return True
        return bool(trial.reflection)

    def run_episode(self, spec: ApiSpec, stm: ShortTermMemory, ltm: LongTermMemory, episode: int) -> list[Trial]:
        cfg = self.config
        stm.clear()
        ltm_view = None if cfg.has(Ablation.NO_LTM) else ltm.snapshot()
        trials: list[Trial] = []
        for i in range(cfg.trials_per_episode):
            tag = f"explore/{spec.name}/e{episode}/t{i + 1}"
            try:
                trial = self.run_trial(spec, stm, ltm_view, i, tag)
            except EpisodeAborted as e:
                for t in e.trials:
                    trials.append(t)
                    if not cfg.has(Ablation.NO_LTM):
                        ltm.append(t.query or NO_QUERY, cfg.has(Ablation.NO_REFLECTION))
                raise EpisodeAborted(trials, e.cause) from e.cause
            trials.append(trial)
            if not cfg.has(Ablation.NO_STM):
                stm.append(trial)
            if not cfg.has(Ablation.NO_LTM):
                # one entry per trial, failed ones included
                ltm.append(trial.query or NO_QUERY, self.ltm_success(trial))
        return trials


def trial_record(trial: Trial) -> dict:
    d = trial.to_dict()
    d["prompt_stats"] = getattr(trial, "prompt_stats", {})
    return d


def trial_from_record(d: dict) -> Trial:
    t = Trial.from_dict(d)
    t.prompt_stats = d.get("prompt_stats", {})  # type: ignore[attr-defined]
    return t


def run_episode(
    api: ApiSpec,
    stm: ShortTermMemory,
    ltm: LongTermMemory,
    config: ExplorationConfig,
    gateway: Gateway,
    sandbox: Sandbox,
    episode: int = 1,
) -> list[Trial]:
    return Explorer(gateway, sandbox, config).run_episode(api, stm, ltm, episode)


def explore_api(
    spec: ApiSpec,
    config: ExplorationConfig,
    gateway: Gateway,
    sandbox: Sandbox,
    store: RunStore | None = None,
    api_names: Iterable[str] | None = None,
    initial_ltm: LongTermMemory | None = None,
) -> ExplorationRun:
    """Explore one API for ``config.episodes`` episodes, resuming from ``store`` when it has progress.

    ``initial_ltm`` seeds long-term memory for a fresh run (ignored when resuming).
    """
    explorer = Explorer(gateway, sandbox, config, api_names)
    start = initial_ltm.snapshot() if initial_ltm is not None else LongTermMemory()
    run = ExplorationRun(spec.name, [], start, config)
    if store is not None:
        for doc in store.load_episodes(spec.name):
            run.episodes.append((doc["episode"], [trial_from_record(t) for t in doc["trials"]]))
            run.ltm_final = LongTermMemory.from_list(doc["ltm"])
        if run.episodes:
            log.info("%s: resuming after episode %d", spec.name, run.episodes[-1][0])
    stm = ShortTermMemory(config.trials_per_episode)
    for k in range(len(run.episodes) + 1, config.episodes + 1):
        try:
            trials = explorer.run_episode(spec, stm, run.ltm_final, k)
        except EpisodeAborted as e:
            run.episodes.append((k, e.trials))
            run.partial, run.error = True, str(e)
            log.error("%s: %s", spec.name, e)
            if store is not None:
                store.set_status(spec.name, "partial")
            break
        run.episodes.append((k, trials))
        if store is not None:
            store.persist_episode(spec.name, k, [trial_record(t) for t in trials], run.ltm_final.to_list())
    else:
        if store is not None:
            store.set_status(spec.name, "complete")
    return run


def explore_all(
    specs: Iterable[ApiSpec],
    config: ExplorationConfig,
    gateway: Gateway,
    sandbox: Sandbox,
    store: RunStore | None = None,
    workers: int = 1,
    initial_ltm: LongTermMemory | None = None,
) -> list[ExplorationRun]:
    """Explore several APIs; each API is an independent worker with its own memory."""
    specs = list(specs)

    def one(s: ApiSpec) -> ExplorationRun:
        return explore_api(s, config, gateway, sandbox, store, initial_ltm=initial_ltm)

    if workers <= 1:
        return [one(s) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, specs))
