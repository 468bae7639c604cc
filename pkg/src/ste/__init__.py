"""Simulated trial-and-error tool learning: explore tools, distill examples, evaluate tool use."""

from .registry import ApiSpec, ParamSpec, Registry, load_specs, render_documentation
from .sandbox import Observation, ObsStatus, Sandbox, ToolCall
from .llm import Conversation, Gateway, Message, ScriptedBackend, ScriptRule
from .react import Trial, parse_assistant_turn, run_act_loop
from .memory import LongTermMemory, ShortTermMemory, assemble_trial_prompt
from .explorer import Ablation, ExplorationConfig, explore_api
from .distill import ToolUseExample, balance_and_split, extract_example
from .icl import HashedTrigramEmbedder, retrieve_tools, select_demos
from .evaluate import MetricsReport, aggregate, diversity_report
from .continual import compose_round, forgetting_report, make_batches

__version__ = "0.1.0"

__all__ = [
    "Ablation", "ApiSpec", "Conversation", "ExplorationConfig", "Gateway", "HashedTrigramEmbedder",
    "LongTermMemory", "Message", "MetricsReport", "Observation", "ObsStatus", "ParamSpec", "Registry",
    "Sandbox", "ScriptRule", "ScriptedBackend", "ShortTermMemory", "ToolCall", "ToolUseExample", "Trial",
    "aggregate", "assemble_trial_prompt", "balance_and_split", "compose_round", "diversity_report",
    "explore_api", "extract_example", "forgetting_report", "load_specs", "make_batches",
    "parse_assistant_turn", "render_documentation", "retrieve_tools", "run_act_loop", "select_demos",
]
