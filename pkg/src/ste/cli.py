"""Command-line entry point: ``ste <command> [options]``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import continual, demo
from .distill import (
    HeuristicJudge,
    LLMJudge,
    LLMParaphraser,
    TemplateParaphraser,
    balance_and_split,
    emit_examples,
    emit_finetune,
    emit_icl_pool,
    filter_trials,
    jsonl,
    load_examples,
    load_icl_pool,
    read_jsonl,
)
from .evaluate import LLMArgJudge, OfflineArgJudge, Prediction, aggregate, diversity_report
from .explorer import Ablation, ExplorationConfig, explore_all, trial_from_record
from .fixtures import build_sandbox, default_registry_path, load_fixtures
from .icl import DemoSelector, run_icl_eval
from .llm import DEFAULT_CONTEXT_LIMIT, Gateway, ScriptedBackend, backend_from_spec
from .memory import LongTermMemory
from .registry import Registry
from .sandbox import ToolCall
from .store import RunStore, atomic_write, dumps, find_runs, write_output_manifest

log = logging.getLogger("ste")

COMMANDS = ("explore", "distill", "icl-eval", "evaluate", "cl-plan", "cl-report", "diversity")


class UsageError(Exception):
    """Invalid or conflicting options."""


def _gateway(spec: str, temperature: float, context_limit: int, demo_kind: str, demo_args: dict | None = None) -> Gateway:
    if spec == "demo":
        rules = demo.exploration_script(**(demo_args or {})) if demo_kind == "explore" else demo.predictor_script()
        return Gateway(ScriptedBackend.from_json(rules), context_limit=context_limit)
    return Gateway(backend_from_spec(spec, temperature), context_limit=context_limit)


def _registry(path: str | None) -> Registry:
    return Registry.from_file(path or default_registry_path())


# ---- commands ----

def cmd_explore(args) -> dict:
    if args.no_ltm and args.ltm_file:
        raise UsageError("--no-ltm and --ltm-file cannot be combined")
    if args.total_trials is not None and args.episodes is not None:
        raise UsageError("--total-trials and --episodes cannot be combined")
    ablations = frozenset(
        a for a, on in (
            (Ablation.NO_STM, args.no_stm),
            (Ablation.NO_LTM, args.no_ltm),
            (Ablation.NO_FEEDBACK, args.no_feedback),
            (Ablation.NO_REFLECTION, args.no_reflection),
        ) if on
    )
    common = dict(max_calls=args.max_calls, seed=args.seed, ablations=ablations, context_limit=args.context_limit)
    if args.total_trials is not None:
        config = ExplorationConfig.preserving_total(args.total_trials, args.trials, **common)
    else:
        config = ExplorationConfig(episodes=args.episodes or 15, trials_per_episode=args.trials, **common)
    registry = _registry(args.apis)
    if args.only:
        registry = Registry(tuple(registry[n] for n in args.only))
    sandbox = build_sandbox(registry, load_fixtures(args.sandbox_fixtures))
    gateway = _gateway(
        args.llm, args.temperature, args.context_limit, "explore",
        {"episodes": config.episodes, "trials_per_episode": config.trials_per_episode},
    )
    initial = None
    if args.ltm_file:
        initial = LongTermMemory.from_list(json.loads(Path(args.ltm_file).read_text(encoding="utf-8")))
    snapshot = {
        "exploration": config.to_dict(),
        "apis": registry.names,
        "llm": args.llm,
        "temperature": args.temperature,
        "ltm_file": args.ltm_file,
    }
    run_id = args.run_id or "run-" + hashlib.sha256(dumps(snapshot).encode()).hexdigest()[:12]
    store = RunStore.open_or_create(args.out, run_id, snapshot)
    runs = explore_all(registry, config, gateway, sandbox, store, workers=args.workers, initial_ltm=initial)
    summary = {
        "run_dir": str(store.run_dir),
        "apis": {
            r.api_name: {"trials": len(r.trials), "ltm": len(r.ltm_final), "partial": r.partial, "error": r.error}
            for r in runs
        },
    }
    partial = [r.api_name for r in runs if r.partial]
    if partial:
        raise RuntimeError(f"exploration incomplete for {', '.join(partial)}; rerun the same command to resume")
    return summary


def _load_trials(runs_path: str) -> dict[str, list]:
    stores = find_runs(runs_path)
    if not stores:
        raise FileNotFoundError(f"no exploration runs under {runs_path}")
    trials: dict[str, list] = {}
    for store in stores:
        for api in store.apis:
            for doc in store.load_episodes(api):
                trials.setdefault(api, []).extend(trial_from_record(t) for t in doc["trials"])
    return trials


def cmd_distill(args) -> dict:
    trials = _load_trials(args.runs)
    registry = _registry(args.apis)
    if args.judge == "heuristic":
        judge = HeuristicJudge()
    else:
        judge = LLMJudge(_gateway(args.judge, 0.0, args.context_limit, "judge"), registry)
    if args.paraphraser == "template":
        paraphraser = TemplateParaphraser()
    else:
        paraphraser = LLMParaphraser(_gateway(args.paraphraser, 1.0, args.context_limit, "paraphrase"))
    passing, report = filter_trials(trials, judge)
    split = balance_and_split(passing, args.test_per_api, args.target_per_api, args.seed, paraphraser)
    out = Path(args.out)
    train, test = split.train_all(), split.test_all()
    if not train:
        raise RuntimeError("no API produced a train set; see the deficiency report")
    emit_examples(train, out / "train.jsonl")
    emit_examples(test, out / "test.jsonl")
    emit_finetune(train, out / "finetune.jsonl")
    emit_icl_pool(train, out / "icl_pool.jsonl")
    doc = report.to_dict()
    doc["split"] = {
        "train": {a: len(v) for a, v in split.train.items()},
        "test": {a: len(v) for a, v in split.test.items()},
        "deficient": split.deficient,
        "shortfall": split.shortfall,
    }
    atomic_write(out / "report.json", dumps(doc))
    files = ["train.jsonl", "test.jsonl", "finetune.jsonl", "icl_pool.jsonl", "report.json"]
    write_output_manifest(out, "distill", _snapshot(args), files)
    return {"out": str(out), **doc["split"], "positive_fraction": doc["positive_fraction_overall"]}


def cmd_icl_eval(args) -> dict:
    registry = _registry(args.apis)
    tests = read_jsonl(args.test)
    selector = None
    if args.k > 0:
        if not args.demos:
            raise UsageError("--demos is required when --k > 0")
        selector = DemoSelector(load_icl_pool(args.demos))
    gateway = _gateway(args.llm, args.temperature, args.context_limit, "predict")
    preds = run_icl_eval(
        tests, registry, gateway, selector, args.k, args.tool_top, args.tool_retrieval,
        args.demo_order == "most-similar-first", args.context_limit,
    )
    out = Path(args.out)
    atomic_write(out, jsonl(p.to_dict() for p in preds))
    write_output_manifest(out.parent, "icl-eval", _snapshot(args), [out.name])
    return {"out": str(out), "n": len(preds), "errors": sum(p.error is not None for p in preds)}


def _pred_text(d: dict) -> str:
    for key in ("raw_text", "prediction", "text", "output"):
        if key in d:
            return d[key] or ""
    raise ValueError("prediction records need a 'raw_text' field")


def cmd_evaluate(args) -> dict:
    registry = _registry(args.apis)
    preds, golds = read_jsonl(args.pred), read_jsonl(args.gold)
    if all("id" in p for p in preds) and all("id" in g for g in golds):
        by_id = {str(p["id"]): p for p in preds}
        missing = [str(g["id"]) for g in golds if str(g["id"]) not in by_id]
        if missing:
            raise ValueError(f"{len(missing)} gold examples have no prediction (first: {missing[0]})")
        preds = [by_id[str(g["id"])] for g in golds]
    if args.arg_judge == "offline":
        judge = OfflineArgJudge()
    elif args.arg_judge.startswith("llm:"):
        judge = LLMArgJudge(_gateway(args.arg_judge[4:], 0.0, args.context_limit, "judge"))
    else:
        raise UsageError("--arg-judge must be 'offline' or 'llm:<backend>'")
    report = aggregate(
        [Prediction.from_text(_pred_text(p)) for p in preds],
        [ToolCall.from_dict(g["call"]) for g in golds],
        registry,
        judge,
        queries=[g.get("query", "") for g in golds],
        ids=[str(g.get("id", i)) for i, g in enumerate(golds)],
    )
    out = Path(args.report)
    atomic_write(out, dumps(report.to_dict()))
    write_output_manifest(out.parent, "evaluate", _snapshot(args), [out.name])
    return {"report": str(out), "n": report.n, "wellformedness": report.wellformedness,
            "api_match": report.api_match, "correctness": report.correctness}


def _train_sets(path: str) -> dict:
    p = Path(path)
    files = [p / "train.jsonl"] if p.is_dir() else [p]
    sets: dict = {}
    for f in files:
        for e in load_examples(f):
            sets.setdefault(e.api_name, []).append(e)
    return sets


def cmd_cl_plan(args) -> dict:
    registry = _registry(args.apis)
    train = _train_sets(args.train)
    batches = continual.make_batches(registry.names, args.batches, args.seed)
    general = continual.load_general_pool(args.general)
    if args.general_count and not args.general:
        log.warning("--general-count given without --general; no general replay records")
    out = Path(args.out)
    plans = continual.plan_rounds(batches, train, general, args.general_count, args.rehearsal, args.seed, out)
    files = ["batches.json"] + [f"round-{p.round_index}.jsonl" for p in plans] + [f"round-{p.round_index}.plan.json" for p in plans]
    write_output_manifest(out, "cl-plan", _snapshot(args), files)
    return {"out": str(out), "batches": batches, "rounds": [p.to_dict() for p in plans]}


def cmd_cl_report(args) -> dict:
    table = continual.forgetting_report(continual.load_metrics_dir(args.metrics))
    out = Path(args.out)
    atomic_write(out, dumps(table))
    write_output_manifest(out.parent, "cl-report", _snapshot(args), [out.name])
    return table


def cmd_diversity(args) -> dict:
    if bool(args.runs) == bool(args.queries):
        raise UsageError("give exactly one of --runs or --queries")
    groups: dict[str, list[str]] = {}
    if args.runs:
        for api, trials in _load_trials(args.runs).items():
            groups[api] = [t.query for t in trials if t.query]
    else:
        text = Path(args.queries).read_text(encoding="utf-8")
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if lines and all(ln.lstrip().startswith("{") for ln in lines):
            groups["*"] = [json.loads(ln)["query"] for ln in lines]
        else:
            groups["*"] = [ln.strip() for ln in lines]
    doc = {api: diversity_report(qs).to_dict() for api, qs in sorted(groups.items())}
    if args.out:
        out = Path(args.out)
        atomic_write(out, dumps(doc))
        write_output_manifest(out.parent, "diversity", _snapshot(args), [out.name])
    return {api: {"distinct_fraction": d["distinct_fraction"], "n": d["n"]} for api, d in doc.items()}


# ---- parser ----

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values (command-line flags win)")
    p.add_argument("--seed", type=int, default=0, help="single source of randomness")
    p.add_argument("--context-limit", type=int, default=DEFAULT_CONTEXT_LIMIT)
    p.add_argument("--log-level", default="WARNING")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ste", description="Simulated trial-and-error tool learning.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("explore", help="run exploration episodes against a tool registry")
    _common(p)
    p.add_argument("--apis", help="registry JSON (default: bundled fixture registry)")
    p.add_argument("--only", nargs="+", help="explore only these API names")
    p.add_argument("--sandbox-fixtures", help="fixture JSON for the simulated tools")
    p.add_argument("--episodes", type=int, default=None, help="episodes per API (default 15)")
    p.add_argument("--trials", type=int, default=4, help="trials per episode")
    p.add_argument("--max-calls", type=int, default=4, help="tool calls per trial")
    p.add_argument("--total-trials", type=int, help="choose the episode count to keep this many trials")
    p.add_argument("--no-stm", action="store_true")
    p.add_argument("--no-ltm", action="store_true")
    p.add_argument("--no-feedback", action="store_true")
    p.add_argument("--no-reflection", action="store_true")
    p.add_argument("--ltm-file", help="JSON list of {query, success} seeding long-term memory")
    p.add_argument("--llm", help="demo | scripted:<path> | remote:<endpoint>#<model> | remote:@<config.json>")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--out", help="run root; the run lands in <out>/<run-id>/")
    p.add_argument("--run-id", help="default: hash of the configuration")
    p.add_argument("--workers", type=int, default=1, help="APIs explored in parallel")
    p.set_defaults(func=cmd_explore, required=("llm", "out"))

    p = sub.add_parser("distill", help="filter, paraphrase and split exploration trials into datasets")
    _common(p)
    p.add_argument("--runs", help="run directory or a directory containing runs")
    p.add_argument("--apis", help="registry JSON (used by the LLM judge)")
    p.add_argument("--test-per-api", type=int, default=15)
    p.add_argument("--target-per-api", type=int, default=140)
    p.add_argument("--judge", default="heuristic", help="heuristic | scripted:<path> | remote:...")
    p.add_argument("--paraphraser", default="template", help="template | scripted:<path> | remote:...")
    p.add_argument("--out")
    p.set_defaults(func=cmd_distill, required=("runs", "out"))

    p = sub.add_parser("icl-eval", help="predict calls with retrieved demonstrations")
    _common(p)
    p.add_argument("--demos", help="ICL pool JSONL")
    p.add_argument("--test", help="test JSONL (query, api_name)")
    p.add_argument("--apis", help="registry JSON")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--tool-top", type=int, default=15)
    p.add_argument("--tool-retrieval", choices=("oracle", "query"), default="oracle")
    p.add_argument("--demo-order", choices=("most-similar-first", "most-similar-last"), default="most-similar-first")
    p.add_argument("--llm")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_icl_eval, required=("test", "llm", "out"))

    p = sub.add_parser("evaluate", help="score predictions against gold calls")
    _common(p)
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--apis", help="registry JSON")
    p.add_argument("--arg-judge", default="offline", help="offline | llm:<backend>")
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate, required=("pred", "gold", "report"))

    p = sub.add_parser("cl-plan", help="compose continual-learning round datasets")
    _common(p)
    p.add_argument("--apis", help="registry JSON")
    p.add_argument("--batches", type=int, default=4)
    p.add_argument("--rehearsal", type=float, default=0.10)
    p.add_argument("--general", help="fine-tune-schema JSONL of general replay records")
    p.add_argument("--general-count", type=int, default=2000)
    p.add_argument("--train", help="distill output directory or train JSONL")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cl_plan, required=("train", "out"))

    p = sub.add_parser("cl-report", help="forgetting table from per-round metrics")
    _common(p)
    p.add_argument("--metrics", help="directory of round-<r>-batch-<b>.json reports")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cl_report, required=("metrics", "out"))

    p = sub.add_parser("diversity", help="distinct-query fraction of runs or a query list")
    _common(p)
    p.add_argument("--runs")
    p.add_argument("--queries", help="text file (one query per line) or JSONL with 'query'")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diversity, required=())
    return parser


def _snapshot(args) -> dict:
    skip = {"func", "required", "config", "log_level"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise UsageError("--config must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
    known = {a.dest for a in sub._actions}
    values = {k.replace("-", "_"): v for k, v in doc.items()}
    unknown = sorted(set(values) - known - {"command"})
    if unknown:
        raise UsageError(f"unknown option(s) in config file: {', '.join(unknown)}")
    values.pop("command", None)
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command = next((a for a in argv if a in COMMANDS), None)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        missing = [f"--{r.replace('_', '-')}" for r in args.required if getattr(args, r) in (None, "")]
        if missing:
            raise UsageError(f"missing required option(s): {', '.join(missing)}")
        result = args.func(args)
    except KeyboardInterrupt:
        print(json.dumps({"error": "Interrupted", "command": command, "message": "interrupted"}), file=sys.stderr)
        return 130
    except Exception as e:  # noqa: BLE001 - every failure becomes one machine-readable line
        kind = "UsageError" if isinstance(e, UsageError) else type(e).__name__
        message = " ".join(str(e).split()) or kind
        print(json.dumps({"error": kind, "command": command, "message": message}), file=sys.stderr)
        return 2 if isinstance(e, UsageError) else 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
