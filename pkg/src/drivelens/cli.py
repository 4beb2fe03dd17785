"""Command-line entry point.

Subcommands: describe, eval, sweep, optimize, label, stats, export-ft,
serve, report.  Option precedence is flags, then the config file, then
built-in defaults.  Two mock models are always available: ``mock-oracle``
(answers from the manifest's gold labels, optional seeded error rate) and
``mock-scripted`` (answers from a fixture file via ``--mock-fixture``).
HTTP models are defined in ``[model:NAME]`` config sections; their bearer
token is read from the environment variable named by ``token_env``
(default ``DRIVELENS_API_TOKEN``).
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from . import __version__, datastore, harness, promptopt
from .curation import ReviewStore, create_app
from .datastore import (
    DatasetRecord,
    ExportError,
    ManifestError,
    SplitSpec,
    dataset_stats,
    load_manifest,
    replay_corrections,
    save_manifest,
)
from .gateway import (
    KIND_HTTP,
    KIND_MOCK,
    CompletionCache,
    Gateway,
    GatewayError,
    MockScriptError,
    ModelSpec,
    OpenAICompatBackend,
    OracleMockBackend,
    RateLimiter,
    ScriptedMockBackend,
)
from .harness import build_report, emit_report, load_item_rows, resolution_sweep, run_batch
from .imageprep import BASE_LEVEL, RESOLUTION_LEVELS, load_image
from .pipeline import (
    LAYER_SLOTS,
    METHOD_IDS,
    SLOT_EVALUATION,
    default_prompt_set,
    describe_scene,
    get_method,
    load_prompt_set,
    planned_queries,
)

MOCK_ORACLE = "mock-oracle"
MOCK_SCRIPTED = "mock-scripted"

_MODEL_FIELD_TYPES = {
    "kind": str,
    "base_url": str,
    "fixture_path": str,
    "input_price_per_mtok": float,
    "output_price_per_mtok": float,
    "timeout_s": float,
    "max_retries": int,
    "backoff_base_s": float,
    "temperature": float,
    "max_output_tokens": int,
    "image_base_tokens": int,
    "max_in_flight": int,
    "requests_per_minute": int,
    "token_env": str,
}


class CliError(RuntimeError):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _load_config(path: str | None) -> configparser.ConfigParser:
    config = configparser.ConfigParser()
    if path:
        read = config.read(path)
        if not read:
            raise CliError("config", f"config file not found: {path}")
    return config


def _setting(args_value, config: configparser.ConfigParser, key: str, builtin):
    """flags > config [defaults] > built-in."""
    if args_value is not None:
        return args_value
    if config.has_option("defaults", key):
        raw = config.get("defaults", key)
        return type(builtin)(raw) if builtin is not None else raw
    return builtin


def _model_spec(name: str, config: configparser.ConfigParser) -> ModelSpec:
    if name == MOCK_ORACLE or name == MOCK_SCRIPTED:
        return ModelSpec(name=name, kind=KIND_MOCK)
    section = f"model:{name}"
    if not config.has_section(section):
        raise CliError(
            "config",
            f"model {name!r} not defined; add a [{section}] section or use "
            f"{MOCK_ORACLE}/{MOCK_SCRIPTED}",
        )
    kwargs: dict = {}
    for key, value in config.items(section):
        caster = _MODEL_FIELD_TYPES.get(key)
        if caster is None:
            raise CliError("config", f"[{section}] unknown option {key!r}")
        kwargs[key] = caster(value)
    kwargs.setdefault("kind", KIND_HTTP)
    try:
        return ModelSpec(name=name, **kwargs)
    except ValueError as exc:
        raise CliError("config", str(exc)) from exc


def _build_gateway(
    spec: ModelSpec,
    args: argparse.Namespace,
    records: list[DatasetRecord] | None = None,
) -> Gateway:
    if spec.kind == KIND_MOCK:
        if spec.name == MOCK_SCRIPTED:
            fixture = getattr(args, "mock_fixture", None) or spec.fixture_path
            if not fixture:
                raise CliError("usage", f"{MOCK_SCRIPTED} needs --mock-fixture")
            backend = ScriptedMockBackend.from_fixture(fixture)
        else:
            if not records:
                raise CliError("usage", f"{MOCK_ORACLE} needs a manifest with gold labels")
            if any(r.gold is None for r in records):
                raise CliError("usage", f"{MOCK_ORACLE} needs gold labels on every record")
            # Overlapping record lists (e.g. train + dev) are fine as long
            # as a repeated id carries the same label.
            gold: dict = {}
            for r in records:
                prior = gold.get(r.item_id)
                if prior is not None and prior != r.gold:
                    raise CliError("data", f"conflicting gold labels for item {r.item_id!r}")
                gold[r.item_id] = r.gold
            backend = OracleMockBackend(
                gold,
                error_rate=getattr(args, "oracle_error_rate", 0.0) or 0.0,
                seed=getattr(args, "oracle_seed", 0) or 0,
            )
    else:
        backend = OpenAICompatBackend(spec)
    cache = None
    if not getattr(args, "no_cache", False):
        cache_dir = getattr(args, "cache_dir", None)
        if cache_dir:
            cache = CompletionCache(cache_dir)
    limiter = RateLimiter(spec.max_in_flight, spec.requests_per_minute)
    return Gateway(backend, cache=cache, limiter=limiter)


def _prompts(args: argparse.Namespace):
    prompt_dir = getattr(args, "prompt_dir", None)
    return load_prompt_set(prompt_dir) if prompt_dir else default_prompt_set()


def _records(args: argparse.Namespace, need_gold: bool = False) -> list[DatasetRecord]:
    records = load_manifest(args.manifest)
    log = getattr(args, "log", None)
    if log and Path(log).exists():
        records = replay_corrections(records, log)
    if getattr(args, "limit", None):
        records = records[: args.limit]
    if need_gold:
        missing = [r.item_id for r in records if r.gold is None]
        if missing:
            raise CliError(
                "data", f"{len(missing)} record(s) lack gold labels, e.g. {missing[:3]}"
            )
    return records


def _print_summary(report: harness.RunReport) -> None:
    row = report.summary_row()
    print(f"method={row['method']} model={row['model']} resolution={row['resolution']}p")
    print(
        f"items={row['items']} errors={row['errors']} "
        f"tp={row['tp']} fp={row['fp']} tn={row['tn']} fn={row['fn']}"
    )
    print(
        f"accuracy={row['accuracy']:.3f} precision={row['precision']:.3f} "
        f"recall={row['recall']:.3f} f1={row['f1']:.3f}"
    )
    print(
        f"queries={row['queries']} mean_tokens/query={row['mean_tokens_per_query']:.1f} "
        f"mean_latency={row['mean_latency_s_per_query']:.3f}s billed_cost={row['billed_cost']:.6f}"
    )
    if report.failure_rate_rows:
        print("failure rates by gold combination:")
        for fr in report.failure_rate_rows:
            print(f"  {fr.key:<10} n={fr.total:<5} failures={fr.failures:<5} {fr.rate_pct:.1f}%")


# ---------------------------------------------------------------- commands

def _cmd_describe(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    spec = _model_spec(args.model, config)
    gw = _build_gateway(spec, args)
    prompts = _prompts(args)
    image = load_image(args.image)
    scene, _ = describe_scene(image, spec, gw, prompts, level=args.resolution)
    print(scene.aggregate_text)
    return 0


def _cmd_eval(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    method = get_method(args.method)
    records = _records(args, need_gold=True)
    if args.dry_run:
        total = planned_queries(method, len(records))
        print(f"plan: method={method.method_id} items={len(records)}")
        print(f"plan: queries/item={method.planned_queries_per_item} total_queries={total}")
        print("plan: no model calls made (dry run)")
        return 0
    spec = _model_spec(args.model, config)
    gw = _build_gateway(spec, args, records)
    prompts = _prompts(args)
    report = run_batch(
        records, method, spec, gw, prompts, level=args.resolution, workers=args.workers
    )
    if args.out:
        files = emit_report(report, args.out)
        print(f"report written to {args.out}: {', '.join(files)}")
    _print_summary(report)
    return 0


def _cmd_sweep(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    method = get_method(args.method)
    records = _records(args, need_gold=True)
    spec = _model_spec(args.model, config)
    gw = _build_gateway(spec, args, records)
    prompts = _prompts(args)
    levels = [int(v) for v in args.levels.split(",") if v.strip()]
    reports = resolution_sweep(
        records, method, spec, gw, prompts, levels=levels, workers=args.workers
    )
    base = next((r for r in reports if r.resolution_level == int(BASE_LEVEL)), None)
    for report in reports:
        if args.out:
            emit_report(report, Path(args.out) / f"level_{report.resolution_level}")
        ratio = ""
        if base is not None and base.mean_image_tokens_per_query:
            ratio = f" ratio_vs_360={report.mean_image_tokens_per_query / base.mean_image_tokens_per_query:.3f}"
        print(
            f"level={report.resolution_level}p accuracy={report.metrics.accuracy:.3f} "
            f"mean_image_tokens/query={report.mean_image_tokens_per_query:.1f}{ratio}"
        )
    if args.out:
        print(f"per-level reports written under {args.out}")
    return 0


def _cmd_optimize(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    method = get_method(args.method)
    if not method.layered:
        raise CliError("usage", "optimization targets layered methods (text, full and variants)")
    train = load_manifest(args.manifest)
    dev = load_manifest(args.dev_manifest)
    spec = _model_spec(args.model, config)
    gw = _build_gateway(spec, args, train + dev)
    prompts = _prompts(args)
    metric = promptopt.METRICS.get(args.metric)
    if metric is None:
        raise CliError("usage", f"unknown metric {args.metric!r}; have {', '.join(promptopt.METRICS)}")

    slots = [LAYER_SLOTS[layer] for layer in LAYER_SLOTS] + [SLOT_EVALUATION]
    demos = promptopt.bootstrap_demos(
        train, method, spec, gw, prompts, k=args.demos, seed=args.seed, level=args.resolution
    )
    instruction_candidates = {}
    for slot in slots:
        base = prompts.templates[slot].instruction
        instruction_candidates[slot] = promptopt.propose_instructions(
            base, args.proposals, spec, gw
        )
    budget = promptopt.OptBudget(
        max_candidate_programs=args.max_programs,
        max_metric_evaluations=args.max_evals,
        seed=args.seed,
        demos_per_slot=args.demos,
    )
    evaluator = promptopt.make_pipeline_evaluator(dev, method, spec, gw, level=args.resolution)
    result = promptopt.search(
        prompts, slots, instruction_candidates, demos, evaluator, metric, budget
    )
    promptopt.save_search_result(result, budget, args.out)
    print(
        f"optimized prompts written to {args.out} "
        f"(dev {args.metric}: incumbent={result.incumbent_score:.3f} "
        f"best={result.dev_score:.3f} candidate={result.best_index} "
        f"evaluations={result.evaluations_used}{' partial' if result.partial else ''})"
    )
    return 0


def _cmd_label(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    method = get_method(args.method)
    records = load_manifest(args.manifest)
    if args.dry_run:
        pending = datastore.autolabel_plan(records, args.store, force=args.force)
        print(f"plan: {len(pending)} of {len(records)} item(s) pending annotation")
        for record in pending[:10]:
            print(f"plan: pending {record.item_id}")
        if len(pending) > 10:
            print(f"plan: ... and {len(pending) - 10} more")
        print("plan: no model calls made (dry run)")
        return 0
    spec = _model_spec(args.model, config)
    gw = _build_gateway(spec, args, records)
    prompts = _prompts(args)
    merged = datastore.autolabel(
        records, method, spec, gw, prompts, args.store,
        level=args.resolution, force=args.force,
    )
    annotated = sum(1 for r in merged if r.annotation is not None)
    errored = sum(1 for r in merged if r.error is not None)
    if args.out_manifest:
        save_manifest(merged, args.out_manifest)
        print(f"annotated manifest written to {args.out_manifest}")
    print(f"labeled {annotated}/{len(merged)} item(s), {errored} error(s); store: {args.store}")
    return 0


def _cmd_stats(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    records = _records(args)
    stats = dataset_stats(records)
    print(f"records={stats.total} labeled={stats.labeled}")
    print(
        f"anomalous={stats.anomalous} ({100 * stats.anomalous_share:.1f}%) "
        f"normal={stats.normal}"
    )
    if stats.anomalous:
        print("layer shares among anomalous:")
        for layer, count in stats.layer_counts.items():
            print(f"  {layer.label:<15} {count:>6} ({100 * stats.layer_share(layer):.1f}%)")
        print("layers-per-item histogram:")
        for n in sorted(stats.multilayer_hist):
            share = 100 * stats.multilayer_share(n)
            print(f"  {n} layer(s): {stats.multilayer_hist[n]} ({share:.1f}%)")
        print("combinations:")
        ordered = sorted(
            stats.combination_counts.items(), key=lambda kv: (-kv[1], kv[0])
        )
        for key, count in ordered:
            print(f"  {key:<10} {count}")
    return 0


def _cmd_split(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    records = _records(args, need_gold=True)
    spec = SplitSpec(size=args.size, seed=args.seed, balanced=not args.unbalanced)
    subset, complement = datastore.balanced_subset(records, spec)
    save_manifest(subset, args.out)
    print(f"subset of {len(subset)} written to {args.out}")
    if args.complement_out:
        save_manifest(complement, args.complement_out)
        print(f"complement of {len(complement)} written to {args.complement_out}")
    return 0


def _cmd_export_ft(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    records = _records(args)
    prompts = _prompts(args)
    result = datastore.export_finetune(records, args.mode, prompts, args.out)
    print(
        f"exported {result.conversations} conversation(s) for {result.items} item(s) "
        f"to {result.path} (mode={result.mode}); excluded {result.excluded_unreviewed} unreviewed"
    )
    return 0


def _cmd_serve(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    records = load_manifest(args.manifest)
    records = replay_corrections(records, args.log)
    store = ReviewStore(records, args.log, lease_seconds=args.lease_seconds)
    app = create_app(store, static_dir=args.static_dir)
    import uvicorn

    print(f"serving curation API on http://{args.host}:{args.port} (audit log: {args.log})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_report(args: argparse.Namespace, config: configparser.ConfigParser) -> int:
    run_dir = Path(args.run_dir)
    rows_raw = load_item_rows(run_dir / "items.jsonl")
    import csv as _csv

    with open(run_dir / "summary.csv", encoding="utf-8") as fh:
        summary = next(_csv.DictReader(fh))
    rows = tuple(
        harness.ItemRow(
            item_id=d["item"],
            gold_anomalous=bool(d["gold_anomalous"]),
            gold_key=d["gold_key"],
            predicted=d["predicted"],
            predicted_key=d["predicted_key"],
            parse_status=d["parse_status"],
            error=d["error"],
            queries=tuple(d["queries"]),
        )
        for d in rows_raw
    )
    report = build_report(
        rows,
        method_id=summary["method"],
        model_name=summary["model"],
        resolution_level=int(summary["resolution"]),
        prompt_origin=summary["prompts"],
    )
    _print_summary(report)
    return 0


# ---------------------------------------------------------------- parser

def _add_common_model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="model name (config section, mock-oracle or mock-scripted)")
    p.add_argument("--prompt-dir", help="prompt-set directory (default: built-in prompts)")
    p.add_argument("--resolution", type=int, choices=[int(lv) for lv in RESOLUTION_LEVELS],
                   help="resolution level (default 360)")
    p.add_argument("--cache-dir", help="completion cache directory (default: no cache)")
    p.add_argument("--no-cache", action="store_true", help="disable the completion cache")
    p.add_argument("--mock-fixture", help="fixture file for mock-scripted")
    p.add_argument("--oracle-error-rate", type=float, help="mock-oracle error rate (default 0)")
    p.add_argument("--oracle-seed", type=int, help="mock-oracle error seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivelens",
        description="Layered scene description and anomaly evaluation for driving imagery.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI config file ([defaults] and [model:NAME] sections)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="describe one image layer by layer")
    p.add_argument("image")
    _add_common_model_opts(p)
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("eval", help="evaluate a method over a labeled manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", required=True, help=f"one of: {', '.join(METHOD_IDS)}")
    p.add_argument("--workers", type=int)
    p.add_argument("--limit", type=int, help="evaluate only the first N records")
    p.add_argument("--out", help="report output directory")
    p.add_argument("--log", help="correction log to replay over the manifest")
    p.add_argument("--dry-run", action="store_true", help="print the query plan and exit")
    _add_common_model_opts(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="evaluate one method across resolution levels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--levels", default=",".join(str(int(lv)) for lv in RESOLUTION_LEVELS))
    p.add_argument("--workers", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--out", help="directory for per-level reports")
    _add_common_model_opts(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("optimize", help="optimize prompts against a dev set")
    p.add_argument("--manifest", required=True, help="training manifest (demo bootstrap)")
    p.add_argument("--dev-manifest", required=True, help="dev manifest (candidate scoring)")
    p.add_argument("--method", required=True)
    p.add_argument("--out", required=True, help="output prompt-set directory")
    p.add_argument("--proposals", type=int, default=3, help="instruction rewrites per slot")
    p.add_argument("--max-programs", type=int, default=8)
    p.add_argument("--max-evals", type=int, default=9)
    p.add_argument("--demos", type=int, default=4, help="max demos per slot")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", default="f1", help=f"one of: {', '.join(promptopt.METRICS)}")
    _add_common_model_opts(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("label", help="auto-label a manifest with model annotations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--store", required=True, help="append-only annotation store (resumable)")
    p.add_argument("--out-manifest", help="write the merged, annotated manifest here")
    p.add_argument("--force", action="store_true", help="re-annotate items already in the store")
    p.add_argument("--dry-run", action="store_true", help="print pending items and exit")
    _add_common_model_opts(p)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("stats", help="label composition of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--log", help="correction log to replay over the manifest")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("split", help="draw a seeded (balanced) subset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unbalanced", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--complement-out")
    p.add_argument("--log", help="correction log to replay over the manifest")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("export-ft", help="export reviewed labels as fine-tuning conversations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=[datastore.EXPORT_SINGLE_SHOT, datastore.EXPORT_PIPELINE],
                   required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="correction log to replay over the manifest")
    p.add_argument("--prompt-dir")
    p.set_defaults(func=_cmd_export_ft)

    p = sub.add_parser("serve", help="serve the curation API (and UI when built)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--log", required=True, help="audit/correction log path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--lease-seconds", type=float, default=300.0)
    p.add_argument("--static-dir", help="directory with the built review UI")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("report", help="re-render summaries from a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        if hasattr(args, "workers"):
            args.workers = int(_setting(args.workers, config, "workers", 4))
        if hasattr(args, "resolution"):
            args.resolution = int(_setting(args.resolution, config, "resolution", int(BASE_LEVEL)))
        if hasattr(args, "model"):
            args.model = _setting(args.model, config, "model", MOCK_ORACLE)
        if hasattr(args, "cache_dir"):
            args.cache_dir = _setting(args.cache_dir, config, "cache_dir", None)
        return args.func(args, config)
    except CliError as exc:
        print(f"error ({exc.category}): {exc}", file=sys.stderr)
        return 2 if exc.category == "usage" else 1
    except KeyError as exc:
        # get_method raises KeyError with a message listing valid ids
        print(f"error (usage): {exc.args[0]}", file=sys.stderr)
        return 2
    except (ManifestError, ExportError) as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return 1
    except (GatewayError, MockScriptError) as exc:
        print(f"error (gateway): {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error (invalid): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
