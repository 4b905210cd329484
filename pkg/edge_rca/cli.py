"""
edge-rca command line.

    edge-rca parse logs/hdfs.log -o out/events.jsonl
    edge-rca reason out/events.jsonl -o out/graph.json
    edge-rca diagnose out/graph.json -o out/report.json --offline
    edge-rca eval --datasets storage control_plane --out results/ --resume
    edge-rca kb init|verify|approve|stats --kb kb/

Exit codes: 0 ok, 1 usage, 2 data, 3 memory budget, 4 model backend.
"""
import argparse
import json
import logging
import shutil
import sys
from contextlib import nullcontext
from pathlib import Path
from typing import Dict, List, Optional

from rich.table import Table

from edge_rca.action.agent import diagnose
from edge_rca.clients.factory import make_client
from edge_rca.data.loaders import read_events, read_raw_logs, write_events
from edge_rca.harness.benchmark import BenchmarkInterrupted, run_benchmark, write_results
from edge_rca.harness.dashboard import BenchmarkDashboard, results_table
from edge_rca.harness.methods import METHODS
from edge_rca.harness.suite import load_suite
from edge_rca.kb.knowledge_base import KnowledgeBase
from edge_rca.perception.cache import TemplateCache
from edge_rca.perception.masking import rules_from_config
from edge_rca.perception.router import parse_stream
from edge_rca.reasoning.learner import learn_graph
from edge_rca.utils.config import PipelineConfig, load_config
from edge_rca.utils.errors import BudgetExceeded, DataError, EdgeRcaError, MissingDirectory, UsageError
from edge_rca.utils.log import console, err_console, setup_logging
from edge_rca.utils.specs import NOISE_LEVELS, CausalGraph, MetricsReport

logger = logging.getLogger("edge_rca.cli")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here map to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _write_json(path: str, doc: Dict) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: str) -> Dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{path} not found")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}") from e


def _open_kb(cfg: PipelineConfig, required: bool = False) -> Optional[KnowledgeBase]:
    kb_dir = cfg.paths.kb_dir
    if kb_dir and Path(kb_dir).is_dir():
        kb = KnowledgeBase.load(kb_dir, dim=cfg.perception.embedding_dim)
        for message in kb.diagnostics:
            logger.warning("kb: %s", message)
        return kb
    if required:
        raise MissingDirectory(f"knowledge base directory {kb_dir} not found (run `edge-rca kb init`)")
    logger.info("no knowledge base at %s; running without one", kb_dir)
    return None


def _output(cfg: PipelineConfig, given: Optional[str], source: str, suffix: str) -> str:
    if given:
        return given
    if cfg.paths.output:
        return str(Path(cfg.paths.output) / (Path(source).stem + suffix))
    return str(Path(source).with_suffix(suffix))


def _summary_table(title: str, values: Dict) -> Table:
    table = Table(title=title)
    table.add_column("Field")
    table.add_column("Value", justify="right")
    for k, v in values.items():
        table.add_row(str(k), str(v))
    return table


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def cmd_parse(args, cfg: PipelineConfig) -> int:
    source = args.input or cfg.paths.input
    if not source:
        raise UsageError("parse needs an input file (positional or paths.input)")
    logs = read_raw_logs(source, continuation=cfg.perception.continuation_pattern)
    kb = _open_kb(cfg)
    rules = rules_from_config(cfg.perception)
    cache = TemplateCache(cfg.perception.cache_capacity)

    if args.dry_run:
        events, stats = parse_stream(logs, cache, kb, None, cfg.perception.delta_sim, rules,
                                     promote_l2=cfg.perception.promote_l2, enqueue_l3=False)
        plan = Table(title=f"Route plan for {source}")
        for col in ("seq", "tier", "template"):
            plan.add_column(col)
        for e in events:
            plan.add_row(str(e.seq), e.tier, e.template_text)
        console.print(plan)
        console.print(_summary_table("Routes", stats.summary()))
        return 0

    client = make_client(cfg.client, offline=args.offline)
    try:
        events, stats = parse_stream(logs, cache, kb, client, cfg.perception.delta_sim, rules,
                                     promote_l2=cfg.perception.promote_l2)
    finally:
        client.close()
    out = _output(cfg, args.output, source, ".events.jsonl")
    n = write_events(out, events, cfg.config_hash())
    for err in stats.errors:
        logger.warning("%s", err)
    console.print(_summary_table(f"Parsed {n} events -> {out}", {**stats.summary(), "model_calls": client.calls}))
    return 0


def cmd_reason(args, cfg: PipelineConfig) -> int:
    events = read_events(args.events)
    kb = _open_kb(cfg)
    use_priors = False if args.no_priors else None
    graph, X, result = learn_graph(events, kb, cfg.reasoning, use_priors=use_priors)
    record = graph.to_record()
    record["config_hash"] = cfg.config_hash()
    record["solver"] = {"h": result.h, "rho": result.rho, "loss": result.loss, "converged": result.converged,
                        "outer_iterations": result.outer_iterations, "flags": result.flags}
    out = _output(cfg, args.output, args.events, ".graph.json")
    _write_json(out, record)
    console.print(_summary_table(f"Causal graph -> {out}", {
        "windows": X.m, "event types": X.d, "intra edges": len(graph.intra_edges),
        "inter edges": len(graph.inter_edges), "converged": result.converged,
    }))
    return 0


def cmd_diagnose(args, cfg: PipelineConfig) -> int:
    graph = CausalGraph.from_record(_read_json(args.graph))
    kb = _open_kb(cfg)
    client = make_client(cfg.client, offline=args.offline)
    try:
        report = diagnose(graph, kb, client, cfg.action, cfg.config_hash())
    finally:
        client.close()
    out = _output(cfg, args.output, args.graph, ".report.json")
    _write_json(out, report.to_document())
    console.print(_summary_table(f"Diagnosis -> {out}", {
        "root cause": report.root_cause, "action": report.action, "decision path": report.decision_path,
        "degraded": report.degraded, "model calls": client.calls,
    }))
    return 0


def cmd_eval(args, cfg: PipelineConfig) -> int:
    out_dir = Path(args.out or cfg.paths.output or "results")
    checkpoints = Path(cfg.eval.checkpoint_dir) if cfg.eval.checkpoint_dir else out_dir / "checkpoints"
    if not args.resume and checkpoints.exists():
        shutil.rmtree(checkpoints)
    config_hash = cfg.config_hash()
    reports: List[MetricsReport] = []
    total = len(cfg.eval.datasets) * len(cfg.eval.methods) * len(cfg.eval.levels)
    view = BenchmarkDashboard(total, console=console) if cfg.eval.dashboard else nullcontext()

    try:
        with view as dashboard:
            for name in cfg.eval.datasets:
                suite = load_suite(name, cfg, args.manifest)
                logger.info("%s: %d incident(s), %d line(s)", name, len(suite.cases),
                            sum(len(c.logs) for c in suite.cases))
                reports += run_benchmark(suite, cfg, checkpoint_dir=str(checkpoints), stop_after=args.stop_after,
                                         on_cell=dashboard.on_cell if dashboard is not None else None,
                                         show_progress=dashboard is None and not args.quiet)
    except BudgetExceeded as e:
        reports += e.partial
        paths = write_results(reports, str(out_dir), config_hash)
        err_console.print(f"[red]memory budget exceeded[/]: {e}; partial results in {paths['results']}")
        return e.exit_code
    except BenchmarkInterrupted as e:
        err_console.print(f"[yellow]interrupted[/]: {e}; rerun with --resume to continue")
        return 130

    paths = write_results(reports, str(out_dir), config_hash)
    if not args.quiet:
        console.print(results_table(reports))
    console.print(f"results: {paths['results']}  resources: {paths['resources']}  config: {config_hash}")
    return 0


def cmd_kb(args, cfg: PipelineConfig) -> int:
    kb_dir = cfg.paths.kb_dir or "kb"
    if args.kb_command == "init":
        kb = KnowledgeBase.init(kb_dir, dim=cfg.perception.embedding_dim)
        if args.from_suite:
            suite = load_suite(args.from_suite, cfg)
            kb.add_validated([*suite.kb_templates, *suite.kb_priors, *suite.kb_cases])
        console.print(_summary_table(f"Knowledge base {kb_dir}", kb.counts()))
        return 0

    kb = _open_kb(cfg, required=True)
    if args.kb_command == "verify":
        problems = kb.verify()
        for p in problems + kb.diagnostics:
            err_console.print(f"[red]✗[/] {p}")
        if problems or kb.diagnostics:
            return DataError.exit_code
        console.print(f"[green]✓[/] {kb_dir}: {kb.counts()['templates']} templates verified")
        return 0
    if args.kb_command == "approve":
        if args.all:
            n = kb.approve_all()
            console.print(f"approved {n} pending entr{'y' if n == 1 else 'ies'}")
        elif args.key:
            entry = kb.approve(args.key)
            console.print(f"approved {type(entry).__name__} ({args.key})")
        else:
            pending = Table(title="Pending validation")
            for col in ("key", "kind", "entry"):
                pending.add_column(col)
            for rec in kb.pending():
                pending.add_row(rec["key"], rec["kind"], rec["entry_id"])
            console.print(pending)
        return 0
    console.print(_summary_table(f"Knowledge base {kb_dir}", kb.counts()))
    return 0


# ----------------------------------------------------------------------------
# wiring
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config value, e.g. --set reasoning.solve.lambda_w=0.05")
    common.add_argument("--log-level", type=str, default=None, help="DEBUG, INFO, WARNING, ...")
    common.add_argument("--kb", type=str, default=None, help="Knowledge base directory (paths.kb_dir)")

    parser = _Parser(prog="edge-rca", description="Logs -> templates -> causal graph -> root cause")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", parents=[common], help="Parse raw logs into structured events")
    p.add_argument("input", nargs="?", help="Raw log file (default: paths.input)")
    p.add_argument("-o", "--output", type=str, default=None)
    p.add_argument("--dry-run", action="store_true", help="Print the route plan; write nothing, call no model")
    p.add_argument("--offline", action="store_true", help="Force the mock model backend")
    p.add_argument("--delta-sim", type=float, default=None, help="L2 similarity threshold")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("reason", parents=[common], help="Learn a causal graph from an events file")
    p.add_argument("events")
    p.add_argument("-o", "--output", type=str, default=None)
    p.add_argument("--no-priors", action="store_true", help="Background penalty everywhere")
    p.add_argument("--window-ms", type=int, default=None)
    p.set_defaults(func=cmd_reason)

    p = sub.add_parser("diagnose", parents=[common], help="Diagnose a causal graph")
    p.add_argument("graph")
    p.add_argument("-o", "--output", type=str, default=None)
    p.add_argument("--offline", action="store_true", help="Force the mock model backend")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("eval", parents=[common], help="Run benchmark suites")
    p.add_argument("--datasets", nargs="+", default=None)
    p.add_argument("--methods", nargs="+", default=None, choices=sorted(METHODS))
    p.add_argument("--levels", nargs="+", type=float, default=None, help=f"Subset of {list(NOISE_LEVELS)}")
    p.add_argument("--cases", type=int, default=None, help="Incidents per synthetic suite")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--manifest", type=str, default=None, help="Dataset manifest (YAML)")
    p.add_argument("--out", type=str, default=None, help="Output directory")
    p.add_argument("--resume", action="store_true", help="Continue from existing checkpoints")
    p.add_argument("--dashboard", action="store_true", help="Live rich dashboard")
    p.add_argument("--stop-after", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kb", help="Manage the knowledge base")
    kb_sub = p.add_subparsers(dest="kb_command", required=True)
    k = kb_sub.add_parser("init", parents=[common], help="Create an empty knowledge base")
    k.add_argument("--from-suite", type=str, default=None, help="Seed with a synthetic suite's validated fixture")
    kb_sub.add_parser("verify", parents=[common], help="Check stored embeddings and schema")
    k = kb_sub.add_parser("approve", parents=[common], help="Validate pending entries")
    k.add_argument("--key", type=str, default=None)
    k.add_argument("--all", action="store_true")
    kb_sub.add_parser("stats", parents=[common], help="Entry counts")
    p.set_defaults(func=cmd_kb)
    return parser


def _flag_overrides(args) -> Dict:
    return {
        "log_level": args.log_level,
        "paths.kb_dir": args.kb,
        "perception.delta_sim": getattr(args, "delta_sim", None),
        "reasoning.window_len_ms": getattr(args, "window_ms", None),
        "eval.datasets": getattr(args, "datasets", None),
        "eval.methods": getattr(args, "methods", None),
        "eval.levels": getattr(args, "levels", None),
        "eval.n_cases": getattr(args, "cases", None),
        "eval.seed": getattr(args, "seed", None),
        "eval.manifest": getattr(args, "manifest", None),
        "eval.dashboard": True if getattr(args, "dashboard", False) else None,
    }


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config, args.overrides, _flag_overrides(args))
        setup_logging(cfg.log_level)
        logger.debug("config hash %s", cfg.config_hash())
        return args.func(args, cfg)
    except EdgeRcaError as e:
        err_console.print(f"[red]error[/] ({type(e).__name__}): {e}")
        return e.exit_code
    except KeyboardInterrupt:
        err_console.print("[yellow]interrupted[/]")
        return 130


if __name__ == "__main__":
    sys.exit(main())
