"""
Benchmark runner: every (method, noise level) cell over every incident of a
suite, checkpointed per incident so an interrupted run resumes where it
stopped. Incidents are independent (fresh cache, KB and client each), which
is what makes a resumed run reproduce a single-shot run exactly.
"""
import json
import logging
import os
import threading
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import psutil
from pydantic import BaseModel, Field
from tqdm import tqdm

from edge_rca.clients.factory import make_client
from edge_rca.harness.methods import Method, diagnose_with, fresh_kb, get_method, parse_logs, reason
from edge_rca.harness.metrics import avg_rank, correct_lines, edge_rank, rca_and_e2e, sparsity
from edge_rca.harness.noise import inject_noise
from edge_rca.utils.config import PipelineConfig
from edge_rca.utils.errors import BudgetExceeded
from edge_rca.utils.specs import BenchmarkCase, BenchmarkSuite, MetricsReport, NoiseConfig

logger = logging.getLogger(__name__)

RESULTS_CSV = "results.csv"
RESULTS_JSONL = "results.jsonl"
RESOURCES_CSV = "resources.csv"


class BenchmarkInterrupted(RuntimeError):
    """Raised when `stop_after` incidents have run; checkpoints are kept."""


class CaseOutcome(BaseModel):
    """Per-incident checkpoint record."""
    case_id: str
    n_lines: int
    correct: int
    rank: Optional[int] = None
    hit: bool = False
    edges: int = 0
    rca_ok: bool = False
    e2e_ok: bool = False
    local: bool = False
    routes: Dict[str, int] = Field(default_factory=dict)
    client_calls: int = 0
    parse_ms: float = 0.0
    config_hash: str = ""


class MemorySampler:
    """
    Samples resident memory of this process and its children on a background
    thread. `check()` raises BudgetExceeded once a sample crossed the budget.
    """
    def __init__(self, budget_mb: float, interval_ms: int = 100):
        self.budget_mb = budget_mb
        self.interval_s = interval_ms / 1000.0
        self.peak_mb = 0.0
        self.cell_peak_mb = 0.0
        self._proc = psutil.Process(os.getpid())
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._warned = False

    def rss_mb(self) -> float:
        rss = self._proc.memory_info().rss
        try:
            for child in self._proc.children(recursive=True):
                rss += child.memory_info().rss
        except psutil.Error:
            pass
        return rss / (1024 * 1024)

    def sample(self) -> float:
        mb = self.rss_mb()
        self.peak_mb = max(self.peak_mb, mb)
        self.cell_peak_mb = max(self.cell_peak_mb, mb)
        if not self._warned and mb > 0.9 * self.budget_mb:
            self._warned = True
            logger.warning("resident memory %.0f MB is above 90%% of the %.0f MB budget", mb, self.budget_mb)
        return mb

    def _run(self) -> None:
        while not self._stop.wait(self.interval_s):
            self.sample()

    def start(self) -> "MemorySampler":
        self.sample()
        self._thread = threading.Thread(target=self._run, name="rss-sampler", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self.sample()

    def new_cell(self) -> None:
        self.cell_peak_mb = self.sample()

    def check(self) -> None:
        if self.peak_mb > self.budget_mb:
            raise BudgetExceeded(f"peak RSS {self.peak_mb:.0f} MB exceeds the {self.budget_mb:.0f} MB budget",
                                 peak_rss_mb=self.peak_mb)

    def __enter__(self) -> "MemorySampler":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def run_case(method: Method, case: BenchmarkCase, suite: BenchmarkSuite, noise: NoiseConfig,
             cfg: PipelineConfig, config_hash: str = "") -> CaseOutcome:
    """One incident end to end with fresh state."""
    kb = fresh_kb(suite, cfg.perception.embedding_dim)
    client = make_client(cfg.client)
    try:
        logs = [raw.model_copy(update={"line": inject_noise(raw.line, noise)}) for raw in case.logs]
        events, routes, parse_ms = parse_logs(method, logs, kb, client, cfg)
        # PA is scored against the clean truth, line by line
        by_seq = {e.seq: e.template_text for e in events}
        predicted = [by_seq.get(raw.seq, "") for raw in case.logs]
        outcome = CaseOutcome(case_id=case.case_id, n_lines=len(case.logs),
                              correct=correct_lines(predicted, case.truth_templates),
                              routes=routes, parse_ms=parse_ms, config_hash=config_hash)
        if not suite.parsing_only and case.root_relation is not None:
            # Graph, rank of the true relation, then the diagnosis itself
            graph = reason(method, events, kb, cfg)
            rank, hit = edge_rank(graph, case.root_relation)
            report = diagnose_with(method, graph, kb, client, cfg, config_hash)
            rca, e2e = rca_and_e2e(report, case.root_cause, case.action)
            outcome = outcome.model_copy(update={
                "rank": rank, "hit": hit, "edges": len(graph.edges),
                "rca_ok": rca, "e2e_ok": e2e, "local": report.decision_path == "local",
            })
        return outcome.model_copy(update={"client_calls": client.calls})
    finally:
        client.close()


def summarize(suite: BenchmarkSuite, method: str, noise: float, seed: int,
              outcomes: Sequence[CaseOutcome], peak_rss_mb: float = 0.0) -> MetricsReport:
    n_logs = sum(o.n_lines for o in outcomes)
    scored = [o for o in outcomes if o.rank is not None]
    routes = {tier: sum(o.routes.get(tier, 0) for o in outcomes) for tier in ("L1", "L2", "L3")}
    return MetricsReport(
        dataset=suite.dataset,
        method=method,
        noise=noise,
        seed=seed,
        n_cases=len(outcomes),
        n_logs=n_logs,
        pa=sum(o.correct for o in outcomes) / n_logs if n_logs else 0.0,
        avg_latency_ms=sum(o.parse_ms for o in outcomes) / n_logs if n_logs else 0.0,
        sparsity=sparsity([o.edges for o in scored]),
        avg_rank=avg_rank([o.rank for o in scored]),
        misses=sum(not o.hit for o in scored),
        rca=sum(o.rca_ok for o in scored) / len(scored) if scored else 0.0,
        e2e=sum(o.e2e_ok for o in scored) / len(scored) if scored else 0.0,
        peak_rss_mb=peak_rss_mb,
        route_counts=routes,
        client_calls=sum(o.client_calls for o in outcomes),
    )


def checkpoint_path(checkpoint_dir: str, dataset: str, method: str, noise: float) -> Path:
    return Path(checkpoint_dir) / f"{dataset}__{method}__{noise:.1f}.jsonl"


def load_checkpoint(path: Path, config_hash: str) -> List[CaseOutcome]:
    if not path.is_file():
        return []
    done = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            done.append(CaseOutcome.model_validate_json(line))
        except ValueError:
            # a kill can leave a torn last line
            logger.warning("ignoring unreadable checkpoint line in %s", path)
            break
    if any(o.config_hash != config_hash for o in done):
        logger.warning("%s was written under another config; starting the cell over", path)
        path.unlink()
        return []
    return done


def _append(path: Path, outcome: CaseOutcome) -> None:
    with path.open("a", encoding="utf-8", newline="\n") as fh:
        fh.write(outcome.model_dump_json() + "\n")


def run_cell(suite: BenchmarkSuite, method: str, level: float, cfg: PipelineConfig,
             checkpoint_dir: Optional[str] = None, budget: Optional[MemorySampler] = None,
             tick: Optional[Callable[[], None]] = None, show_progress: bool = False) -> MetricsReport:
    """All incidents for one (method, noise level) cell, resuming from its checkpoint."""
    config_hash = cfg.config_hash()
    m = get_method(method)
    noise = NoiseConfig(level=level, seed=cfg.eval.seed, profile=suite.profile)
    path = None
    done: Dict[str, CaseOutcome] = {}
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
        path = checkpoint_path(checkpoint_dir, suite.dataset, method, noise.level)
        done = {o.case_id: o for o in load_checkpoint(path, config_hash)}
        if done:
            logger.info("%s @ %.1f: resuming after %d completed incident(s)", method, level, len(done))

    # Skip whatever the checkpoint already has
    todo = [c for c in suite.cases if c.case_id not in done]
    for case in tqdm(todo, desc=f"{suite.dataset}/{method}@{level:.1f}", leave=False, disable=not show_progress):
        if tick is not None:
            tick()
        outcome = run_case(m, case, suite, noise, cfg, config_hash)
        done[case.case_id] = outcome
        if path is not None:
            _append(path, outcome)
        if budget is not None:
            budget.check()

    outcomes = [done[c.case_id] for c in suite.cases]
    peak = budget.cell_peak_mb if budget is not None else 0.0
    return summarize(suite, method, noise.level, cfg.eval.seed, outcomes, peak)


def _cell_worker(args: Tuple) -> MetricsReport:
    suite, method, level, cfg, checkpoint_dir = args
    return run_cell(suite, method, level, cfg, checkpoint_dir)


def run_benchmark(
    suite: BenchmarkSuite,
    cfg: PipelineConfig,
    methods: Optional[Sequence[str]] = None,
    levels: Optional[Sequence[float]] = None,
    checkpoint_dir: Optional[str] = None,
    stop_after: Optional[int] = None,
    on_cell: Optional[Callable[[MetricsReport], None]] = None,
    show_progress: bool = False,
) -> List[MetricsReport]:
    """
    One MetricsReport per (method, level) cell, in method-then-level order.

    Args:
        checkpoint_dir: per-cell JSONL checkpoints; completed incidents found
            there are not rerun.
        stop_after: raise BenchmarkInterrupted after this many incidents
            (simulates a kill; sequential mode only).
        on_cell: called with each finished cell (dashboard hook).

    Raises:
        BudgetExceeded: peak RSS crossed eval.memory_budget_mb. Checkpoints
            and the reports of finished cells (on the exception) are kept.
    """
    methods = list(methods or cfg.eval.methods)
    levels = list(levels if levels is not None else cfg.eval.levels)
    # Fail on a bad method name before any work starts
    for name in methods:
        get_method(name)
    cells = [(name, level) for name in methods for level in levels]
    reports: List[MetricsReport] = []

    with MemorySampler(cfg.eval.memory_budget_mb, cfg.eval.sample_interval_ms) as sampler:
        if cfg.eval.parallel and stop_after is None:
            # One process per cell. stop_after is ignored here
            jobs = [(suite, name, level, cfg, checkpoint_dir) for name, level in cells]
            with ProcessPoolExecutor(max_workers=cfg.eval.workers) as pool:
                for report in pool.map(_cell_worker, jobs):
                    report = report.model_copy(update={"peak_rss_mb": sampler.peak_mb})
                    reports.append(report)
                    if on_cell is not None:
                        on_cell(report)
                    try:
                        sampler.check()
                    except BudgetExceeded as e:
                        # cells still queued are dropped; their checkpoints survive for --resume
                        pool.shutdown(wait=False, cancel_futures=True)
                        e.partial = list(reports)
                        raise
            return reports

        # Sequential
        budget = [stop_after]

        def tick() -> None:
            if budget[0] is None:
                return
            if budget[0] <= 0:
                raise BenchmarkInterrupted(f"stopped after {stop_after} incident(s)")
            budget[0] -= 1

        for name, level in cells:
            sampler.new_cell()
            try:
                report = run_cell(suite, name, level, cfg, checkpoint_dir, sampler, tick, show_progress)
            except BudgetExceeded as e:
                e.partial = reports
                raise
            reports.append(report)
            logger.info("%s @ %.1f: pa=%.3f rca=%.3f e2e=%.3f avg_rank=%.2f", name, level,
                        report.pa, report.rca, report.e2e, report.avg_rank)
            if on_cell is not None:
                on_cell(report)
    return reports


def result_rows(reports: Sequence[MetricsReport], config_hash: str) -> List[Dict]:
    """Long-format deterministic rows {dataset, method, noise, metric, value, seed, config_hash}."""
    rows = []
    for r in reports:
        for metric, value in r.metric_values().items():
            rows.append({"dataset": r.dataset, "method": r.method, "noise": r.noise, "metric": metric,
                         "value": round(float(value), 6), "seed": r.seed, "config_hash": config_hash})
    return rows


def resource_rows(reports: Sequence[MetricsReport], config_hash: str) -> List[Dict]:
    return [{"dataset": r.dataset, "method": r.method, "noise": r.noise, "n_logs": r.n_logs,
             "avg_latency_ms": round(r.avg_latency_ms, 4), "peak_rss_mb": round(r.peak_rss_mb, 1),
             "seed": r.seed, "config_hash": config_hash} for r in reports]


def write_results(reports: Sequence[MetricsReport], out_dir: str, config_hash: str) -> Dict[str, Path]:
    """results.csv / results.jsonl carry deterministic metrics only; timings go to resources.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = result_rows(reports, config_hash)
    columns = ["dataset", "method", "noise", "metric", "value", "seed", "config_hash"]
    paths = {"results": out / RESULTS_CSV, "jsonl": out / RESULTS_JSONL, "resources": out / RESOURCES_CSV}
    pd.DataFrame(rows, columns=columns).to_csv(paths["results"], index=False, float_format="%.6f",
                                                lineterminator="\n")
    with paths["jsonl"].open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    pd.DataFrame(resource_rows(reports, config_hash)).to_csv(paths["resources"], index=False, lineterminator="\n")
    return paths
