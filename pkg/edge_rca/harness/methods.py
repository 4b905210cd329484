"""
Comparison methods. Each is a (parser, reasoner, diagnoser) triple run over
one incident with fresh per-incident state.
"""
import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

from edge_rca.action.agent import diagnose, rag_only, vanilla_model
from edge_rca.clients.model_client import ModelClient
from edge_rca.harness.drain_baseline import DrainParser
from edge_rca.kb.knowledge_base import KnowledgeBase
from edge_rca.perception.cache import TemplateCache
from edge_rca.perception.masking import MaskRuleSet, preprocess, rules_from_config
from edge_rca.perception.router import fallback_generate, parse_stream
from edge_rca.reasoning.aggregator import aggregate_windows
from edge_rca.reasoning.baselines import pearson_graph
from edge_rca.reasoning.learner import learn_graph
from edge_rca.utils.config import PipelineConfig
from edge_rca.utils.errors import EdgeRcaError, InsufficientWindows, UsageError
from edge_rca.utils.specs import BenchmarkSuite, CausalGraph, ProcessedLog, RawLog, RcaReport, StructuredEvent
from edge_rca.utils.text import template_id_for

logger = logging.getLogger(__name__)

Parser = Literal["router", "drain", "direct"]
Reasoner = Literal["dynotears", "prior_free", "pearson"]
Diagnoser = Literal["agent", "rag_only", "vanilla"]


@dataclass(frozen=True)
class Method:
    name: str
    parser: Parser
    reasoner: Reasoner
    diagnoser: Diagnoser


METHODS: Dict[str, Method] = {m.name: m for m in (
    Method("edge_pipeline", "router", "dynotears", "agent"),
    Method("drain_baseline", "drain", "dynotears", "agent"),
    Method("direct_model", "direct", "dynotears", "agent"),
    Method("prior_free", "router", "prior_free", "agent"),
    Method("pearson", "router", "pearson", "agent"),
    Method("rag_only", "router", "dynotears", "rag_only"),
    Method("vanilla_model", "router", "dynotears", "vanilla"),
)}


def get_method(name: str) -> Method:
    if name not in METHODS:
        raise UsageError(f"unknown method {name!r}; known: {', '.join(METHODS)}")
    return METHODS[name]


def fresh_kb(suite: BenchmarkSuite, dim: int) -> KnowledgeBase:
    kb = KnowledgeBase(path=None, dim=dim)
    kb.add_validated([*suite.kb_templates, *suite.kb_priors, *suite.kb_cases])
    return kb


def _preprocess_all(logs: List[RawLog], rules: MaskRuleSet) -> List[ProcessedLog]:
    out: List[ProcessedLog] = []
    prev: Optional[int] = None
    for raw in logs:
        try:
            p = preprocess(raw, rules, fallback_ms=None if prev is None else prev + 1)
        except EdgeRcaError as e:
            logger.warning("skipping %s#%d: %s", raw.source_id, raw.seq, e)
            continue
        prev = p.timestamp_ms
        out.append(p)
    return out


def _event(p: ProcessedLog, text: str, tier: str) -> StructuredEvent:
    return StructuredEvent(template_id=template_id_for(text), template_text=text, timestamp_ms=p.timestamp_ms,
                           source_id=p.source_id, tier=tier, seq=p.seq)


def parse_logs(method: Method, logs: List[RawLog], kb: KnowledgeBase, client: Optional[ModelClient],
               cfg: PipelineConfig) -> Tuple[List[StructuredEvent], Dict[str, int], float]:
    """Returns (events, route counts, total wall-clock ms)."""
    rules = rules_from_config(cfg.perception)
    start = time.perf_counter()
    if method.parser == "router":
        cache = TemplateCache(cfg.perception.cache_capacity)
        events, stats = parse_stream(logs, cache, kb, client, cfg.perception.delta_sim, rules,
                                     promote_l2=cfg.perception.promote_l2)
        routes = {"L1": stats.l1_hits, "L2": stats.l2_hits, "L3": stats.l3_hits}
    elif method.parser == "drain":
        # Drain never sees the KB or the model
        processed = _preprocess_all(logs, rules)
        texts = DrainParser().parse([p.normalized_text for p in processed])
        events = [_event(p, t, "L1") for p, t in zip(processed, texts)]
        routes = {"L1": 0, "L2": 0, "L3": 0}
    else:
        processed = _preprocess_all(logs, rules)
        # direct_model: every line goes to the model
        events = [_event(p, fallback_generate(p, client, rules).text, "L3") for p in processed]
        routes = {"L1": 0, "L2": 0, "L3": len(events)}
    return events, routes, (time.perf_counter() - start) * 1000.0


def reason(method: Method, events: List[StructuredEvent], kb: KnowledgeBase, cfg: PipelineConfig) -> CausalGraph:
    """Causal graph for one incident; too few windows yields an edgeless graph."""
    try:
        if method.reasoner == "pearson":
            X = aggregate_windows(events, cfg.reasoning.window_len_ms, cfg.reasoning.stride_ms)
            return pearson_graph(X, cfg.reasoning.pearson_threshold)
        graph, _, _ = learn_graph(events, kb, cfg.reasoning, use_priors=method.reasoner == "dynotears")
        return graph
    except InsufficientWindows as err:
        # Too few windows: still report the events we saw, just no edges
        logger.info("no graph: %s", err)
        nodes = list(dict.fromkeys(ev.template_id for ev in events))
        labels = {ev.template_id: ev.template_text for ev in events}
        return CausalGraph(nodes=nodes, labels=labels)


def diagnose_with(method: Method, graph: CausalGraph, kb: KnowledgeBase, client: Optional[ModelClient],
                  cfg: PipelineConfig, config_hash: str = "") -> RcaReport:
    if method.diagnoser == "rag_only":
        return rag_only(graph, kb, cfg.action)
    if method.diagnoser == "vanilla":
        return vanilla_model(graph, client, cfg.action)
    return diagnose(graph, kb, client, cfg.action, config_hash)
