import logging
from typing import Optional, Sequence, Tuple

from edge_rca.kb.knowledge_base import KnowledgeBase
from edge_rca.reasoning.aggregator import aggregate_windows
from edge_rca.reasoning.dynotears import SolveResult, solve
from edge_rca.reasoning.graph import prune_and_resolve
from edge_rca.reasoning.priors import build_prior_masks
from edge_rca.utils.config import ReasoningConfig
from edge_rca.utils.errors import InsufficientWindows
from edge_rca.utils.specs import CausalGraph, EventMatrix, StructuredEvent

logger = logging.getLogger(__name__)


def learn_graph(events: Sequence[StructuredEvent], kb: Optional[KnowledgeBase],
                cfg: ReasoningConfig, use_priors: Optional[bool] = None
                ) -> Tuple[CausalGraph, EventMatrix, SolveResult]:
    """Events -> windowed counts -> prior masks -> solve -> pruned causal graph."""
    X = aggregate_windows(events, cfg.window_len_ms, cfg.stride_ms)
    if X.m < 2:
        raise InsufficientWindows(f"insufficient windows: {X.m} window(s), need at least 2")
    with_priors = cfg.use_priors if use_priors is None else use_priors
    masks = build_prior_masks(kb if with_priors else None, X.event_order, cfg.penalties_w, cfg.penalties_a)
    result = solve(X, masks, cfg.solve)
    graph = prune_and_resolve(result.W, result.A, cfg.solve, X.event_order, masks, X.labels)
    logger.info("graph: %d nodes, %d intra + %d inter edges (h=%.2e, %d outer, flags=%s)",
                len(graph.nodes), len(graph.intra_edges), len(graph.inter_edges),
                result.h, result.outer_iterations, result.flags or "-")
    return graph, X, result
