import logging
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from edge_rca.utils.config import SolveConfig
from edge_rca.utils.specs import CausalEdge, CausalGraph, PriorMasks

logger = logging.getLogger(__name__)

# lower is stronger support
_PRIOR, _BACKGROUND, _REVERSED = 0, 1, 2


def _threshold(M: np.ndarray, cfg: SolveConfig) -> np.ndarray:
    out = M.copy()
    theta = cfg.theta_prune
    out[np.abs(out) < theta] = 0.0
    band = (np.abs(out) >= theta) & (np.abs(out) < cfg.damp_band * theta)
    out[band] *= cfg.damp_factor
    out[np.abs(out) < theta] = 0.0
    return out


def _support(i: int, j: int, p_w: set) -> int:
    if (i, j) in p_w:
        return _PRIOR
    if (j, i) in p_w:
        return _REVERSED
    return _BACKGROUND


def _resolve_directions(W: np.ndarray, p_w: set, ratio: float) -> List[Tuple[int, int]]:
    """Drop the weaker direction of near-symmetric bidirectional pairs."""
    dropped = []
    d = W.shape[0]
    for i in range(d):
        for j in range(i + 1, d):
            a, b = abs(W[i, j]), abs(W[j, i])
            if a == 0.0 or b == 0.0 or max(a, b) / min(a, b) >= ratio:
                continue
            # rank: prior support, then larger |w|, then lower (i, j)
            keep_ij = (_support(i, j, p_w), -a, (i, j)) < (_support(j, i, p_w), -b, (j, i))
            loser = (j, i) if keep_ij else (i, j)
            W[loser] = 0.0
            dropped.append(loser)
    return dropped


def _break_cycles(W: np.ndarray) -> List[Tuple[int, int]]:
    """Greedily drop the weakest intra edge that lies on a cycle until the graph is a DAG."""
    dropped = []
    while True:
        g = nx.DiGraph()
        g.add_nodes_from(range(W.shape[0]))
        g.add_edges_from(zip(*np.nonzero(W)))
        if nx.is_directed_acyclic_graph(g):
            return dropped
        on_cycle = []
        for comp in nx.strongly_connected_components(g):
            if len(comp) > 1:
                on_cycle.extend((int(i), int(j)) for i, j in g.subgraph(comp).edges())
        weakest = min(on_cycle, key=lambda e: (abs(W[e]), e))
        W[weakest] = 0.0
        dropped.append(weakest)


def prune_and_resolve(
    W: np.ndarray,
    A: np.ndarray,
    cfg: SolveConfig,
    event_order: Sequence[str],
    masks: Optional[PriorMasks] = None,
    labels: Optional[Dict[str, str]] = None,
) -> CausalGraph:
    """
    Threshold pruning, near-threshold damping, direction resolution for
    bidirectional intra pairs and a final acyclicity repair.
    """
    W = _threshold(np.asarray(W, dtype=np.float64), cfg)
    A = _threshold(np.asarray(A, dtype=np.float64), cfg)
    np.fill_diagonal(W, 0.0)
    p_w = set(map(tuple, masks.p_w)) if masks is not None else set()

    resolved = _resolve_directions(W, p_w, cfg.direction_ratio)
    broken = _break_cycles(W)
    if resolved or broken:
        logger.debug("direction resolution dropped %s; cycle repair dropped %s", resolved, broken)

    nodes = list(event_order)
    intra = [CausalEdge(src=nodes[i], dst=nodes[j], weight=float(W[i, j]), lag=0)
             for i, j in zip(*np.nonzero(W))]
    inter = [CausalEdge(src=nodes[i], dst=nodes[j], weight=float(A[i, j]), lag=1)
             for i, j in zip(*np.nonzero(A))]
    return CausalGraph(
        nodes=nodes,
        labels={n: (labels or {}).get(n, "") for n in nodes},
        intra_edges=intra,
        inter_edges=inter,
        config={
            "theta_prune": cfg.theta_prune,
            "lambda_w": cfg.lambda_w,
            "lambda_a": cfg.lambda_a,
            "damp_factor": cfg.damp_factor,
            "damp_band": cfg.damp_band,
            "direction_ratio": cfg.direction_ratio,
        },
    )

