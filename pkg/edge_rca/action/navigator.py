"""Causal navigator: rank root candidates and extract the heaviest directed paths."""
from collections import defaultdict
from typing import Dict, List, Tuple

import networkx as nx

from edge_rca.utils.specs import CausalEdge, CausalEvidence, CausalGraph, CausalPath, RootCandidate


def root_scores(graph: CausalGraph) -> Dict[str, float]:
    """out-weight minus in-weight over |w| of intra and inter edges."""
    scores: Dict[str, float] = defaultdict(float)
    for e in graph.edges:
        if e.src == e.dst:
            continue
        scores[e.src] += abs(e.weight)
        scores[e.dst] -= abs(e.weight)
    return scores


def _digraph(graph: CausalGraph) -> nx.DiGraph:
    # intra and inter edges collapse onto one arc; keep the stronger |w|
    g = nx.DiGraph()
    g.add_nodes_from(graph.nodes)
    for e in graph.edges:
        if e.src == e.dst:
            continue
        w = abs(e.weight)
        if g.has_edge(e.src, e.dst):
            w = max(w, g[e.src][e.dst]["weight"])
        g.add_edge(e.src, e.dst, weight=w)
    return g


def _paths_from(g: nx.DiGraph, start: str, max_depth: int) -> List[Tuple[List[str], List[float]]]:
    out = []
    for target in sorted(nx.descendants(g, start)):
        for nodes in nx.all_simple_paths(g, source=start, target=target, cutoff=max_depth):
            out.append((nodes, [g[u][v]["weight"] for u, v in zip(nodes, nodes[1:])]))
    return out


def _is_subpath(short: Tuple[str, ...], long: Tuple[str, ...]) -> bool:
    if len(short) >= len(long):
        return False
    k = len(short)
    return any(long[i:i + k] == short for i in range(len(long) - k + 1))


def navigate(graph: CausalGraph, top_k: int = 3, max_depth: int = 4, max_paths: int = 5) -> CausalEvidence:
    if not graph.nodes:
        return CausalEvidence()

    scores = root_scores(graph)
    incident = {n for e in graph.edges for n in (e.src, e.dst)}
    pool = [n for n in graph.nodes if n in incident] or list(graph.nodes)
    ranked = sorted(pool, key=lambda n: (-round(scores.get(n, 0.0), 12), n))
    candidates = [RootCandidate(template_id=n, score=scores.get(n, 0.0)) for n in ranked[:top_k]]
    chosen = {c.template_id for c in candidates}

    g = _digraph(graph)
    found: Dict[Tuple[str, ...], List[float]] = {}
    for c in candidates:
        for nodes, weights in _paths_from(g, c.template_id, max_depth):
            found.setdefault(tuple(nodes), weights)
    maximal = [p for p in found if not any(_is_subpath(p, q) for q in found)]
    paths = []
    for p in maximal:
        score = 1.0
        for w in found[p]:
            score *= w
        paths.append(CausalPath(nodes=list(p), weights=found[p], score=score))
    paths.sort(key=lambda p: (-p.score, p.nodes))

    upstream: List[CausalEdge] = [e for e in graph.edges if e.src in chosen or e.dst in chosen]
    upstream.sort(key=lambda e: (-abs(e.weight), e.src, e.dst, e.lag))

    return CausalEvidence(
        candidate_roots=candidates,
        key_paths=paths[:max_paths],
        upstream_relations=upstream,
        labels=dict(graph.labels),
    )
