"""Benchmark metrics: parsing accuracy, edge rank, RCA / end-to-end accuracy, sparsity."""
from typing import Optional, Sequence, Tuple

from edge_rca.utils.errors import LengthMismatch
from edge_rca.utils.specs import CausalGraph, RcaReport
from edge_rca.utils.text import norm


def parsing_accuracy(predicted: Sequence[str], truth: Sequence[str]) -> float:
    """Fraction of lines whose predicted template equals the ground truth after Norm."""
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} predictions for {len(truth)} ground-truth templates")
    if not truth:
        return 0.0
    return sum(norm(p) == norm(t) for p, t in zip(predicted, truth)) / len(truth)


def correct_lines(predicted: Sequence[str], truth: Sequence[str]) -> int:
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} predictions for {len(truth)} ground-truth templates")
    return sum(norm(p) == norm(t) for p, t in zip(predicted, truth))


def edge_rank(graph: CausalGraph, relation: Tuple[str, str]) -> Tuple[int, bool]:
    """
    1-based rank of the true (src, dst) relation, either lag, among all edges
    ordered by descending |w|. Ties break on node index, then lag.
    A missing relation ranks |edges| + 1.
    """
    index = {n: i for i, n in enumerate(graph.nodes)}
    edges = sorted(graph.edges, key=lambda e: (-abs(e.weight), index.get(e.src, -1), index.get(e.dst, -1), e.lag))
    for rank, e in enumerate(edges, start=1):
        if (e.src, e.dst) == tuple(relation):
            return rank, True
    return len(edges) + 1, False


def avg_rank(ranks: Sequence[int]) -> float:
    return sum(ranks) / len(ranks) if ranks else 0.0


def _same(a: Optional[str], b: Optional[str]) -> bool:
    return (a or "").strip().casefold() == (b or "").strip().casefold()


def rca_and_e2e(report: RcaReport, root_cause: str, action: str) -> Tuple[bool, bool]:
    """Root-cause match, and root-cause AND repair-action match."""
    rca = _same(report.root_cause, root_cause)
    return rca, rca and _same(report.action, action)


def sparsity(edge_counts: Sequence[int]) -> float:
    """Mean number of retained edges per incident graph."""
    return sum(edge_counts) / len(edge_counts) if edge_counts else 0.0
