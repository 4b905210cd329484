import numpy as np

from edge_rca.reasoning.dynotears import standardize
from edge_rca.utils.specs import CausalEdge, CausalGraph, EventMatrix


def pearson_graph(X: EventMatrix, threshold: float = 0.5) -> CausalGraph:
    """
    Correlation baseline: lag-0 edges i->j (i first seen before j) and lag-1
    edges i->j for every |corr| >= threshold. No acyclicity, no priors.
    """
    nodes = list(X.event_order)
    d = X.d
    intra, inter = [], []
    if X.m >= 2:
        Xs = standardize(X.counts)
        n = Xs.shape[0]
        c0 = (Xs.T @ Xs) / n
        Y, Z = Xs[1:], Xs[:-1]
        Yc = (Y - Y.mean(axis=0)) / np.maximum(Y.std(axis=0), 1e-12)
        Zc = (Z - Z.mean(axis=0)) / np.maximum(Z.std(axis=0), 1e-12)
        c1 = (Zc.T @ Yc) / Y.shape[0]
        for i in range(d):
            for j in range(i + 1, d):
                if abs(c0[i, j]) >= threshold:
                    intra.append(CausalEdge(src=nodes[i], dst=nodes[j], weight=float(c0[i, j]), lag=0))
        for i in range(d):
            for j in range(d):
                if i != j and abs(c1[i, j]) >= threshold:
                    inter.append(CausalEdge(src=nodes[i], dst=nodes[j], weight=float(c1[i, j]), lag=1))
    return CausalGraph(nodes=nodes, labels={k: X.labels.get(k, "") for k in nodes},
                       intra_edges=intra, inter_edges=inter, config={"pearson_threshold": threshold})
