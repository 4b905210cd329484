"""
Minimal fixed-depth prefix-tree parser used as a harness comparison.
Lines are grouped by token count, then by their leading tokens, then by
positional token similarity; differing positions become `<*>`.
"""
from typing import Dict, List

from edge_rca.utils.text import PLACEHOLDER


class Node:

    def __init__(self):
        self.child: Dict[str, "Node"] = {}
        self.clusters: List[int] = []


class DrainParser:

    def __init__(self, threshold: float = 0.5, depth: int = 4):
        self.threshold = threshold
        self.depth = depth
        self.root = Node()
        self.templates: List[List[str]] = []

    def _leaf(self, tokens: List[str]) -> Node:
        length = str(len(tokens))
        node = self.root.child.setdefault(length, Node())
        for i in range(min(self.depth - 2, len(tokens))):
            key = PLACEHOLDER if any(ch.isdigit() for ch in tokens[i]) else tokens[i]
            node = node.child.setdefault(key, Node())
        return node

    def process_line(self, text: str) -> int:
        """Cluster id of `text`; the cluster template is generalized in place."""
        tokens = text.split()
        node = self._leaf(tokens)
        best_sim, cid = 0.0, None
        for tmp_cid in node.clusters:
            tpl = self.templates[tmp_cid]
            sim = sum(1 for t, w in zip(tokens, tpl) if t == w) / max(len(tokens), 1)
            if sim >= self.threshold and sim > best_sim:
                best_sim, cid = sim, tmp_cid
        if cid is None:
            cid = len(self.templates)
            self.templates.append(list(tokens))
            node.clusters.append(cid)
        else:
            tpl = self.templates[cid]
            self.templates[cid] = [t if t == w else PLACEHOLDER for t, w in zip(tpl, tokens)]
        return cid

    def template(self, cid: int) -> str:
        return " ".join(self.templates[cid])

    def parse(self, texts: List[str]) -> List[str]:
        """Final cluster template for every line (offline view, Loghub convention)."""
        ids = [self.process_line(t) for t in texts]
        return [self.template(c) for c in ids]

