import logging
from typing import List, Optional

from edge_rca.kb.knowledge_base import KnowledgeBase
from edge_rca.utils.specs import CaseMatch, CausalEvidence

logger = logging.getLogger(__name__)


def evidence_query(ev: CausalEvidence) -> str:
    """Candidate-root texts followed by the labels of events on the key paths, de-duplicated."""
    seen, parts = set(), []
    ids = ev.candidate_ids + [n for p in ev.key_paths for n in p.nodes]
    for tid in ids:
        if tid in seen:
            continue
        seen.add(tid)
        parts.append(ev.labels.get(tid) or tid)
    return " ".join(parts)


def retrieve_cases(ev: CausalEvidence, kb: Optional[KnowledgeBase], top_n: int = 3) -> List[CaseMatch]:
    if kb is None:
        return []
    query = evidence_query(ev)
    if not query.strip():
        return []
    matches = kb.search_cases(query, top_n)
    if not matches:
        logger.info("no validated cases in the knowledge base")
    return matches
