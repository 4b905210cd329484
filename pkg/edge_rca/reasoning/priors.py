from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from edge_rca.kb.knowledge_base import KnowledgeBase
from edge_rca.utils.config import PenaltyConfig
from edge_rca.utils.specs import PriorMasks

Pair = Tuple[int, int]


def penalty_mask(d: int, pairs: Iterable[Pair], pen: PenaltyConfig) -> np.ndarray:
    """
    Entry (i, j) is c^prior if (i, j) is supported, else c^rev if only the
    reverse (j, i) is supported, else c^bg.
    """
    support = set(pairs)
    mask = np.full((d, d), pen.bg, dtype=np.float64)
    for i, j in support:
        if (j, i) not in support:
            mask[j, i] = pen.rev
    for i, j in support:
        mask[i, j] = pen.prior
    return mask


def build_prior_masks(kb: Optional[KnowledgeBase], event_order: Sequence[str],
                      pen_w: Optional[PenaltyConfig] = None,
                      pen_a: Optional[PenaltyConfig] = None) -> PriorMasks:
    """Intra (W) and inter (A) penalty masks from the validated priors in `kb`."""
    pen_w = pen_w or PenaltyConfig()
    pen_a = pen_a or PenaltyConfig()
    d = len(event_order)
    p_w, p_a = kb.priors_for(event_order) if kb is not None else ([], [])
    return PriorMasks(
        w_mask=penalty_mask(d, p_w, pen_w),
        a_mask=penalty_mask(d, p_a, pen_a),
        event_order=list(event_order),
        p_w=list(p_w),
        p_a=list(p_a),
    )


def uniform_masks(event_order: Sequence[str], pen_w: Optional[PenaltyConfig] = None,
                  pen_a: Optional[PenaltyConfig] = None) -> PriorMasks:
    """Prior-free masks: every entry c^bg."""
    return build_prior_masks(None, event_order, pen_w, pen_a)
