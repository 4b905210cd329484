from collections import Counter
from typing import Dict, List, Optional, Sequence

import numpy as np

from edge_rca.utils.errors import InsufficientWindows
from edge_rca.utils.specs import EventMatrix, StructuredEvent


def aggregate_windows(events: Sequence[StructuredEvent], window_len_ms: int,
                      stride_ms: Optional[int] = None) -> EventMatrix:
    """
    Count events per (window, template). Windows start at the earliest
    timestamp and advance by `stride_ms` (default: tumbling). Column order is
    the first-appearance order of template ids in `events`.
    """
    if not events:
        raise InsufficientWindows("insufficient windows: no events to aggregate")
    if window_len_ms <= 0:
        raise ValueError("window_len_ms must be positive")
    stride = stride_ms or window_len_ms

    order: List[str] = []
    labels: Dict[str, str] = {}
    for e in events:
        if e.template_id not in labels:
            order.append(e.template_id)
            labels[e.template_id] = e.template_text
    col = {tid: j for j, tid in enumerate(order)}

    ts = np.fromiter((e.timestamp_ms for e in events), dtype=np.int64, count=len(events))
    t0, t1 = int(ts.min()), int(ts.max())
    m = (t1 - t0) // stride + 1
    counts = np.zeros((m, len(order)), dtype=np.int64)

    if stride == window_len_ms:
        rows = (ts - t0) // stride
        cols = np.fromiter((col[e.template_id] for e in events), dtype=np.int64, count=len(events))
        np.add.at(counts, (rows, cols), 1)
    else:
        # overlapping windows: an event lands in every window covering it
        tally: Counter = Counter()
        for e, t in zip(events, ts):
            first = max(0, -(-(int(t) - t0 - window_len_ms + 1) // stride))
            last = (int(t) - t0) // stride
            for r in range(first, min(last, m - 1) + 1):
                tally[(r, col[e.template_id])] += 1
        for (r, j), c in tally.items():
            counts[r, j] = c

    return EventMatrix(
        counts=counts,
        event_order=order,
        labels=labels,
        window_start_ms=[t0 + r * stride for r in range(m)],
        window_len_ms=window_len_ms,
    )
