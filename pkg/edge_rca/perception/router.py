"""
Three-tier template router: L1 exact cache, L2 semantic retrieval against the
knowledge base, L3 model fallback. L3 templates enter the cache immediately
and are queued for KB validation.
"""
import logging
import time
from typing import Iterable, List, Optional, Tuple

from edge_rca.clients.model_client import ModelClient, first_line
from edge_rca.kb.knowledge_base import KnowledgeBase, make_template_entry
from edge_rca.perception.cache import TemplateCache
from edge_rca.perception.masking import MaskRuleSet, preprocess
from edge_rca.prompts import PARSE_PROMPT, load_prompt
from edge_rca.utils.errors import BackendError, EdgeRcaError, UsageError
from edge_rca.utils.specs import (
    ChatMessage,
    EventTemplate,
    ModelRequest,
    ProcessedLog,
    RawLog,
    RouteDecision,
    RouteStats,
    StructuredEvent,
)
from edge_rca.utils.text import PLACEHOLDER, norm

logger = logging.getLogger(__name__)

DEFAULT_DELTA_SIM = 0.85


def exact_match(p: ProcessedLog, cache: TemplateCache) -> Optional[EventTemplate]:
    return cache.get(p.normalized_text)


def semantic_match(p: ProcessedLog, kb: Optional[KnowledgeBase],
                   delta_sim: float = DEFAULT_DELTA_SIM) -> Optional[EventTemplate]:
    """Closest validated KB template if its cosine reaches delta_sim; empty KB -> None."""
    if not 0.0 <= delta_sim <= 1.0:
        raise UsageError(f"delta_sim must lie in [0, 1], got {delta_sim}")
    if kb is None or kb.is_empty():
        return None
    hit = kb.search_templates(p.normalized_text, delta_sim)
    if hit is None:
        return None
    entry, _sim = hit
    return EventTemplate(template_id=entry.template_id, text=entry.text, origin="L2", validated=True)


def parse_request(p: ProcessedLog, max_tokens: int = 256) -> ModelRequest:
    system, user = load_prompt(PARSE_PROMPT)
    return ModelRequest(
        role_prompts=[ChatMessage(role="system", content=system),
                      ChatMessage(role="user", content=user.format(log_line=p.normalized_text))],
        temperature=0.0,
        max_tokens=max_tokens,
        purpose="L3_parse",
    )


def _clean_model_template(text: str) -> str:
    line = first_line(text)
    for prefix in ("template:", "LOG:", "log:"):
        if line.lower().startswith(prefix.lower()):
            line = line[len(prefix):]
    return line.strip().strip("`\"'").strip()


def fallback_generate(p: ProcessedLog, client: Optional[ModelClient],
                      rules: Optional[MaskRuleSet] = None) -> EventTemplate:
    """
    Ask the model to abstract a template, then Norm and re-mask its answer.
    Any backend failure or unusable answer degrades to the normalized text itself.
    """
    rules = rules or MaskRuleSet()
    if client is not None:
        try:
            response = client.complete(parse_request(p))
            candidate = _clean_model_template(response.text)
            if candidate:
                masked, _ = rules.mask(candidate)
                text = norm(masked)
                if text and (text != PLACEHOLDER or p.normalized_text == PLACEHOLDER):
                    return EventTemplate.from_text(text, origin="L3")
            logger.warning("fallback model returned no usable template for seq %d", p.seq)
        except BackendError as e:
            logger.warning("fallback model failed for seq %d: %s", p.seq, e)
    return EventTemplate.from_text(p.normalized_text, origin="L3", degraded=True)


def parse_stream(
    logs: Iterable[RawLog],
    cache: TemplateCache,
    kb: Optional[KnowledgeBase],
    client: Optional[ModelClient],
    delta_sim: float = DEFAULT_DELTA_SIM,
    rules: Optional[MaskRuleSet] = None,
    promote_l2: bool = True,
    enqueue_l3: bool = True,
) -> Tuple[List[StructuredEvent], RouteStats]:
    """
    Route each log L1 -> L2 -> L3 in order.

    Lines without a timestamp inherit the previous line's timestamp + 1 ms.
    Per-line failures are recorded in RouteStats; nothing propagates.
    """
    if not 0.0 <= delta_sim <= 1.0:
        raise UsageError(f"delta_sim must lie in [0, 1], got {delta_sim}")
    rules = rules or MaskRuleSet()
    stats = RouteStats()
    events: List[StructuredEvent] = []
    prev_ts: Optional[int] = None

    for raw in logs:
        start = time.perf_counter()
        # Preprocess (mask + Norm); a bad line is skipped, the stream goes on
        try:
            p = preprocess(raw, rules, fallback_ms=None if prev_ts is None else prev_ts + 1)
        except EdgeRcaError as e:
            stats.skipped.append(f"seq {raw.seq}: {e}")
            logger.warning("skipping %s#%d: %s", raw.source_id, raw.seq, e)
            continue
        prev_ts = p.timestamp_ms

        promoted = False
        error = None
        # L1: exact hit in the cache
        template = exact_match(p, cache)
        tier = "L1"
        if template is None:
            tier = "L2"
            # L2: nearest validated template above delta_sim
            try:
                template = semantic_match(p, kb, delta_sim)
            except EdgeRcaError as e:
                error = f"L2: {e}"
                template = None
            if template is not None and promote_l2:
                cache.put(p.normalized_text, template)
                promoted = True
        if template is None:
            tier = "L3"
            # L3: ask the model, or fall back to the normalized text
            template = fallback_generate(p, client, rules)
            cache.put(p.normalized_text, template)
            # New templates wait in the journal until someone approves them
            if kb is not None and enqueue_l3 and not template.degraded:
                kb.enqueue_validation(make_template_entry(template.text, added_at=p.timestamp_ms, dim=kb.dim))

        events.append(StructuredEvent(
            template_id=template.template_id,
            template_text=template.text,
            timestamp_ms=p.timestamp_ms,
            source_id=p.source_id,
            tier=tier,
            seq=p.seq,
        ))
        stats.record(RouteDecision(
            seq=p.seq,
            tier=tier,
            template_id=template.template_id,
            latency_ms=(time.perf_counter() - start) * 1000.0,
            promoted=promoted,
            degraded=template.degraded,
            error=error,
        ), warnings=len(p.warnings))

    return events, stats
