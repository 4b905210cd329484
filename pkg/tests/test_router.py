import pytest

from edge_rca.clients.mock_client import MockModelClient
from edge_rca.kb.knowledge_base import KnowledgeBase
from edge_rca.perception.cache import TemplateCache
from edge_rca.perception.masking import MaskRuleSet, preprocess
from edge_rca.perception.router import fallback_generate, parse_request, parse_stream, semantic_match
from edge_rca.utils.errors import UsageError
from edge_rca.utils.specs import EventTemplate, RawLog

from conftest import DISK, RECV


def _logs(*lines):
    return [RawLog(line=line, source_id="t", seq=i) for i, line in enumerate(lines)]


def test_cache_evicts_least_recently_used():
    cache = TemplateCache(capacity=2)
    for text in ("a <*>", "b <*>", "c <*>"):
        cache.put(text, EventTemplate.from_text(text, origin="L3"))
    assert "a <*>" not in cache and len(cache) == 2
    cache.get("b <*>")
    cache.put("d <*>", EventTemplate.from_text("d <*>", origin="L3"))
    assert "b <*>" in cache and "c <*>" not in cache
    assert cache.evictions == 2
    assert cache.get("zzz") is None
    assert cache.hit_rate() == pytest.approx(0.5)


def test_cache_rejects_zero_capacity():
    with pytest.raises(ValueError):
        TemplateCache(capacity=0)


def test_cache_refresh_and_clear_do_not_count_as_evictions():
    cache = TemplateCache(capacity=2)
    for text in ("a <*>", "b <*>", "a <*>"):
        cache.put(text, EventTemplate.from_text(text, origin="L3"))
    assert len(cache) == 2 and cache.evictions == 0
    cache.put("c <*>", EventTemplate.from_text("c <*>", origin="L3"))
    assert "b <*>" not in cache and "a <*>" in cache
    cache.clear()
    assert len(cache) == 0 and cache.evictions == 1


def test_semantic_match_on_empty_kb_is_none():
    p = preprocess(_logs("disk ok")[0], MaskRuleSet())
    assert semantic_match(p, KnowledgeBase()) is None
    assert semantic_match(p, None) is None
    with pytest.raises(UsageError):
        semantic_match(p, KnowledgeBase(), delta_sim=1.5)


def test_semantic_match_returns_validated_kb_template(storage_kb):
    p = preprocess(_logs("2024-05-01 10:00:00 received block blk_1 of size 67108864 from /10.0.0.1:50010")[0],
                   MaskRuleSet())
    t = semantic_match(p, storage_kb, 0.85)
    assert t is not None and t.text == RECV and t.origin == "L2" and t.validated


def test_routes_known_then_cached_then_fallback(storage_kb, mock_client):
    logs = _logs(
        "2024-05-01 10:00:00 received block blk_1 of size 10 from /10.0.0.1:50010",
        "2024-05-01 10:00:01 received block blk_2 of size 20 from /10.0.0.2:50010",
        "2024-05-01 10:00:02 namenode is entering safe mode",
        "2024-05-01 10:00:03 namenode is entering safe mode",
    )
    events, stats = parse_stream(logs, TemplateCache(), storage_kb, mock_client)
    assert stats.tiers == ["L2", "L1", "L3", "L1"]
    assert stats.l2_promoted == 1
    assert events[2].template_text == "namenode is entering safe mode"
    assert mock_client.calls == 1
    # the L3 template waits for validation; readers do not see it yet
    assert [r["kind"] for r in storage_kb.pending()] == ["template"]
    assert storage_kb.search_templates("namenode is entering safe mode", 0.99) is None


def test_l2_promotion_can_be_disabled(storage_kb):
    logs = _logs(f"2024-05-01 10:00:00 {DISK}", f"2024-05-01 10:00:01 {DISK}")
    _, stats = parse_stream(logs, TemplateCache(), storage_kb, None, promote_l2=False)
    assert stats.tiers == ["L2", "L2"]


def test_offline_fallback_degrades_to_masked_text(storage_kb):
    offline = MockModelClient(available=False)
    events, stats = parse_stream(_logs("2024-05-01 10:00:00 fan 3 speed 4000 rpm"), TemplateCache(),
                                 storage_kb, offline)
    assert events[0].template_text == "fan <*> speed <*> rpm"
    assert stats.degraded == 1
    assert storage_kb.pending() == []


def test_model_output_is_renormalized():
    p = preprocess(_logs("fan 3 speed")[0], MaskRuleSet())
    req = parse_request(p)
    client = MockModelClient(fixtures={req.request_hash(): "Template: Fan <NUM> Speed\nextra"})
    t = fallback_generate(p, client)
    assert t.text == "fan <*> speed" and not t.degraded


def test_lines_without_timestamp_inherit_previous_plus_one():
    logs = _logs("2024-05-01 10:00:00 start", "continued", "2024-05-01 10:00:05 stop")
    events, stats = parse_stream(logs, TemplateCache(), None, None)
    assert [e.timestamp_ms for e in events] == [1714557600000, 1714557600001, 1714557605000]
    assert stats.tiers == ["L3", "L3", "L3"] and stats.degraded == 3


def test_delta_sim_out_of_range():
    with pytest.raises(UsageError):
        parse_stream([], TemplateCache(), None, None, delta_sim=-0.1)
